#pragma once

// Convolutional Q-network written out by hand: two same-padded convolutions
// with ReLU, a ReLU hidden layer and a linear head with one output per action.
// Activations are stored pixel-major (HWC) so that both convolutions reduce to
// an im2col matrix times a weight matrix whose inner dimension is contiguous.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "aoiseg/env.hpp"
#include "aoiseg/error.hpp"
#include "aoiseg/rng.hpp"

namespace aoiseg {

struct NetworkShape {
  int rows = 6;
  int cols = 6;
  int in_channels = static_cast<int>(State::kChannels);
  int conv1 = 16;
  int conv2 = 32;
  int hidden = 128;  // 0 connects the flattened features straight to the output
  int kernel = 5;
  int actions = static_cast<int>(kActionCount);
  bool use_conv = true;  // false feeds the raw input to the dense layers

  int pixels() const { return rows * cols; }
  int features() const { return pixels() * (use_conv ? conv2 : in_channels); }
  bool operator==(const NetworkShape&) const = default;

  void validate() const {
    if (rows <= 0 || cols <= 0 || in_channels <= 0 || actions <= 0 || hidden < 0)
      throw InputError("network shape: dimensions must be positive");
    if (use_conv && (conv1 <= 0 || conv2 <= 0 || kernel <= 0 || kernel % 2 == 0))
      throw InputError("network shape: conv channels must be positive and the kernel odd");
  }
};

using QValues = std::array<double, kActionCount>;

/// Per-sample activations kept for backpropagation.
struct ForwardCache {
  std::vector<double> input;  // HWC
  std::vector<double> col1, z1, a1;
  std::vector<double> col2, z2, a2;
  std::vector<double> z3, a3;
  std::vector<double> out;
};

class QNetwork {
 public:
  // Parameter blocks in storage order.
  enum Block : std::size_t { kConv1W, kConv1B, kConv2W, kConv2B, kDenseW, kDenseB, kOutW, kOutB, kBlockCount };

  QNetwork() = default;

  explicit QNetwork(const NetworkShape& shape) : shape_(shape) {
    shape_.validate();
    const std::size_t kk = static_cast<std::size_t>(shape_.kernel) * static_cast<std::size_t>(shape_.kernel);
    const auto c_in = static_cast<std::size_t>(shape_.in_channels);
    const auto c1 = static_cast<std::size_t>(shape_.conv1);
    const auto c2 = static_cast<std::size_t>(shape_.conv2);
    const auto h = static_cast<std::size_t>(shape_.hidden);
    const auto f = static_cast<std::size_t>(shape_.features());
    const auto a = static_cast<std::size_t>(shape_.actions);
    const std::size_t head_in = h > 0 ? h : f;
    std::array<std::size_t, kBlockCount> sizes{};
    if (shape_.use_conv) {
      sizes[kConv1W] = kk * c_in * c1;
      sizes[kConv1B] = c1;
      sizes[kConv2W] = kk * c1 * c2;
      sizes[kConv2B] = c2;
    }
    if (h > 0) {
      sizes[kDenseW] = f * h;
      sizes[kDenseB] = h;
    }
    sizes[kOutW] = head_in * a;
    sizes[kOutB] = a;
    std::size_t offset = 0;
    for (std::size_t b = 0; b < kBlockCount; ++b) {
      offsets_[b] = offset;
      sizes_[b] = sizes[b];
      offset += sizes[b];
    }
    params_.assign(offset, 0.0);
  }

  const NetworkShape& shape() const { return shape_; }
  std::size_t parameter_count() const { return params_.size(); }
  std::span<double> parameters() { return params_; }
  std::span<const double> parameters() const { return params_; }
  std::size_t block_offset(Block b) const { return offsets_[b]; }
  std::size_t block_size(Block b) const { return sizes_[b]; }

  /// He-uniform weights, zero biases.
  void initialize(Rng& rng) {
    const auto kk = static_cast<double>(shape_.kernel * shape_.kernel);
    const double fan_conv1 = kk * shape_.in_channels;
    const double fan_conv2 = kk * shape_.conv1;
    const double fan_dense = static_cast<double>(shape_.features());
    const double fan_out = shape_.hidden > 0 ? static_cast<double>(shape_.hidden) : fan_dense;
    fill_uniform(kConv1W, std::sqrt(6.0 / fan_conv1), rng);
    fill_uniform(kConv2W, std::sqrt(6.0 / fan_conv2), rng);
    fill_uniform(kDenseW, std::sqrt(6.0 / fan_dense), rng);
    fill_uniform(kOutW, std::sqrt(3.0 / fan_out), rng);
    for (Block b : {kConv1B, kConv2B, kDenseB, kOutB})
      std::fill_n(params_.begin() + static_cast<std::ptrdiff_t>(offsets_[b]), sizes_[b], 0.0);
  }

  QValues forward(const State& state) const {
    ForwardCache cache;
    return forward(state, cache);
  }

  QValues forward(const State& state, ForwardCache& cache) const {
    check_input(state);
    to_hwc(state, cache.input);
    const std::vector<double>* features = &cache.input;
    if (shape_.use_conv) {
      conv_forward(cache.input, shape_.in_channels, shape_.conv1, kConv1W, kConv1B, cache.col1, cache.z1, cache.a1);
      conv_forward(cache.a1, shape_.conv1, shape_.conv2, kConv2W, kConv2B, cache.col2, cache.z2, cache.a2);
      features = &cache.a2;
    }
    const std::vector<double>* head_in = features;
    if (shape_.hidden > 0) {
      dense_forward(*features, shape_.hidden, kDenseW, kDenseB, cache.z3);
      cache.a3.resize(cache.z3.size());
      for (std::size_t j = 0; j < cache.z3.size(); ++j) cache.a3[j] = cache.z3[j] > 0.0 ? cache.z3[j] : 0.0;
      head_in = &cache.a3;
    }
    dense_forward(*head_in, shape_.actions, kOutW, kOutB, cache.out);
    QValues q{};
    std::copy_n(cache.out.begin(), std::min<std::size_t>(q.size(), cache.out.size()), q.begin());
    return q;
  }

  /// Accumulates d(sum_j dq[j] * q[j]) / d(params) into `grad`, using the
  /// activations of the matching forward call.
  void backward(const ForwardCache& cache, const QValues& dq, std::span<double> grad) const {
    if (grad.size() != params_.size()) throw InputError("backward: gradient buffer size mismatch");
    const std::vector<double>& features = shape_.use_conv ? cache.a2 : cache.input;
    const std::vector<double>& head_in = shape_.hidden > 0 ? cache.a3 : features;
    std::vector<double> d_head(head_in.size(), 0.0);
    dense_backward(head_in, std::span<const double>(dq.data(), static_cast<std::size_t>(shape_.actions)), kOutW, kOutB,
                   grad, d_head);
    std::vector<double> d_features;
    if (shape_.hidden > 0) {
      for (std::size_t j = 0; j < d_head.size(); ++j)
        if (cache.z3[j] <= 0.0) d_head[j] = 0.0;
      d_features.assign(features.size(), 0.0);
      dense_backward(features, d_head, kDenseW, kDenseB, grad, d_features);
    } else {
      d_features = std::move(d_head);
    }
    if (!shape_.use_conv) return;
    for (std::size_t i = 0; i < d_features.size(); ++i)
      if (cache.z2[i] <= 0.0) d_features[i] = 0.0;
    std::vector<double> d_a1(cache.a1.size(), 0.0);
    conv_backward(cache.col2, d_features, shape_.conv1, shape_.conv2, kConv2W, kConv2B, grad, &d_a1);
    for (std::size_t i = 0; i < d_a1.size(); ++i)
      if (cache.z1[i] <= 0.0) d_a1[i] = 0.0;
    conv_backward(cache.col1, d_a1, shape_.in_channels, shape_.conv1, kConv1W, kConv1B, grad, nullptr);
  }

  void copy_parameters_from(const QNetwork& other) {
    if (!(shape_ == other.shape_)) throw InputError("copy_parameters_from: shape mismatch");
    params_ = other.params_;
  }

  bool operator==(const QNetwork& other) const { return shape_ == other.shape_ && params_ == other.params_; }

 private:
  double* block(Block b) { return params_.data() + offsets_[b]; }
  const double* block(Block b) const { return params_.data() + offsets_[b]; }

  void fill_uniform(Block b, double bound, Rng& rng) {
    double* p = block(b);
    for (std::size_t i = 0; i < sizes_[b]; ++i) p[i] = rng.uniform(-bound, bound);
  }

  void check_input(const State& state) const {
    const auto& dims = state.data.shape;
    if (dims.size() != 3 || dims[0] != static_cast<std::size_t>(shape_.in_channels) ||
        dims[1] != static_cast<std::size_t>(shape_.rows) || dims[2] != static_cast<std::size_t>(shape_.cols))
      throw InputError("forward: state shape does not match the network");
  }

  void to_hwc(const State& state, std::vector<double>& out) const {
    const auto hw = static_cast<std::size_t>(shape_.pixels());
    const auto c = static_cast<std::size_t>(shape_.in_channels);
    out.resize(hw * c);
    const auto& v = state.data.values;
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t p = 0; p < hw; ++p) out[p * c + ch] = v[ch * hw + p];
  }

  // col[pixel][(ky * K + kx) * c_in + ch], zero outside the grid.
  void im2col(const std::vector<double>& in, int c_in, std::vector<double>& col) const {
    const int k = shape_.kernel;
    const int pad = k / 2;
    const auto width = static_cast<std::size_t>(k * k * c_in);
    col.assign(static_cast<std::size_t>(shape_.pixels()) * width, 0.0);
    for (int r = 0; r < shape_.rows; ++r) {
      for (int c = 0; c < shape_.cols; ++c) {
        double* row = col.data() + static_cast<std::size_t>(r * shape_.cols + c) * width;
        for (int ky = 0; ky < k; ++ky) {
          const int rr = r + ky - pad;
          if (rr < 0 || rr >= shape_.rows) continue;
          for (int kx = 0; kx < k; ++kx) {
            const int cc = c + kx - pad;
            if (cc < 0 || cc >= shape_.cols) continue;
            std::memcpy(row + static_cast<std::size_t>((ky * k + kx) * c_in),
                        in.data() + static_cast<std::size_t>(rr * shape_.cols + cc) * static_cast<std::size_t>(c_in),
                        static_cast<std::size_t>(c_in) * sizeof(double));
          }
        }
      }
    }
  }

  void conv_forward(const std::vector<double>& in, int c_in, int c_out, Block wb, Block bb, std::vector<double>& col,
                    std::vector<double>& z, std::vector<double>& a) const {
    im2col(in, c_in, col);
    const auto hw = static_cast<std::size_t>(shape_.pixels());
    const auto width = static_cast<std::size_t>(shape_.kernel * shape_.kernel * c_in);
    const auto n = static_cast<std::size_t>(c_out);
    const double* w = block(wb);
    const double* bias = block(bb);
    z.resize(hw * n);
    a.resize(hw * n);
    for (std::size_t p = 0; p < hw; ++p) {
      double* zp = z.data() + p * n;
      std::copy_n(bias, n, zp);
      const double* cp = col.data() + p * width;
      for (std::size_t i = 0; i < width; ++i) {
        const double x = cp[i];
        if (x == 0.0) continue;
        const double* wi = w + i * n;
        for (std::size_t j = 0; j < n; ++j) zp[j] += x * wi[j];
      }
      double* ap = a.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) ap[j] = zp[j] > 0.0 ? zp[j] : 0.0;
    }
  }

  // d_out is d(loss)/dz for this layer (ReLU mask already applied).
  void conv_backward(const std::vector<double>& col, const std::vector<double>& d_out, int c_in, int c_out, Block wb,
                     Block bb, std::span<double> grad, std::vector<double>* d_in) const {
    const auto hw = static_cast<std::size_t>(shape_.pixels());
    const int k = shape_.kernel;
    const int pad = k / 2;
    const auto width = static_cast<std::size_t>(k * k * c_in);
    const auto n = static_cast<std::size_t>(c_out);
    const double* w = block(wb);
    double* gw = grad.data() + offsets_[wb];
    double* gb = grad.data() + offsets_[bb];
    std::vector<double> d_col(d_in ? width : 0);
    for (std::size_t p = 0; p < hw; ++p) {
      const double* dp = d_out.data() + p * n;
      bool any = false;
      for (std::size_t j = 0; j < n; ++j) {
        gb[j] += dp[j];
        any = any || dp[j] != 0.0;
      }
      if (!any) continue;
      const double* cp = col.data() + p * width;
      for (std::size_t i = 0; i < width; ++i) {
        const double x = cp[i];
        if (x == 0.0) continue;
        double* gwi = gw + i * n;
        for (std::size_t j = 0; j < n; ++j) gwi[j] += x * dp[j];
      }
      if (!d_in) continue;
      for (std::size_t i = 0; i < width; ++i) {
        const double* wi = w + i * n;
        double acc = 0.0;
#pragma omp simd reduction(+ : acc)
        for (std::size_t j = 0; j < n; ++j) acc += wi[j] * dp[j];
        d_col[i] = acc;
      }
      // col2im for this output pixel.
      const int r = static_cast<int>(p) / shape_.cols;
      const int c = static_cast<int>(p) % shape_.cols;
      for (int ky = 0; ky < k; ++ky) {
        const int rr = r + ky - pad;
        if (rr < 0 || rr >= shape_.rows) continue;
        for (int kx = 0; kx < k; ++kx) {
          const int cc = c + kx - pad;
          if (cc < 0 || cc >= shape_.cols) continue;
          double* dst = d_in->data() + static_cast<std::size_t>(rr * shape_.cols + cc) * static_cast<std::size_t>(c_in);
          const double* src = d_col.data() + static_cast<std::size_t>((ky * k + kx) * c_in);
          for (int ch = 0; ch < c_in; ++ch) dst[ch] += src[ch];
        }
      }
    }
  }

  // z[j] = b[j] + sum_i in[i] * W[i][j]
  void dense_forward(const std::vector<double>& in, int units, Block wb, Block bb, std::vector<double>& z) const {
    const auto n = static_cast<std::size_t>(units);
    const double* w = block(wb);
    z.assign(block(bb), block(bb) + n);
    for (std::size_t i = 0; i < in.size(); ++i) {
      const double x = in[i];
      if (x == 0.0) continue;
      const double* wi = w + i * n;
      for (std::size_t j = 0; j < n; ++j) z[j] += x * wi[j];
    }
  }

  void dense_backward(const std::vector<double>& in, std::span<const double> d_out, Block wb, Block bb,
                      std::span<double> grad, std::vector<double>& d_in) const {
    const std::size_t n = d_out.size();
    const double* w = block(wb);
    double* gw = grad.data() + offsets_[wb];
    double* gb = grad.data() + offsets_[bb];
    for (std::size_t j = 0; j < n; ++j) gb[j] += d_out[j];
    for (std::size_t i = 0; i < in.size(); ++i) {
      const double* wi = w + i * n;
      double acc = 0.0;
#pragma omp simd reduction(+ : acc)
      for (std::size_t j = 0; j < n; ++j) acc += wi[j] * d_out[j];
      d_in[i] += acc;
      const double x = in[i];
      if (x == 0.0) continue;
      double* gwi = gw + i * n;
      for (std::size_t j = 0; j < n; ++j) gwi[j] += x * d_out[j];
    }
  }

  NetworkShape shape_;
  std::vector<double> params_;
  std::array<std::size_t, kBlockCount> offsets_{};
  std::array<std::size_t, kBlockCount> sizes_{};
};

/// RMSprop: v <- rho v + (1 - rho) g^2, theta <- theta - lr g / (sqrt(v) + eps).
class RmsProp {
 public:
  RmsProp() = default;
  RmsProp(std::size_t n, double decay = 0.99, double epsilon = 1e-8) : decay_(decay), epsilon_(epsilon), sq_(n, 0.0) {}

  void step(std::span<double> params, std::span<const double> grad, double lr) {
    if (params.size() != sq_.size() || grad.size() != sq_.size()) throw InputError("RmsProp: size mismatch");
    for (std::size_t i = 0; i < sq_.size(); ++i) {
      sq_[i] = decay_ * sq_[i] + (1.0 - decay_) * grad[i] * grad[i];
      params[i] -= lr * grad[i] / (std::sqrt(sq_[i]) + epsilon_);
    }
  }

 private:
  double decay_ = 0.99;
  double epsilon_ = 1e-8;
  std::vector<double> sq_;
};

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;  // perturbation crossed a ReLU kink
};

namespace detail {

inline std::vector<std::uint8_t> relu_pattern(const ForwardCache& c) {
  std::vector<std::uint8_t> out;
  out.reserve(c.z1.size() + c.z2.size() + c.z3.size());
  for (const auto* v : {&c.z1, &c.z2, &c.z3})
    for (double x : *v) out.push_back(x > 0.0 ? 1 : 0);
  return out;
}

}  // namespace detail

/// Compares analytic gradients of q[action] with central differences on up to
/// `per_block` randomly chosen parameters of every block. The step is
/// h * max(1, |theta|). The relative error is |analytic - numeric| /
/// max(|analytic|, |numeric|, 1e-6); the floor keeps round-off on vanishing
/// gradients from dominating. Parameters whose perturbation flips any ReLU are
/// skipped because the function is not differentiable across the kink.
inline GradCheckResult grad_check(QNetwork net, const State& state, std::size_t action, Rng& rng,
                                  std::size_t per_block = 32, double h = 1e-5) {
  GradCheckResult result;
  ForwardCache cache;
  net.forward(state, cache);
  std::vector<double> grad(net.parameter_count(), 0.0);
  QValues dq{};
  dq[action] = 1.0;
  net.backward(cache, dq, grad);
  const auto base_pattern = detail::relu_pattern(cache);
  auto params = net.parameters();
  for (std::size_t b = 0; b < QNetwork::kBlockCount; ++b) {
    const auto block = static_cast<QNetwork::Block>(b);
    const std::size_t size = net.block_size(block);
    if (size == 0) continue;
    const std::size_t count = std::min(per_block, size);
    for (std::size_t s = 0; s < count; ++s) {
      const std::size_t idx = net.block_offset(block) + (count == size ? s : rng.uniform(size));
      const double original = params[idx];
      const double step = h * std::max(1.0, std::abs(original));
      ForwardCache plus_cache, minus_cache;
      params[idx] = original + step;
      const double plus = net.forward(state, plus_cache)[action];
      params[idx] = original - step;
      const double minus = net.forward(state, minus_cache)[action];
      params[idx] = original;
      if (detail::relu_pattern(plus_cache) != base_pattern || detail::relu_pattern(minus_cache) != base_pattern) {
        ++result.skipped;
        continue;
      }
      const double numeric = (plus - minus) / (2.0 * step);
      const double analytic = grad[idx];
      const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
      result.max_relative_error = std::max(result.max_relative_error, std::abs(analytic - numeric) / denom);
      ++result.checked;
    }
  }
  return result;
}

// Checkpoint layout, all little-endian:
//   8 bytes magic "AOIQNET\0", u32 version, 9 x u32 shape fields
//   (rows, cols, in_channels, conv1, conv2, hidden, kernel, actions, use_conv),
//   u64 parameter count, then that many IEEE-754 binary64 values.
inline constexpr std::array<char, 8> kCheckpointMagic = {'A', 'O', 'I', 'Q', 'N', 'E', 'T', '\0'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

inline void put_le(std::string& out, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline std::uint64_t get_le(const std::string& in, std::size_t& pos, int bytes) {
  if (pos + static_cast<std::size_t>(bytes) > in.size()) throw IoError("checkpoint truncated");
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  pos += static_cast<std::size_t>(bytes);
  return v;
}

}  // namespace detail

inline std::string serialize_checkpoint(const QNetwork& net) {
  std::string out(kCheckpointMagic.begin(), kCheckpointMagic.end());
  detail::put_le(out, kCheckpointVersion, 4);
  const NetworkShape& s = net.shape();
  for (int v : {s.rows, s.cols, s.in_channels, s.conv1, s.conv2, s.hidden, s.kernel, s.actions, s.use_conv ? 1 : 0})
    detail::put_le(out, static_cast<std::uint32_t>(v), 4);
  detail::put_le(out, net.parameter_count(), 8);
  for (double p : net.parameters()) detail::put_le(out, std::bit_cast<std::uint64_t>(p), 8);
  return out;
}

inline QNetwork deserialize_checkpoint(const std::string& bytes) {
  if (bytes.size() < kCheckpointMagic.size() ||
      !std::equal(kCheckpointMagic.begin(), kCheckpointMagic.end(), bytes.begin()))
    throw IoError("not a Q-network checkpoint (bad magic)");
  std::size_t pos = kCheckpointMagic.size();
  const auto version = detail::get_le(bytes, pos, 4);
  if (version != kCheckpointVersion) throw IoError("unsupported checkpoint version " + std::to_string(version));
  std::array<int, 9> f{};
  for (int& v : f) v = static_cast<int>(detail::get_le(bytes, pos, 4));
  NetworkShape shape{f[0], f[1], f[2], f[3], f[4], f[5], f[6], f[7], f[8] != 0};
  QNetwork net(shape);
  const auto count = detail::get_le(bytes, pos, 8);
  if (count != net.parameter_count()) throw IoError("checkpoint parameter count does not match its shape");
  for (double& p : net.parameters()) p = std::bit_cast<double>(detail::get_le(bytes, pos, 8));
  if (pos != bytes.size()) throw IoError("trailing bytes after checkpoint");
  return net;
}

inline void save_checkpoint(const QNetwork& net, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  const std::string bytes = serialize_checkpoint(net);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path);
}

inline QNetwork load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

}  // namespace aoiseg

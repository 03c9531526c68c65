#pragma once

// Double-DQN over the segmentation MDP: epsilon-greedy acting, uniform
// experience replay, a periodically synced target network and RMSprop.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "aoiseg/env.hpp"
#include "aoiseg/error.hpp"
#include "aoiseg/metrics.hpp"
#include "aoiseg/nn.hpp"
#include "aoiseg/rng.hpp"

namespace aoiseg {

/// Fixed-capacity ring of transitions; once full, each push evicts the oldest.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw InputError("replay buffer capacity must be positive");
    store_.reserve(std::min<std::size_t>(capacity, 1 << 16));
  }

  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return store_.size(); }
  bool empty() const { return store_.empty(); }

  void push(Transition t) {
    if (store_.size() < capacity_) {
      store_.push_back(std::move(t));
    } else {
      store_[head_] = std::move(t);
    }
    head_ = (head_ + 1) % capacity_;
  }

  /// Position 0 is the oldest stored transition.
  const Transition& at(std::size_t i) const {
    if (i >= store_.size()) throw InputError("replay buffer index out of range");
    return store_.size() < capacity_ ? store_[i] : store_[(head_ + i) % capacity_];
  }

  /// `count` distinct transitions chosen uniformly (partial Fisher-Yates).
  std::vector<const Transition*> sample(std::size_t count, Rng& rng) const {
    if (count > store_.size()) throw InputError("replay buffer: batch larger than stored transitions");
    scratch_.resize(store_.size());
    for (std::size_t i = 0; i < scratch_.size(); ++i) scratch_[i] = i;
    std::vector<const Transition*> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
      const std::size_t j = i + rng.uniform(scratch_.size() - i);
      std::swap(scratch_[i], scratch_[j]);
      out.push_back(&store_[scratch_[i]]);
    }
    return out;
  }

 private:
  std::size_t capacity_;
  std::size_t head_ = 0;
  std::vector<Transition> store_;
  mutable std::vector<std::size_t> scratch_;
};

/// Index of the largest legal value; ties go to the lowest index.
inline std::size_t masked_argmax(const QValues& q, const ActionMask& mask) {
  std::size_t best = kActionCount;
  for (std::size_t i = 0; i < kActionCount; ++i)
    if (mask[i] && (best == kActionCount || q[i] > q[best])) best = i;
  if (best == kActionCount) throw ContractViolation("no legal action");
  return best;
}

inline Action select_action(const QValues& q, const ActionMask& mask, double epsilon, Rng& rng) {
  if (std::none_of(mask.begin(), mask.end(), [](bool b) { return b; }))
    throw ContractViolation("select_action: no legal action");
  if (epsilon > 0.0 && rng.uniform01() < epsilon) {
    const auto legal = static_cast<std::size_t>(std::count(mask.begin(), mask.end(), true));
    std::size_t pick = rng.uniform(legal);
    for (std::size_t i = 0; i < kActionCount; ++i)
      if (mask[i] && pick-- == 0) return action_from_index(i);
  }
  return action_from_index(masked_argmax(q, mask));
}

/// r + gamma * Q_target(s', argmax over legal a' of Q_online(s', a')); r when terminal.
inline double td_target(const Transition& t, const QNetwork& online, const QNetwork& target, double gamma) {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw InputError("td_target: gamma must lie in [0, 1)");
  if (t.terminal || gamma == 0.0) return t.reward;
  const std::size_t a = masked_argmax(online.forward(t.next_state), t.next_legal);
  return t.reward + gamma * target.forward(t.next_state)[a];
}

enum class TdLoss { Squared, Huber };

struct TrainConfig {
  int episodes = 500;
  double lr = 1e-4;
  double lr_decay = 0.995;  // multiplied into lr after every episode
  double gamma = 0.9;
  double epsilon_start = 1.0;
  double epsilon_end = 0.05;
  double epsilon_decay_fraction = 0.5;  // share of episodes over which epsilon falls linearly
  int batch_size = 32;
  int buffer_capacity = 10000;
  int target_sync_steps = 1000;
  int train_every = 1;  // environment steps per gradient step
  std::uint64_t seed = 3047;
  int traversals = 8;
  RewardWeights weights;
  int conv1 = 16;
  int conv2 = 32;
  int hidden = 128;
  double rms_decay = 0.99;
  double rms_epsilon = 1e-8;
  TdLoss loss = TdLoss::Squared;
  double huber_delta = 1.0;
  bool stop_when_idle = false;

  void validate() const {
    auto fail = [](const std::string& what) { throw ConfigError("train config: " + what); };
    if (episodes < 0) fail("episodes must be non-negative");
    if (!(lr > 0.0) || !std::isfinite(lr)) fail("lr must be positive");
    if (!(lr_decay > 0.0 && lr_decay <= 1.0)) fail("lr_decay must lie in (0, 1]");
    if (!(gamma >= 0.0 && gamma < 1.0)) fail("gamma must lie in [0, 1)");
    if (!(epsilon_start >= 0.0 && epsilon_start <= 1.0 && epsilon_end >= 0.0 && epsilon_end <= 1.0))
      fail("epsilon bounds must lie in [0, 1]");
    if (!(epsilon_decay_fraction > 0.0 && epsilon_decay_fraction <= 1.0))
      fail("epsilon_decay_fraction must lie in (0, 1]");
    if (batch_size < 1) fail("batch_size must be at least 1");
    if (buffer_capacity < batch_size) fail("buffer_capacity must be at least batch_size");
    if (target_sync_steps < 1) fail("target_sync_steps must be at least 1");
    if (train_every < 1) fail("train_every must be at least 1");
    if (traversals < 1) fail("traversals must be at least 1");
    if (conv1 < 1 || conv2 < 1 || hidden < 0) fail("layer sizes must be positive");
    if (!(rms_decay >= 0.0 && rms_decay < 1.0) || !(rms_epsilon > 0.0)) fail("RMSprop constants out of range");
    if (!(huber_delta > 0.0)) fail("huber_delta must be positive");
    try {
      weights.validate();
    } catch (const InputError& e) {
      fail(e.what());
    }
  }

  double epsilon_at(int episode) const {
    const double span = std::max(1.0, epsilon_decay_fraction * episodes);
    const double f = static_cast<double>(episode) / span;
    if (f >= 1.0) return epsilon_end;
    return epsilon_start + (epsilon_end - epsilon_start) * f;
  }

  NetworkShape network_shape(int rows, int cols) const {
    NetworkShape s;
    s.rows = rows;
    s.cols = cols;
    s.conv1 = conv1;
    s.conv2 = conv2;
    s.hidden = hidden;
    return s;
  }
};

/// Online network, target network and optimizer state.
class DdqnLearner {
 public:
  DdqnLearner(const NetworkShape& shape, const TrainConfig& cfg, Rng& init_rng)
      : cfg_(cfg), online_(shape), target_(shape), opt_(online_.parameter_count(), cfg.rms_decay, cfg.rms_epsilon),
        grad_(online_.parameter_count(), 0.0), lr_(cfg.lr) {
    online_.initialize(init_rng);
    target_.copy_parameters_from(online_);
  }

  const QNetwork& online() const { return online_; }
  const QNetwork& target() const { return target_; }
  QNetwork& online() { return online_; }
  double learning_rate() const { return lr_; }
  void decay_learning_rate() { lr_ *= cfg_.lr_decay; }
  std::uint64_t gradient_steps() const { return steps_; }

  void sync_target() { target_.copy_parameters_from(online_); }

  /// Batch loss against fixed targets, without updating.
  double loss(std::span<const Transition* const> batch, std::span<const double> targets) const {
    double total = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const double err = online_.forward(batch[i]->state)[action_index(batch[i]->action)] - targets[i];
      total += elementwise_loss(err);
    }
    return total / static_cast<double>(batch.size());
  }

  std::vector<double> targets(std::span<const Transition* const> batch) const {
    std::vector<double> y;
    y.reserve(batch.size());
    for (const Transition* t : batch) y.push_back(td_target(*t, online_, target_, cfg_.gamma));
    return y;
  }

  /// One RMSprop step on the mean TD loss against `targets`; returns the pre-step loss.
  double update(std::span<const Transition* const> batch, std::span<const double> targets) {
    if (batch.empty() || batch.size() != targets.size()) throw InputError("update: batch/target size mismatch");
    std::fill(grad_.begin(), grad_.end(), 0.0);
    const double scale = 1.0 / static_cast<double>(batch.size());
    double total = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const std::size_t a = action_index(batch[i]->action);
      const QValues q = online_.forward(batch[i]->state, cache_);
      const double err = q[a] - targets[i];
      total += elementwise_loss(err);
      QValues dq{};
      dq[a] = elementwise_grad(err) * scale;
      online_.backward(cache_, dq, grad_);
    }
    const double mean = total * scale;
    if (!std::isfinite(mean)) {
      std::ostringstream msg;
      msg << "training diverged: non-finite TD loss after " << steps_ << " gradient steps (lr " << lr_ << ")";
      throw TrainingError(msg.str());
    }
    opt_.step(online_.parameters(), grad_, lr_);
    ++steps_;
    if (steps_ % static_cast<std::uint64_t>(cfg_.target_sync_steps) == 0) sync_target();
    return mean;
  }

  double learn(std::span<const Transition* const> batch) {
    const std::vector<double> y = targets(batch);
    return update(batch, y);
  }

 private:
  double elementwise_loss(double err) const {
    if (cfg_.loss == TdLoss::Squared) return err * err;
    const double a = std::abs(err);
    return a <= cfg_.huber_delta ? 0.5 * err * err : cfg_.huber_delta * (a - 0.5 * cfg_.huber_delta);
  }
  double elementwise_grad(double err) const {
    if (cfg_.loss == TdLoss::Squared) return 2.0 * err;
    return std::clamp(err, -cfg_.huber_delta, cfg_.huber_delta);
  }

  TrainConfig cfg_;
  QNetwork online_;
  QNetwork target_;
  RmsProp opt_;
  std::vector<double> grad_;
  ForwardCache cache_;
  double lr_;
  std::uint64_t steps_ = 0;
};

struct CurvePoint {
  int episode = 0;
  double total_return = 0.0;
  std::optional<double> fmi;  // against ground truth, when known
};

struct TrainResult {
  QNetwork net;
  SegmentationMap best_map;  // highest-return map among all episodes and the final greedy rollout
  double best_return = 0.0;
  SegmentationMap greedy_map;
  std::vector<CurvePoint> curve;
  std::uint64_t gradient_steps = 0;
  std::uint64_t env_steps = 0;
};

/// Every episode starts from the problem's initial map. All random streams
/// derive from cfg.seed, so the result is a pure function of the inputs.
inline TrainResult train(const SegmentationProblem& problem, const TrainConfig& cfg,
                         const std::optional<SegmentationMap>& truth = std::nullopt) {
  cfg.validate();
  const GridShape shape = problem.initial.shape();
  Rng root(cfg.seed);
  Rng init_rng = root.split(1);
  Rng act_rng = root.split(2);
  Rng replay_rng = root.split(3);
  DdqnLearner learner(cfg.network_shape(shape.rows, shape.cols), cfg, init_rng);
  ReplayBuffer buffer(static_cast<std::size_t>(cfg.buffer_capacity));
  SegmentationEnv env(problem, cfg.weights);
  const EpisodeOptions options{cfg.traversals, cfg.stop_when_idle};

  // Episode returns come from the endpoint objectives, which the rewards
  // telescope to. Summed step rewards carry rounding noise that would
  // otherwise decide between maps of equal return.
  const auto objective = [&] {
    return -cfg.weights.trajectory * static_cast<double>(env.switches()) + cfg.weights.road * env.road_similarity();
  };
  const double initial_objective = objective();

  TrainResult result;
  result.best_map = env.map();
  result.best_return = 0.0;
  std::uint64_t env_steps = 0;

  auto learn_hook = [&](Transition&& t) {
    buffer.push(std::move(t));
    ++env_steps;
    if (buffer.size() >= static_cast<std::size_t>(cfg.batch_size) &&
        env_steps % static_cast<std::uint64_t>(cfg.train_every) == 0) {
      const auto batch = buffer.sample(static_cast<std::size_t>(cfg.batch_size), replay_rng);
      learner.learn(batch);
    }
  };

  for (int episode = 0; episode < cfg.episodes; ++episode) {
    const double epsilon = cfg.epsilon_at(episode);
    env.reset();
    auto policy = [&](const State& s, const ActionMask& mask) {
      return select_action(learner.online().forward(s), mask, epsilon, act_rng);
    };
    run_episode(env, policy, options, learn_hook);
    const double episode_return = objective() - initial_objective;
    CurvePoint point{episode, episode_return, std::nullopt};
    if (truth) point.fmi = fmi(*truth, env.map());
    result.curve.push_back(point);
    if (episode_return > result.best_return) {
      result.best_return = episode_return;
      result.best_map = env.map();
    }
    learner.decay_learning_rate();
  }

  env.reset();
  result.greedy_map = env.map();
  if (cfg.episodes > 0) {
    auto greedy = [&](const State& s, const ActionMask& mask) {
      return action_from_index(masked_argmax(learner.online().forward(s), mask));
    };
    run_episode(env, greedy, options, [](Transition&&) {});
    result.greedy_map = env.map();
    if (objective() - initial_objective >= result.best_return) {
      result.best_return = objective() - initial_objective;
      result.best_map = env.map();
    }
  }
  result.net = learner.online();
  result.gradient_steps = learner.gradient_steps();
  result.env_steps = env_steps;
  return result;
}

/// episode,return,fmi with an empty fmi column when no ground truth was given.
inline std::string curve_csv(std::span<const CurvePoint> curve) {
  std::ostringstream out;
  out.precision(17);
  out << "episode,return,fmi\n";
  for (const CurvePoint& p : curve) {
    out << p.episode << ',' << p.total_return << ',';
    if (p.fmi) out << *p.fmi;
    out << '\n';
  }
  return out.str();
}

}  // namespace aoiseg

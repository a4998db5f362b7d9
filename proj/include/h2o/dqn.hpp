#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "h2o/domain.hpp"

namespace h2o::dqn {

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

class EmptyMemory : public Error {
 public:
  using Error::Error;
};

/// Fully connected Q-network: rectifier on hidden layers, identity on the output.
/// Weights are stored row-major, one (out x in) matrix per layer.
class QNetwork {
 public:
  QNetwork() = default;

  /// `dims` = {input, hidden..., output}; at least {input, output}.
  explicit QNetwork(std::vector<int> dims) : dims_(std::move(dims)) {
    if (dims_.size() < 2) throw DimensionMismatch("network needs an input and an output layer");
    for (int d : dims_)
      if (d < 1) throw DimensionMismatch("layer width must be positive");
    for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
      weights_.emplace_back(static_cast<std::size_t>(dims_[l] * dims_[l + 1]), 0.0);
      biases_.emplace_back(static_cast<std::size_t>(dims_[l + 1]), 0.0);
    }
  }

  template <typename Rng>
  void init_uniform(Rng& rng, double bound) {
    std::uniform_real_distribution<double> u(-bound, bound);
    for (auto& w : weights_)
      for (auto& x : w) x = u(rng);
    for (auto& b : biases_)
      for (auto& x : b) x = u(rng);
  }

  int input_dim() const { return dims_.front(); }
  int action_dim() const { return dims_.back(); }
  const std::vector<int>& dims() const { return dims_; }
  std::size_t layer_count() const { return weights_.size(); }
  std::vector<double>& weights(std::size_t l) { return weights_[l]; }
  const std::vector<double>& weights(std::size_t l) const { return weights_[l]; }
  std::vector<double>& biases(std::size_t l) { return biases_[l]; }
  const std::vector<double>& biases(std::size_t l) const { return biases_[l]; }

  std::vector<double> forward(std::span<const double> x) const {
    std::vector<std::vector<double>> acts;
    return forward_cached(x, acts);
  }

  /// Forward pass keeping every layer's post-activation output (acts[0] = input).
  std::vector<double> forward_cached(std::span<const double> x, std::vector<std::vector<double>>& acts) const {
    if (static_cast<int>(x.size()) != input_dim())
      throw DimensionMismatch("expected " + std::to_string(input_dim()) + " features, got " +
                              std::to_string(x.size()));
    acts.assign(1, std::vector<double>(x.begin(), x.end()));
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      const auto in = static_cast<std::size_t>(dims_[l]);
      const auto out = static_cast<std::size_t>(dims_[l + 1]);
      const auto& a = acts.back();
      std::vector<double> z(out);
      for (std::size_t o = 0; o < out; ++o) {
        double s = biases_[l][o];
        const double* row = &weights_[l][o * in];
        for (std::size_t i = 0; i < in; ++i) s += row[i] * a[i];
        const bool hidden = l + 1 < weights_.size();
        z[o] = hidden ? std::max(0.0, s) : s;
      }
      acts.push_back(std::move(z));
    }
    return acts.back();
  }

  /// Accumulates d(output[action])/d(theta) * scale into `grad` (same shape as *this).
  void backprop(const std::vector<std::vector<double>>& acts, int action, double scale, QNetwork& grad) const {
    std::vector<double> delta(static_cast<std::size_t>(action_dim()), 0.0);
    delta[static_cast<std::size_t>(action)] = scale;
    for (std::size_t l = weights_.size(); l-- > 0;) {
      const auto in = static_cast<std::size_t>(dims_[l]);
      const auto out = static_cast<std::size_t>(dims_[l + 1]);
      const auto& a = acts[l];
      std::vector<double> prev(in, 0.0);
      for (std::size_t o = 0; o < out; ++o) {
        const double d = delta[o];
        if (d == 0.0) continue;
        grad.biases_[l][o] += d;
        double* g = &grad.weights_[l][o * in];
        const double* w = &weights_[l][o * in];
        for (std::size_t i = 0; i < in; ++i) {
          g[i] += d * a[i];
          prev[i] += d * w[i];
        }
      }
      if (l > 0)
        for (std::size_t i = 0; i < in; ++i)
          if (acts[l][i] <= 0.0) prev[i] = 0.0;  // rectifier derivative
      delta = std::move(prev);
    }
  }

  QNetwork zeros_like() const { return QNetwork(dims_); }

  /// theta += step * other
  void axpy(double step, const QNetwork& other) {
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      for (std::size_t i = 0; i < weights_[l].size(); ++i) weights_[l][i] += step * other.weights_[l][i];
      for (std::size_t i = 0; i < biases_[l].size(); ++i) biases_[l][i] += step * other.biases_[l][i];
    }
  }

  bool all_finite() const {
    for (const auto& w : weights_)
      for (double x : w)
        if (!std::isfinite(x)) return false;
    for (const auto& b : biases_)
      for (double x : b)
        if (!std::isfinite(x)) return false;
    return true;
  }

  friend bool operator==(const QNetwork&, const QNetwork&) = default;

  nlohmann::json to_json() const {
    nlohmann::json layers = nlohmann::json::array();
    for (std::size_t l = 0; l < weights_.size(); ++l) layers.push_back({{"weights", weights_[l]}, {"biases", biases_[l]}});
    return {{"dims", dims_}, {"layers", layers}};
  }

  static QNetwork from_json(const nlohmann::json& j) {
    QNetwork net(j.at("dims").get<std::vector<int>>());
    const auto& layers = j.at("layers");
    if (layers.size() != net.layer_count()) throw DimensionMismatch("snapshot layer count mismatch");
    for (std::size_t l = 0; l < net.layer_count(); ++l) {
      auto w = layers[l].at("weights").get<std::vector<double>>();
      auto b = layers[l].at("biases").get<std::vector<double>>();
      if (w.size() != net.weights_[l].size() || b.size() != net.biases_[l].size())
        throw DimensionMismatch("snapshot layer " + std::to_string(l) + " has wrong shape");
      net.weights_[l] = std::move(w);
      net.biases_[l] = std::move(b);
    }
    return net;
  }

 private:
  std::vector<int> dims_;
  std::vector<std::vector<double>> weights_;
  std::vector<std::vector<double>> biases_;
};

struct Transition {
  std::vector<double> state;
  int action = 0;
  double reward = 0.0;
  std::vector<double> next_state;
  bool terminal = false;

  friend bool operator==(const Transition&, const Transition&) = default;
};

/// Bounded FIFO of transitions.
class ReplayMemory {
 public:
  explicit ReplayMemory(std::size_t capacity = 500) : capacity_(capacity) {
    if (capacity_ == 0) throw std::invalid_argument("replay capacity must be positive");
  }

  void push(Transition t) {
    if (items_.size() == capacity_) items_.pop_front();
    items_.push_back(std::move(t));
  }

  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return items_.empty(); }
  const Transition& operator[](std::size_t i) const { return items_[i]; }

  /// `count` distinct indices drawn uniformly (partial Fisher-Yates).
  template <typename Rng>
  std::vector<std::size_t> sample_indices(std::size_t count, Rng& rng) const {
    std::vector<std::size_t> idx(items_.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    count = std::min(count, idx.size());
    for (std::size_t i = 0; i < count; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
      std::swap(idx[i], idx[pick(rng)]);
    }
    idx.resize(count);
    return idx;
  }

 private:
  std::size_t capacity_;
  std::deque<Transition> items_;
};

enum class LossReduction { Sum, Mean };

struct AgentConfig {
  double learning_rate = 0.1;
  double discount = 0.9;
  double epsilon_start = 0.9;
  double epsilon_decrement = 0.05;
  double epsilon_floor = 0.0;
  std::size_t minibatch_size = 32;
  std::size_t memory_capacity = 500;
  int target_sync_period = 300;
  int train_period = 10;
  std::vector<int> hidden{10, 10};
  double init_bound = 0.1;
  double error_clip = 1.0;
  LossReduction reduction = LossReduction::Mean;
  std::uint64_t seed = 1;

  void validate() const {
    if (!(learning_rate > 0.0 && learning_rate <= 1.0)) throw Error("learning rate must lie in (0,1]");
    if (!(discount >= 0.0 && discount <= 1.0)) throw Error("discount must lie in [0,1]");
    if (!(epsilon_start >= 0.0 && epsilon_start <= 1.0)) throw Error("epsilon must lie in [0,1]");
    if (!(epsilon_floor >= 0.0 && epsilon_floor <= epsilon_start)) throw Error("epsilon floor out of range");
    if (epsilon_decrement < 0.0) throw Error("epsilon decrement must be non-negative");
    if (minibatch_size == 0 || memory_capacity == 0) throw Error("minibatch and memory sizes must be positive");
    if (target_sync_period < 1 || train_period < 1) throw Error("periods must be positive");
  }
};

/// Epsilon-greedy deep Q-learning agent with experience replay and a target network.
class Agent {
 public:
  Agent(int input_dim, int action_dim, AgentConfig cfg)
      : cfg_(std::move(cfg)), memory_(cfg_.memory_capacity), epsilon_(cfg_.epsilon_start), rng_(cfg_.seed) {
    cfg_.validate();
    std::vector<int> dims{input_dim};
    dims.insert(dims.end(), cfg_.hidden.begin(), cfg_.hidden.end());
    dims.push_back(action_dim);
    eval_ = QNetwork(dims);
    eval_.init_uniform(rng_, cfg_.init_bound);
    target_ = eval_;
  }

  const AgentConfig& config() const { return cfg_; }
  QNetwork& eval() { return eval_; }
  const QNetwork& eval() const { return eval_; }
  const QNetwork& target() const { return target_; }
  ReplayMemory& memory() { return memory_; }
  const ReplayMemory& memory() const { return memory_; }
  double epsilon() const { return epsilon_; }
  void set_epsilon(double e) { epsilon_ = std::clamp(e, 0.0, 1.0); }
  int action_dim() const { return eval_.action_dim(); }
  int input_dim() const { return eval_.input_dim(); }
  std::uint64_t train_steps() const { return train_steps_; }

  std::vector<double> q_values(std::span<const double> features) const { return eval_.forward(features); }

  /// Uniform with probability epsilon, otherwise greedy with lowest-index ties.
  int select_action(std::span<const double> features) {
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    if (coin(rng_) < epsilon_) {
      std::uniform_int_distribution<int> pick(0, action_dim() - 1);
      return pick(rng_);
    }
    return greedy(eval_.forward(features));
  }

  static int greedy(const std::vector<double>& q) {
    return static_cast<int>(std::max_element(q.begin(), q.end()) - q.begin());
  }

  void store_transition(Transition t) { memory_.push(std::move(t)); }

  /// One gradient-descent step on the clipped squared TD error of a sampled minibatch.
  /// Returns the minibatch loss (sum or mean of clipped squared errors, per config).
  double train_step() {
    if (memory_.empty()) throw EmptyMemory("train_step on empty replay memory");
    auto batch = memory_.sample_indices(cfg_.minibatch_size, rng_);
    QNetwork grad = eval_.zeros_like();
    std::vector<std::vector<double>> acts;
    const double norm = cfg_.reduction == LossReduction::Mean ? 1.0 / static_cast<double>(batch.size()) : 1.0;
    double loss = 0.0;
    for (std::size_t i : batch) {
      const auto& tr = memory_[i];
      const double target = td_target(tr);
      const auto q = eval_.forward_cached(tr.state, acts);
      const double err = std::clamp(target - q[static_cast<std::size_t>(tr.action)], -cfg_.error_clip, cfg_.error_clip);
      loss += err * err * norm;
      // d/dtheta of err^2 is -2 err dQ/dtheta; descend, so move along +2 err dQ.
      eval_.backprop(acts, tr.action, 2.0 * err * norm, grad);
    }
    eval_.axpy(cfg_.learning_rate, grad);
    ++train_steps_;
    return loss;
  }

  double td_target(const Transition& tr) const {
    if (tr.terminal) return tr.reward;
    const auto next = target_.forward(tr.next_state);
    return tr.reward + cfg_.discount * *std::max_element(next.begin(), next.end());
  }

  void sync_target() { target_ = eval_; }

  void decay_epsilon() {
    double e = epsilon_ - cfg_.epsilon_decrement;
    if (e < 1e-12) e = 0.0;
    epsilon_ = std::max(cfg_.epsilon_floor, e);
  }

  /// Bookkeeping after one environment step: train and decay every train_period
  /// steps, copy to the target every target_sync_period steps.
  std::optional<double> after_step() {
    ++env_steps_;
    std::optional<double> loss;
    if (env_steps_ % static_cast<std::uint64_t>(cfg_.train_period) == 0 && !memory_.empty()) {
      loss = train_step();
      decay_epsilon();
    }
    if (env_steps_ % static_cast<std::uint64_t>(cfg_.target_sync_period) == 0) sync_target();
    return loss;
  }

  std::uint64_t env_steps() const { return env_steps_; }

 private:
  AgentConfig cfg_;
  QNetwork eval_;
  QNetwork target_;
  ReplayMemory memory_;
  double epsilon_;
  std::mt19937_64 rng_;
  std::uint64_t train_steps_ = 0;
  std::uint64_t env_steps_ = 0;
};

/// Tabular Q-learning update; reference semantics for the network trainer.
inline double q_update_reference(const std::vector<std::vector<double>>& q_table, int s, int a, double r, int s_next,
                                 double learning_rate, double discount) {
  const auto& next = q_table.at(static_cast<std::size_t>(s_next));
  const double best = *std::max_element(next.begin(), next.end());
  const double q = q_table.at(static_cast<std::size_t>(s)).at(static_cast<std::size_t>(a));
  return q + learning_rate * (r + discount * best - q);
}

}  // namespace h2o::dqn

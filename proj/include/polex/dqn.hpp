#pragma once

#include <cmath>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "polex/errors.hpp"
#include "polex/mdp.hpp"
#include "polex/policy.hpp"
#include "polex/rng.hpp"
#include "polex/solvers.hpp"

namespace polex {

// Fixed-capacity ring of the most recent transitions; once full, each push
// overwrites the oldest entry.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw ContractViolation("ReplayBuffer: capacity must be positive");
    items_.reserve(capacity);
  }

  void push(const TransitionSample& t) {
    if (items_.size() < capacity_) {
      items_.push_back(t);
    } else {
      items_[head_] = t;
      head_ = (head_ + 1) % capacity_;
    }
  }

  std::size_t size() const noexcept { return items_.size(); }
  std::size_t capacity() const noexcept { return capacity_; }

  // i-th oldest stored transition.
  const TransitionSample& at(std::size_t i) const {
    if (i >= items_.size()) throw ContractViolation("ReplayBuffer: index out of range");
    return items_[(head_ + i) % items_.size()];
  }

  // Uniform sampling with replacement.
  std::vector<TransitionSample> sample(std::size_t batch, Rng& rng) const {
    if (items_.empty()) throw ContractViolation("ReplayBuffer: sampling from an empty buffer");
    std::vector<TransitionSample> out;
    out.reserve(batch);
    for (std::size_t i = 0; i < batch; ++i) out.push_back(items_[rng.uniform_int(items_.size())]);
    return out;
  }

 private:
  std::size_t capacity_;
  std::size_t head_ = 0;
  std::vector<TransitionSample> items_;
};

// Fully connected network with ReLU hidden layers and a linear output layer.
// Batches are column-major: one column per sample.
class Mlp {
 public:
  Mlp() = default;

  Mlp(const std::vector<std::size_t>& sizes, Rng& rng) {
    if (sizes.size() < 2) throw ContractViolation("Mlp: need at least input and output sizes");
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
      const auto in = static_cast<Eigen::Index>(sizes[l]);
      const auto out = static_cast<Eigen::Index>(sizes[l + 1]);
      const double bound = std::sqrt(6.0 / double(in));
      Eigen::MatrixXd w(out, in);
      for (Eigen::Index r = 0; r < out; ++r)
        for (Eigen::Index c = 0; c < in; ++c) w(r, c) = rng.uniform(-bound, bound);
      weights_.push_back(std::move(w));
      biases_.push_back(Eigen::VectorXd::Zero(out));
    }
  }

  std::size_t num_layers() const noexcept { return weights_.size(); }
  Eigen::Index input_size() const { return weights_.front().cols(); }
  Eigen::Index output_size() const { return weights_.back().rows(); }
  std::vector<Eigen::MatrixXd>& weights() noexcept { return weights_; }
  std::vector<Eigen::VectorXd>& biases() noexcept { return biases_; }
  const std::vector<Eigen::MatrixXd>& weights() const noexcept { return weights_; }
  const std::vector<Eigen::VectorXd>& biases() const noexcept { return biases_; }

  Eigen::MatrixXd forward(const Eigen::MatrixXd& x) const {
    Eigen::MatrixXd h = x;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      Eigen::MatrixXd z = (weights_[l] * h).colwise() + biases_[l];
      h = l + 1 < weights_.size() ? Eigen::MatrixXd(z.cwiseMax(0.0)) : std::move(z);
    }
    return h;
  }

  struct Gradient {
    std::vector<Eigen::MatrixXd> weights;
    std::vector<Eigen::VectorXd> biases;
  };

  // Layer inputs and pre-activations of one forward pass, kept for backward.
  struct Trace {
    std::vector<Eigen::MatrixXd> inputs;
    std::vector<Eigen::MatrixXd> pre;
    const Eigen::MatrixXd& output() const { return pre.back(); }
  };

  Trace trace(const Eigen::MatrixXd& x) const {
    const std::size_t n = weights_.size();
    Trace t;
    t.inputs.reserve(n);
    t.pre.reserve(n);
    t.inputs.push_back(x);
    for (std::size_t l = 0; l < n; ++l) {
      t.pre.push_back((weights_[l] * t.inputs.back()).colwise() + biases_[l]);
      if (l + 1 < n) t.inputs.push_back(t.pre.back().cwiseMax(0.0));
    }
    return t;
  }

  // Gradient of sum_j sum_k out_grad(k, j) * output(k, j) w.r.t. parameters.
  Gradient backward(const Trace& t, const Eigen::MatrixXd& out_grad) const {
    const std::size_t n = weights_.size();
    Gradient g;
    g.weights.resize(n);
    g.biases.resize(n);
    Eigen::MatrixXd delta = out_grad;
    for (std::size_t l = n; l-- > 0;) {
      g.weights[l].noalias() = delta * t.inputs[l].transpose();
      g.biases[l] = delta.rowwise().sum();
      if (l > 0) {
        Eigen::MatrixXd back = weights_[l].transpose() * delta;
        delta = back.cwiseProduct((t.pre[l - 1].array() > 0.0).cast<double>().matrix());
      }
    }
    return g;
  }

  Gradient backward(const Eigen::MatrixXd& x, const Eigen::MatrixXd& out_grad) const {
    return backward(trace(x), out_grad);
  }

  void apply(const Gradient& g, double step) {
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      weights_[l] -= step * g.weights[l];
      biases_[l] -= step * g.biases[l];
    }
  }

  bool operator==(const Mlp& other) const {
    if (weights_.size() != other.weights_.size()) return false;
    for (std::size_t l = 0; l < weights_.size(); ++l)
      if (weights_[l] != other.weights_[l] || biases_[l] != other.biases_[l]) return false;
    return true;
  }

 private:
  std::vector<Eigen::MatrixXd> weights_;
  std::vector<Eigen::VectorXd> biases_;
};

enum class InputEncoding {
  // Each feature scaled to [0, 1] by its declared range.
  scaled,
  // Integer-valued features with at most kMaxCategories values become one
  // indicator per value; the rest are scaled.
  categorical,
};

inline constexpr std::size_t kMaxCategories = 32;

inline const char* to_string(InputEncoding e) {
  return e == InputEncoding::scaled ? "scaled" : "categorical";
}

inline InputEncoding parse_input_encoding(std::string_view text) {
  if (text == "scaled") return InputEncoding::scaled;
  if (text == "categorical") return InputEncoding::categorical;
  throw ContractViolation("unknown network input encoding '" + std::string(text) + "'");
}

namespace detail {

// Number of indicator slots for feature i, or 0 when it is encoded scaled.
inline std::size_t category_count(const DomainModel& domain, std::size_t i) {
  const auto& spec = domain.features()[i];
  if (spec.min != std::floor(spec.min) || spec.max != std::floor(spec.max)) return 0;
  if (spec.max - spec.min + 1.0 > double(kMaxCategories)) return 0;
  for (const auto& st : domain.states())
    if (st.features[i] != std::floor(st.features[i])) return 0;
  return static_cast<std::size_t>(spec.max - spec.min) + 1;
}

}  // namespace detail

// Network input for every state, one column per state id.
inline Eigen::MatrixXd encode_states(const DomainModel& domain,
                                     InputEncoding encoding = InputEncoding::scaled) {
  const std::size_t n_f = domain.num_features();
  std::vector<std::size_t> width(n_f, 1), offset(n_f, 0);
  std::vector<bool> indicator(n_f, false);
  std::size_t rows = 0;
  for (std::size_t i = 0; i < n_f; ++i) {
    if (encoding == InputEncoding::categorical) {
      if (const auto k = detail::category_count(domain, i); k > 0) {
        width[i] = k;
        indicator[i] = true;
      }
    }
    offset[i] = rows;
    rows += width[i];
  }
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(Eigen::Index(rows), Eigen::Index(domain.num_states()));
  for (const auto& st : domain.states()) {
    for (std::size_t i = 0; i < n_f; ++i) {
      const auto& spec = domain.features()[i];
      const double span = spec.max - spec.min;
      if (indicator[i])
        x(Eigen::Index(offset[i] + std::size_t(st.features[i] - spec.min)), st.id) = 1.0;
      else
        x(Eigen::Index(offset[i]), st.id) = span > 0.0 ? (st.features[i] - spec.min) / span : 0.0;
    }
  }
  return x;
}

// Online network plus the frozen target copy used for bootstrap targets.
struct QNetwork {
  Mlp online;
  Mlp target;

  QNetwork(const std::vector<std::size_t>& sizes, Rng& rng) : online(sizes, rng), target(online) {}
  void sync() { target = online; }
};

struct Batch {
  Eigen::MatrixXd states;       // features x B
  Eigen::MatrixXd next_states;  // features x B
  std::vector<ActionId> actions;
  Eigen::VectorXd rewards;
  std::vector<bool> terminal;
};

inline Batch make_batch(const std::vector<TransitionSample>& samples,
                        const Eigen::MatrixXd& encoded) {
  const auto b = static_cast<Eigen::Index>(samples.size());
  Batch batch;
  batch.states.resize(encoded.rows(), b);
  batch.next_states.resize(encoded.rows(), b);
  batch.rewards.resize(b);
  for (Eigen::Index j = 0; j < b; ++j) {
    const auto& t = samples[j];
    batch.states.col(j) = encoded.col(t.state);
    batch.next_states.col(j) = encoded.col(t.next);
    batch.actions.push_back(t.action);
    batch.rewards(j) = t.reward;
    batch.terminal.push_back(t.terminal);
  }
  return batch;
}

// Regression targets r + gamma * max_a' Q(s', a'; target); exactly r when
// s' is terminal.
inline Eigen::VectorXd td_targets(const Mlp& target, const Batch& batch, double gamma) {
  const Eigen::MatrixXd next_q = target.forward(batch.next_states);
  Eigen::VectorXd y = batch.rewards;
  for (Eigen::Index j = 0; j < y.size(); ++j)
    if (!batch.terminal[j]) y(j) += gamma * next_q.col(j).maxCoeff();
  return y;
}

// Mean over the batch of (y - Q(s, a; online))^2.
inline double batch_loss(const Mlp& online, const Batch& batch, const Eigen::VectorXd& targets) {
  const Eigen::MatrixXd q = online.forward(batch.states);
  double total = 0.0;
  for (Eigen::Index j = 0; j < targets.size(); ++j) {
    const double err = targets(j) - q(batch.actions[j], j);
    total += err * err;
  }
  return total / double(targets.size());
}

struct LossAndGradient {
  double loss;
  Mlp::Gradient gradient;
};

// One forward pass serves both the loss and its gradient 2 (Q - y) / B.
inline LossAndGradient batch_loss_and_gradient(const Mlp& online, const Batch& batch,
                                               const Eigen::VectorXd& targets) {
  const auto t = online.trace(batch.states);
  const Eigen::MatrixXd& q = t.output();
  Eigen::MatrixXd out_grad = Eigen::MatrixXd::Zero(q.rows(), q.cols());
  const double scale = 2.0 / double(targets.size());
  double total = 0.0;
  for (Eigen::Index j = 0; j < targets.size(); ++j) {
    const double err = q(batch.actions[j], j) - targets(j);
    total += err * err;
    out_grad(batch.actions[j], j) = scale * err;
  }
  return {total / double(targets.size()), online.backward(t, out_grad)};
}

inline Mlp::Gradient batch_loss_gradient(const Mlp& online, const Batch& batch,
                                         const Eigen::VectorXd& targets) {
  return batch_loss_and_gradient(online, batch, targets).gradient;
}

struct DqnConfig {
  std::vector<std::size_t> hidden{64, 64};
  InputEncoding inputs = InputEncoding::categorical;
  std::size_t buffer_capacity = 10000;
  std::size_t batch_size = 32;
  std::size_t target_sync_interval = 256;
  double alpha = 1e-3;
  double gamma = 0.95;
  EpsilonSchedule epsilon{1.0, 0.05, 5000};
  std::size_t episodes = 10000;
  std::size_t max_steps = kDefaultEpisodeStepCap;
};

inline TrainedPolicy dqn_learn(const DomainModel& domain, const DqnConfig& cfg, Rng& rng,
                               Mlp* network_out = nullptr) {
  if (cfg.buffer_capacity < cfg.batch_size)
    throw ContractViolation("dqn_learn: buffer capacity must be at least the batch size");
  if (cfg.batch_size == 0) throw ContractViolation("dqn_learn: batch size must be positive");
  if (!(cfg.alpha > 0.0)) throw ContractViolation("dqn_learn: alpha must be positive");

  const Eigen::MatrixXd encoded = encode_states(domain, cfg.inputs);
  std::vector<std::size_t> sizes{std::size_t(encoded.rows())};
  sizes.insert(sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
  sizes.push_back(domain.num_actions());
  QNetwork net(sizes, rng);
  ReplayBuffer buffer(cfg.buffer_capacity);
  const auto starts = nonterminal_states(domain);
  std::size_t iteration = 0;

  for (std::size_t ep = 0; ep < cfg.episodes; ++ep) {
    const double eps = cfg.epsilon.at(ep);
    StateId s = random_start(starts, rng);
    for (std::size_t t = 0; t < cfg.max_steps; ++t) {
      const ActionId a = epsilon_greedy(eps, domain.num_actions(), rng, [&] {
        const Eigen::VectorXd q = net.online.forward(encoded.col(s));
        return greedy_action(std::span<const double>(q.data(), std::size_t(q.size())));
      });
      const auto [next, reward] = step(domain, s, a, rng);
      const bool done = domain.is_terminal(next);
      buffer.push({s, a, reward, next, done});

      if (buffer.size() >= cfg.batch_size) {
        const Batch batch = make_batch(buffer.sample(cfg.batch_size, rng), encoded);
        const Eigen::VectorXd y = td_targets(net.target, batch, cfg.gamma);
        const auto [loss, grad] = batch_loss_and_gradient(net.online, batch, y);
        if (!std::isfinite(loss))
          throw ConvergenceError("dqn_learn: loss became non-finite at iteration " +
                                 std::to_string(iteration));
        net.online.apply(grad, cfg.alpha);
      }
      ++iteration;
      if (iteration % cfg.target_sync_interval == 0) net.sync();
      s = next;
      if (done) break;
    }
  }

  const Eigen::MatrixXd q_all = net.online.forward(encoded);
  std::vector<double> q(domain.num_states() * domain.num_actions());
  for (StateId s = 0; s < domain.num_states(); ++s)
    for (ActionId a = 0; a < domain.num_actions(); ++a)
      q[s * domain.num_actions() + a] = q_all(a, s);
  if (network_out) *network_out = net.online;

  std::string hidden;
  for (std::size_t i = 0; i < cfg.hidden.size(); ++i)
    hidden += (i ? "x" : "") + std::to_string(cfg.hidden[i]);
  return TrainedPolicy(std::move(q), domain.num_states(), domain.num_actions(), cfg.gamma,
                       terminal_flags(domain), "dqn",
                       {{"hidden", hidden},
                        {"inputs", to_string(cfg.inputs)},
                        {"buffer_capacity", std::to_string(cfg.buffer_capacity)},
                        {"batch_size", std::to_string(cfg.batch_size)},
                        {"target_sync_interval", std::to_string(cfg.target_sync_interval)},
                        {"alpha", format_number(cfg.alpha)},
                        {"gamma", format_number(cfg.gamma)},
                        {"episodes", std::to_string(cfg.episodes)},
                        {"max_steps", std::to_string(cfg.max_steps)},
                        {"epsilon_start", format_number(cfg.epsilon.start)},
                        {"epsilon_end", format_number(cfg.epsilon.end)},
                        {"epsilon_decay_episodes", std::to_string(cfg.epsilon.decay_episodes)},
                        {"iterations", std::to_string(iteration)}});
}

}  // namespace polex

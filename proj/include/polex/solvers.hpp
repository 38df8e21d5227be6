#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <concepts>
#include <functional>
#include <map>
#include <ranges>
#include <sstream>
#include <string>
#include <vector>

#include "polex/errors.hpp"
#include "polex/mdp.hpp"
#include "polex/policy.hpp"
#include "polex/rng.hpp"

namespace polex {

// Anything that exposes an enumerated tabular MDP: DomainModel and
// EstimatedModel both qualify.
template <class M>
concept TabularModel = requires(const M& m, StateId s, ActionId a) {
  { m.num_states() } -> std::convertible_to<std::size_t>;
  { m.num_actions() } -> std::convertible_to<std::size_t>;
  { m.is_terminal(s) } -> std::convertible_to<bool>;
  { m.outcomes(s, a) } -> std::ranges::forward_range;
};

// Shortest text that reads back to the same double.
inline std::string format_number(double x) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

// ---------------------------------------------------------------------------
// Model estimation by sampling every (s, a) pair k times.
// ---------------------------------------------------------------------------

class EstimatedModel {
 public:
  EstimatedModel(std::size_t num_states, std::size_t num_actions, std::size_t k,
                 std::vector<bool> terminal, std::vector<std::vector<Outcome>> rows)
      : num_states_(num_states),
        num_actions_(num_actions),
        k_(k),
        terminal_(std::move(terminal)),
        rows_(std::move(rows)) {}

  std::size_t num_states() const noexcept { return num_states_; }
  std::size_t num_actions() const noexcept { return num_actions_; }
  std::size_t samples_per_pair() const noexcept { return k_; }
  bool is_terminal(StateId s) const { return terminal_.at(s); }
  std::span<const Outcome> outcomes(StateId s, ActionId a) const {
    return rows_.at(std::size_t(s) * num_actions_ + a);
  }

  // t_hat(s, a, s') (0 when s' was never observed).
  double probability(StateId s, ActionId a, StateId next) const {
    for (const auto& o : outcomes(s, a))
      if (o.next == next) return o.prob;
    return 0.0;
  }

  // Empirical mean reward of the triple; nullopt when never observed.
  std::optional<double> mean_reward(StateId s, ActionId a, StateId next) const {
    for (const auto& o : outcomes(s, a))
      if (o.next == next) return o.reward;
    return std::nullopt;
  }

 private:
  std::size_t num_states_;
  std::size_t num_actions_;
  std::size_t k_;
  std::vector<bool> terminal_;
  std::vector<std::vector<Outcome>> rows_;
};

inline EstimatedModel estimate_model(const DomainModel& domain, std::size_t k, Rng& rng) {
  if (k == 0) throw ContractViolation("estimate_model: k must be at least 1");
  const std::size_t n_a = domain.num_actions();
  std::vector<std::vector<Outcome>> rows(domain.num_states() * n_a);
  for (const auto& st : domain.states()) {
    for (ActionId a = 0; a < n_a; ++a) {
      auto& row = rows[std::size_t(st.id) * n_a + a];
      if (st.terminal) {
        row.push_back({st.id, 1.0, 0.0});
        continue;
      }
      // successor -> (count, reward sum)
      std::map<StateId, std::pair<std::size_t, double>> tally;
      for (std::size_t i = 0; i < k; ++i) {
        const auto [next, reward] = step(domain, st.id, a, rng);
        auto& t = tally[next];
        ++t.first;
        t.second += reward;
      }
      for (const auto& [next, t] : tally)
        row.push_back({next, double(t.first) / double(k), t.second / double(t.first)});
    }
  }
  return EstimatedModel(domain.num_states(), n_a, k, terminal_flags(domain), std::move(rows));
}

// ---------------------------------------------------------------------------
// Policy iteration.
// ---------------------------------------------------------------------------

struct PolicyIterationOptions {
  double tol = 1e-6;             // bound on the returned Bellman residual
  double eval_tol = 1e-9;        // sweep-to-sweep change that ends evaluation
  std::size_t max_sweeps = 200000;
  std::size_t max_improvements = 10000;
  // Extra evaluation sweeps after the policy is stable, stopping early at an
  // exact fixed point.
  std::size_t polish_sweeps = 2000;
};

template <TabularModel M>
double backup(const M& model, const std::vector<double>& v, StateId s, ActionId a, double gamma) {
  double total = 0.0;
  for (const auto& o : model.outcomes(s, a)) total += o.prob * (o.reward + gamma * v[o.next]);
  return total;
}

template <TabularModel M>
std::vector<double> q_from_values(const M& model, const std::vector<double>& v, double gamma) {
  const std::size_t n_s = model.num_states(), n_a = model.num_actions();
  std::vector<double> q(n_s * n_a, 0.0);
  for (StateId s = 0; s < n_s; ++s) {
    if (model.is_terminal(s)) continue;
    for (ActionId a = 0; a < n_a; ++a) q[s * n_a + a] = backup(model, v, s, a, gamma);
  }
  return q;
}

// max |Q - T(Q)| with terminal rows pinned at zero.
template <TabularModel M>
double bellman_residual(const M& model, std::span<const double> q, double gamma) {
  const std::size_t n_s = model.num_states(), n_a = model.num_actions();
  std::vector<double> v(n_s, 0.0);
  for (StateId s = 0; s < n_s; ++s) {
    if (model.is_terminal(s)) continue;
    v[s] = *std::max_element(q.begin() + s * n_a, q.begin() + (s + 1) * n_a);
  }
  double worst = 0.0;
  for (StateId s = 0; s < n_s; ++s) {
    for (ActionId a = 0; a < n_a; ++a) {
      const double target = model.is_terminal(s) ? 0.0 : backup(model, v, s, a, gamma);
      worst = std::max(worst, std::abs(q[s * n_a + a] - target));
    }
  }
  return worst;
}

template <TabularModel M>
TrainedPolicy policy_iteration(const M& model, double gamma, const PolicyIterationOptions& opt = {}) {
  if (!(gamma > 0.0 && gamma < 1.0))
    throw ContractViolation("policy_iteration: gamma must lie in (0, 1)");
  if (!(opt.tol > 0.0)) throw ContractViolation("policy_iteration: tol must be positive");
  const std::size_t n_s = model.num_states(), n_a = model.num_actions();
  std::vector<double> v(n_s, 0.0);
  std::vector<ActionId> pi(n_s, 0);
  std::size_t sweeps = 0;

  // In-place (Gauss-Seidel) sweeps; returns the largest change of the sweep.
  auto sweep = [&] {
    double delta = 0.0;
    for (StateId s = 0; s < n_s; ++s) {
      if (model.is_terminal(s)) continue;
      const double updated = backup(model, v, s, pi[s], gamma);
      delta = std::max(delta, std::abs(updated - v[s]));
      v[s] = updated;
    }
    ++sweeps;
    return delta;
  };

  std::size_t improvements = 0;
  for (;;) {
    double delta;
    do {
      delta = sweep();
      if (sweeps > opt.max_sweeps)
        throw ConvergenceError("policy_iteration: evaluation did not converge after " +
                               std::to_string(sweeps) + " sweeps (residual " +
                               format_number(delta) + ")");
    } while (delta > opt.eval_tol);

    bool stable = true;
    for (StateId s = 0; s < n_s; ++s) {
      if (model.is_terminal(s)) continue;
      const double current = backup(model, v, s, pi[s], gamma);
      ActionId best = pi[s];
      double best_q = current;
      for (ActionId a = 0; a < n_a; ++a) {
        const double qa = backup(model, v, s, a, gamma);
        if (qa > best_q) {
          best_q = qa;
          best = a;
        }
      }
      // Switch only on a clear improvement so that rounding noise between
      // tied actions cannot make the loop cycle.
      if (best != pi[s] && best_q - current > 1e-12 * std::max(1.0, std::abs(current))) {
        pi[s] = best;
        stable = false;
      }
    }
    if (stable) break;
    if (++improvements > opt.max_improvements)
      throw ConvergenceError("policy_iteration: policy still changing after " +
                             std::to_string(improvements) + " improvement steps");
  }

  for (std::size_t i = 0; i < opt.polish_sweeps; ++i)
    if (sweep() == 0.0) break;

  auto q = q_from_values(model, v, gamma);
  std::vector<bool> terminal(n_s);
  for (StateId s = 0; s < n_s; ++s) terminal[s] = model.is_terminal(s);
  const double residual = bellman_residual(model, q, gamma);
  if (residual > opt.tol)
    throw ConvergenceError("policy_iteration: Bellman residual " + format_number(residual) +
                           " exceeds tolerance " + format_number(opt.tol));
  return TrainedPolicy(std::move(q), n_s, n_a, gamma, terminal, "policy-iteration",
                       {{"tol", format_number(opt.tol)},
                        {"eval_tol", format_number(opt.eval_tol)},
                        {"sweeps", std::to_string(sweeps)},
                        {"improvements", std::to_string(improvements)}});
}

inline TrainedPolicy policy_iteration(const DomainModel& domain,
                                      const PolicyIterationOptions& opt = {}) {
  return policy_iteration(domain, domain.discount(), opt);
}

// Model-based route: sample the model, then solve it.
inline TrainedPolicy model_based_learn(const DomainModel& domain, std::size_t k, Rng& rng,
                                       const PolicyIterationOptions& opt = {}) {
  const auto model = estimate_model(domain, k, rng);
  auto solved = policy_iteration(model, domain.discount(), opt);
  auto prov = solved.provenance();
  prov["k"] = std::to_string(k);
  return TrainedPolicy(solved.q(), solved.num_states(), solved.num_actions(), solved.gamma(),
                       terminal_flags(domain), "model-based", std::move(prov));
}

// ---------------------------------------------------------------------------
// Exploration shared by the model-free learners.
// ---------------------------------------------------------------------------

// Linear decay from `start` to `end` over the first `decay_episodes`
// episodes, constant afterwards.
struct EpsilonSchedule {
  double start = 1.0;
  double end = 0.05;
  std::size_t decay_episodes = 1000;

  double at(std::size_t episode) const {
    if (decay_episodes == 0 || episode >= decay_episodes) return end;
    return start + (end - start) * double(episode) / double(decay_episodes);
  }
};

inline constexpr std::size_t kDefaultEpisodeStepCap = 500;

inline std::vector<StateId> nonterminal_states(const DomainModel& domain) {
  std::vector<StateId> out;
  for (const auto& s : domain.states())
    if (!s.terminal) out.push_back(s.id);
  return out;
}

// Uniform random initial state among non-terminal states.
inline StateId random_start(const std::vector<StateId>& starts, Rng& rng) {
  if (starts.empty()) throw ContractViolation("domain has no non-terminal states");
  return starts[rng.uniform_int(starts.size())];
}

// One draw of u decides exploration; a second draw picks the random action.
template <class GreedyFn>
ActionId epsilon_greedy(double epsilon, std::size_t num_actions, Rng& rng, GreedyFn&& greedy) {
  if (rng.uniform01() < epsilon) return static_cast<ActionId>(rng.uniform_int(num_actions));
  return greedy();
}

// ---------------------------------------------------------------------------
// Linear approximate Q-learning.
// ---------------------------------------------------------------------------

enum class LinearFeatures {
  // Bias term followed by every state feature scaled to [0, 1] by its
  // declared range.
  scaled,
  // Indicator of the state id; makes the learner tabular.
  one_hot,
};

inline const char* to_string(LinearFeatures f) {
  return f == LinearFeatures::scaled ? "scaled" : "one-hot";
}

inline LinearFeatures parse_linear_features(std::string_view text) {
  if (text == "scaled") return LinearFeatures::scaled;
  if (text == "one-hot") return LinearFeatures::one_hot;
  throw ContractViolation("unknown linear feature map '" + std::string(text) + "'");
}

struct SparseEntry {
  std::size_t index;
  double value;
};
using SparseFeatures = std::vector<SparseEntry>;

// Precomputed feature vectors f(s) for every state.
class FeatureMap {
 public:
  FeatureMap(const DomainModel& domain, LinearFeatures kind) : kind_(kind) {
    const std::size_t n_s = domain.num_states();
    table_.resize(n_s);
    if (kind == LinearFeatures::one_hot) {
      dimension_ = n_s;
      for (StateId s = 0; s < n_s; ++s) table_[s] = {{s, 1.0}};
      return;
    }
    dimension_ = domain.num_features() + 1;
    for (const auto& st : domain.states()) {
      auto& f = table_[st.id];
      f.push_back({0, 1.0});
      for (std::size_t i = 0; i < st.features.size(); ++i) {
        const auto& spec = domain.features()[i];
        const double span = spec.max - spec.min;
        const double x = span > 0.0 ? (st.features[i] - spec.min) / span : 0.0;
        if (x != 0.0) f.push_back({i + 1, x});
      }
    }
  }

  std::size_t dimension() const noexcept { return dimension_; }
  LinearFeatures kind() const noexcept { return kind_; }
  const SparseFeatures& operator()(StateId s) const { return table_.at(s); }

 private:
  LinearFeatures kind_;
  std::size_t dimension_ = 0;
  std::vector<SparseFeatures> table_;
};

// Per-action weight vectors: Q(s, a) = theta_a . f(s).
struct LinearQ {
  std::size_t num_actions = 0;
  std::size_t dimension = 0;
  std::vector<double> theta;  // row-major: action, feature

  LinearQ(std::size_t actions, std::size_t dim)
      : num_actions(actions), dimension(dim), theta(actions * dim, 0.0) {}

  double value(const SparseFeatures& f, ActionId a) const {
    double total = 0.0;
    const double* w = theta.data() + std::size_t(a) * dimension;
    for (const auto& e : f) total += w[e.index] * e.value;
    return total;
  }

  double max_value(const SparseFeatures& f) const {
    double best = value(f, 0);
    for (ActionId a = 1; a < num_actions; ++a) best = std::max(best, value(f, a));
    return best;
  }

  ActionId greedy(const SparseFeatures& f) const {
    ActionId best = 0;
    double best_q = value(f, 0);
    for (ActionId a = 1; a < num_actions; ++a) {
      const double q = value(f, a);
      if (q > best_q) {
        best_q = q;
        best = a;
      }
    }
    return best;
  }

  // theta_a <- theta_a + alpha * delta * f(s). Returns delta.
  double update(const SparseFeatures& f, ActionId a, double reward, const SparseFeatures& next_f,
                bool next_terminal, double alpha, double gamma) {
    const double bootstrap = next_terminal ? 0.0 : gamma * max_value(next_f);
    const double delta = reward + bootstrap - value(f, a);
    double* w = theta.data() + std::size_t(a) * dimension;
    for (const auto& e : f) w[e.index] += alpha * delta * e.value;
    return delta;
  }
};

struct LinearQConfig {
  double alpha = 0.05;
  double gamma = 0.95;
  EpsilonSchedule epsilon{1.0, 0.05, 2000};
  std::size_t episodes = 4000;
  std::size_t max_steps = kDefaultEpisodeStepCap;
  LinearFeatures features = LinearFeatures::scaled;
  double divergence_guard = 1e12;
};

struct TransitionSample {
  StateId state;
  ActionId action;
  double reward;
  StateId next;
  bool terminal;
};

using StepObserver = std::function<void(std::size_t step, const TransitionSample&, double delta)>;

inline TrainedPolicy linear_q_learn(const DomainModel& domain, const LinearQConfig& cfg, Rng& rng,
                                    const StepObserver& observer = {},
                                    LinearQ* weights_out = nullptr) {
  if (!(cfg.alpha > 0.0)) throw ContractViolation("linear_q_learn: alpha must be positive");
  if (cfg.episodes == 0) throw ContractViolation("linear_q_learn: episodes must be at least 1");
  const FeatureMap phi(domain, cfg.features);
  LinearQ model(domain.num_actions(), phi.dimension());
  const auto starts = nonterminal_states(domain);
  std::size_t global_step = 0;

  for (std::size_t ep = 0; ep < cfg.episodes; ++ep) {
    const double eps = cfg.epsilon.at(ep);
    StateId s = random_start(starts, rng);
    for (std::size_t t = 0; t < cfg.max_steps; ++t) {
      const auto& f = phi(s);
      const ActionId a =
          epsilon_greedy(eps, domain.num_actions(), rng, [&] { return model.greedy(f); });
      const auto [next, reward] = step(domain, s, a, rng);
      const bool done = domain.is_terminal(next);
      const double delta = model.update(f, a, reward, phi(next), done, cfg.alpha, cfg.gamma);
      if (!std::isfinite(delta))
        throw ConvergenceError("linear_q_learn: non-finite TD error at step " +
                               std::to_string(global_step));
      for (const auto& e : f) {
        if (std::abs(model.theta[std::size_t(a) * model.dimension + e.index]) >
            cfg.divergence_guard)
          throw ConvergenceError("linear_q_learn: weights diverged at step " +
                                 std::to_string(global_step));
      }
      if (observer) observer(global_step, {s, a, reward, next, done}, delta);
      ++global_step;
      s = next;
      if (done) break;
    }
  }

  std::vector<double> q(domain.num_states() * domain.num_actions());
  for (StateId s = 0; s < domain.num_states(); ++s)
    for (ActionId a = 0; a < domain.num_actions(); ++a)
      q[s * domain.num_actions() + a] = model.value(phi(s), a);
  if (weights_out) *weights_out = model;
  return TrainedPolicy(std::move(q), domain.num_states(), domain.num_actions(), cfg.gamma,
                       terminal_flags(domain), "linear-q",
                       {{"alpha", format_number(cfg.alpha)},
                        {"gamma", format_number(cfg.gamma)},
                        {"episodes", std::to_string(cfg.episodes)},
                        {"max_steps", std::to_string(cfg.max_steps)},
                        {"epsilon_start", format_number(cfg.epsilon.start)},
                        {"epsilon_end", format_number(cfg.epsilon.end)},
                        {"epsilon_decay_episodes", std::to_string(cfg.epsilon.decay_episodes)},
                        {"features", to_string(cfg.features)},
                        {"steps", std::to_string(global_step)}});
}

}  // namespace polex

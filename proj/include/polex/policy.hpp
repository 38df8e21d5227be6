#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "polex/errors.hpp"
#include "polex/mdp.hpp"

namespace polex {

// Lowest id among the maximisers of row.
inline ActionId greedy_action(std::span<const double> row) {
  ActionId best = 0;
  for (ActionId a = 1; a < row.size(); ++a)
    if (row[a] > row[best]) best = a;
  return best;
}

// Output of every solver: dense Q table plus the greedy policy and state
// values derived from it.
class TrainedPolicy {
 public:
  TrainedPolicy() = default;

  // Terminal rows of q are forced to zero; pi and v are recomputed from q.
  TrainedPolicy(std::vector<double> q, std::size_t num_states, std::size_t num_actions,
                double gamma, const std::vector<bool>& terminal, std::string solver,
                std::map<std::string, std::string> provenance = {})
      : q_(std::move(q)),
        num_states_(num_states),
        num_actions_(num_actions),
        gamma_(gamma),
        solver_(std::move(solver)),
        provenance_(std::move(provenance)) {
    if (q_.size() != num_states * num_actions)
      throw ContractViolation("TrainedPolicy: q table has the wrong size");
    if (terminal.size() != num_states)
      throw ContractViolation("TrainedPolicy: terminal flags have the wrong size");
    pi_.resize(num_states);
    v_.resize(num_states);
    for (std::size_t s = 0; s < num_states; ++s) {
      auto row = std::span<double>(q_).subspan(s * num_actions, num_actions);
      if (terminal[s]) std::fill(row.begin(), row.end(), 0.0);
      for (double x : row)
        if (!std::isfinite(x))
          throw ConvergenceError("TrainedPolicy: non-finite q value at state " + std::to_string(s));
      pi_[s] = greedy_action(row);
      v_[s] = row[pi_[s]];
    }
  }

  std::size_t num_states() const noexcept { return num_states_; }
  std::size_t num_actions() const noexcept { return num_actions_; }
  double gamma() const noexcept { return gamma_; }
  const std::string& solver() const noexcept { return solver_; }
  const std::map<std::string, std::string>& provenance() const noexcept { return provenance_; }

  const std::vector<double>& q() const noexcept { return q_; }
  std::span<const double> q_row(StateId s) const {
    if (s >= num_states_) throw ContractViolation("q_row: state id out of range");
    return std::span<const double>(q_).subspan(std::size_t(s) * num_actions_, num_actions_);
  }
  double q(StateId s, ActionId a) const { return q_row(s)[a]; }
  ActionId action(StateId s) const { return pi_.at(s); }
  double value(StateId s) const { return v_.at(s); }
  const std::vector<ActionId>& pi() const noexcept { return pi_; }
  const std::vector<double>& v() const noexcept { return v_; }

  bool operator==(const TrainedPolicy&) const = default;

 private:
  std::vector<double> q_;
  std::size_t num_states_ = 0;
  std::size_t num_actions_ = 0;
  double gamma_ = 0.0;
  std::string solver_;
  std::map<std::string, std::string> provenance_;
  std::vector<ActionId> pi_;
  std::vector<double> v_;
};

inline std::vector<bool> terminal_flags(const DomainModel& domain) {
  std::vector<bool> t(domain.num_states());
  for (const auto& s : domain.states()) t[s.id] = s.terminal;
  return t;
}

}  // namespace polex

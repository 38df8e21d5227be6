#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <system_error>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "polex/errors.hpp"
#include "polex/mdp.hpp"
#include "polex/policy.hpp"
#include "polex/tree.hpp"

namespace polex {

// ---------------------------------------------------------------------------
// Explanations
// ---------------------------------------------------------------------------

struct WhyExplanation {
  StateId state = 0;
  ActionId action = 0;
  Rule rule;
  std::vector<StateId> coverage;
  std::optional<std::string> subgoal;
  bool operator==(const WhyExplanation&) const = default;
};

struct WhyNotExplanation {
  StateId state = 0;
  ActionId fact_action = 0;
  ActionId foil_action = 0;
  StateId foil_state = 0;
  double distance = 0.0;
  Rule fact_rule;
  Rule foil_rule;
  bool operator==(const WhyNotExplanation&) const = default;
};

struct WhenEntry {
  Rule rule;
  std::size_t count = 0;
  std::size_t leaf = 0;  // preorder index
  bool operator==(const WhenEntry&) const = default;
};

struct WhenExplanation {
  ActionId action = 0;
  std::vector<WhenEntry> entries;
  bool never_taken() const { return entries.empty(); }
  bool operator==(const WhenExplanation&) const = default;
};

using Explanation = std::variant<WhyExplanation, WhyNotExplanation, WhenExplanation>;

inline constexpr std::size_t kWhenEntries = 3;

inline void check_state(const DomainModel& domain, StateId s) {
  if (s >= domain.num_states())
    throw ContractViolation("state " + std::to_string(s) + " does not exist");
}

inline void check_action(const DomainModel& domain, ActionId a) {
  if (a >= domain.num_actions())
    throw ContractViolation("action " + std::to_string(a) + " does not exist");
}

inline WhyExplanation explain_why(const DomainModel& domain, const TrainedPolicy& policy,
                                  const SurrogateTree& tree, StateId s) {
  check_state(domain, s);
  const auto path = path_of(tree, domain.state(s));
  const ActionId a = policy.action(s);
  if (tree.node(path.leaf).action != a)
    throw ExplanationUnavailable("no faithful explanation for state " + std::to_string(s) +
                                 ": the surrogate tree predicts a different action there");
  WhyExplanation out;
  out.state = s;
  out.action = a;
  out.rule = rule_of_path(tree, path);
  out.coverage = rule_coverage(out.rule, domain.states());
  out.subgoal = domain.subgoal(s, a);
  return out;
}

// Nearest state (Euclidean over features, ties by lower id) whose optimal
// action is the foil.
inline std::optional<std::pair<StateId, double>> nearest_state_with_action(
    const DomainModel& domain, const TrainedPolicy& policy, StateId s, ActionId foil) {
  std::optional<std::pair<StateId, double>> best;
  const auto& x = domain.state(s).features;
  for (const auto& cand : domain.states()) {
    if (policy.action(cand.id) != foil) continue;
    const double d = euclidean_distance(x, cand.features);
    if (!best || d < best->second) best = {cand.id, d};
  }
  return best;
}

inline WhyNotExplanation explain_why_not(const DomainModel& domain, const TrainedPolicy& policy,
                                         const SurrogateTree& tree, StateId s, ActionId foil) {
  check_state(domain, s);
  if (foil >= domain.num_actions())
    throw InvalidFoil("foil action " + std::to_string(foil) + " does not exist");
  const ActionId fact = policy.action(s);
  if (foil == fact)
    throw InvalidFoil("'" + domain.action_label(foil) + "' is already the chosen action in state " +
                      std::to_string(s));
  const auto nearest = nearest_state_with_action(domain, policy, s, foil);
  if (!nearest)
    throw NoFoilState("'" + domain.action_label(foil) + "' is not the optimal action in any state");
  WhyNotExplanation out;
  out.state = s;
  out.fact_action = fact;
  out.foil_action = foil;
  out.foil_state = nearest->first;
  out.distance = nearest->second;
  out.fact_rule = rule_of_path(tree, path_of(tree, domain.state(s)));
  out.foil_rule = rule_of_path(tree, path_of(tree, domain.state(out.foil_state)));
  return out;
}

inline WhenExplanation explain_when(const DomainModel& domain, const SurrogateTree& tree,
                                    ActionId a) {
  check_action(domain, a);
  std::vector<std::size_t> leaves;
  for (auto i : tree.leaves())
    if (tree.node(i).action == a) leaves.push_back(i);
  std::stable_sort(leaves.begin(), leaves.end(), [&](std::size_t x, std::size_t y) {
    return tree.node(x).states.size() > tree.node(y).states.size();
  });
  WhenExplanation out;
  out.action = a;
  for (std::size_t i = 0; i < leaves.size() && i < kWhenEntries; ++i)
    out.entries.push_back({rule_of_path(tree, path_to_leaf(tree, leaves[i])),
                           tree.node(leaves[i]).states.size(), leaves[i]});
  return out;
}

// ---------------------------------------------------------------------------
// Criticality and value labels
// ---------------------------------------------------------------------------

inline constexpr std::array<const char*, 5> kValueLabels{"Very Low", "Low", "Medium", "High",
                                                         "Very High"};

// max_a q - mean_a q, evaluated as the mean gap to the maximum so that the
// result is exactly zero for a constant row and never negative.
inline double criticality_of(std::span<const double> row) {
  const double best = *std::max_element(row.begin(), row.end());
  double gap = 0.0;
  for (double x : row) gap += best - x;
  return gap / double(row.size());
}

struct CriticalityEntry {
  StateId state;
  double criticality;
  double value;
  std::string value_label;
  bool operator==(const CriticalityEntry&) const = default;
};

struct CriticalityRanking {
  std::vector<CriticalityEntry> entries;  // descending criticality, ties by id
  std::array<double, 4> value_cutpoints{};
  bool operator==(const CriticalityRanking&) const = default;
};

// Cutpoints at the 20/40/60/80 % order statistics of v. A value's bin is the
// number of cutpoints it reaches, so equal values share a label.
inline std::array<double, 4> value_quintile_cutpoints(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  std::array<double, 4> cuts{};
  for (std::size_t k = 1; k <= 4; ++k) cuts[k - 1] = v[(k * v.size()) / 5];
  return cuts;
}

inline std::size_t value_bin(double value, const std::array<double, 4>& cuts) {
  std::size_t bin = 0;
  for (double c : cuts) bin += value >= c;
  return bin;
}

inline CriticalityRanking criticality(const TrainedPolicy& policy) {
  CriticalityRanking out;
  out.value_cutpoints = value_quintile_cutpoints(policy.v());
  for (StateId s = 0; s < policy.num_states(); ++s) {
    const double v = policy.value(s);
    out.entries.push_back({s, criticality_of(policy.q_row(s)), v,
                           kValueLabels[value_bin(v, out.value_cutpoints)]});
  }
  std::stable_sort(out.entries.begin(), out.entries.end(),
                   [](const CriticalityEntry& a, const CriticalityEntry& b) {
                     return a.criticality > b.criticality;
                   });
  return out;
}

inline std::string value_label(const TrainedPolicy& policy, StateId s) {
  return kValueLabels[value_bin(policy.value(s), value_quintile_cutpoints(policy.v()))];
}

inline std::vector<StateId> important_states(const TrainedPolicy& policy, std::size_t k) {
  if (k > policy.num_states())
    throw ContractViolation("important_states: k exceeds the number of states");
  const auto ranking = criticality(policy);
  std::vector<StateId> out;
  for (std::size_t i = 0; i < k; ++i) out.push_back(ranking.entries[i].state);
  return out;
}

// ---------------------------------------------------------------------------
// Trajectories
// ---------------------------------------------------------------------------

struct TrajectoryStep {
  StateId state;
  ActionId action;
  double reward;
  StateId next;
  bool operator==(const TrajectoryStep&) const = default;
};

struct Trajectory {
  StateId start = 0;
  std::vector<TrajectoryStep> steps;
  bool reached_terminal = false;
  double discounted_return = 0.0;
  bool operator==(const Trajectory&) const = default;
};

inline Trajectory rollout(const DomainModel& domain, const TrainedPolicy& policy, StateId start,
                          std::size_t max_steps, Rng& rng) {
  check_state(domain, start);
  Trajectory t;
  t.start = start;
  StateId s = start;
  double discount = 1.0;
  while (!domain.is_terminal(s) && t.steps.size() < max_steps) {
    const ActionId a = policy.action(s);
    const auto [next, reward] = step(domain, s, a, rng);
    t.steps.push_back({s, a, reward, next});
    t.discounted_return += discount * reward;
    discount *= domain.discount();
    s = next;
  }
  t.reached_terminal = domain.is_terminal(s);
  return t;
}

// ---------------------------------------------------------------------------
// Policy summary
// ---------------------------------------------------------------------------

struct RewardBin {
  double reward;
  std::size_t count;
  bool operator==(const RewardBin&) const = default;
};

struct PolicySummary {
  std::vector<std::size_t> action_counts;  // states per optimal action
  std::vector<RewardBin> reward_histogram; // ascending reward
  bool operator==(const PolicySummary&) const = default;
};

// Expected immediate reward of the optimal action in every state.
inline std::vector<double> expected_rewards(const DomainModel& domain, const TrainedPolicy& policy) {
  std::vector<double> out(domain.num_states(), 0.0);
  for (const auto& st : domain.states()) {
    if (st.terminal) continue;
    double r = 0.0;
    for (const auto& o : domain.outcomes(st.id, policy.action(st.id))) r += o.prob * o.reward;
    out[st.id] = r;
  }
  return out;
}

inline PolicySummary summarize_policy(const DomainModel& domain, const TrainedPolicy& policy) {
  PolicySummary out;
  out.action_counts.assign(domain.num_actions(), 0);
  for (StateId s = 0; s < domain.num_states(); ++s) ++out.action_counts[policy.action(s)];
  std::map<double, std::size_t> bins;
  for (double r : expected_rewards(domain, policy)) {
    // Merge values that differ only by accumulated rounding.
    const double key = std::round(r * 1e9) / 1e9;
    ++bins[key == 0.0 ? 0.0 : key];
  }
  for (const auto& [r, n] : bins) out.reward_histogram.push_back({r, n});
  return out;
}

// ---------------------------------------------------------------------------
// 2-D projection
// ---------------------------------------------------------------------------

struct Projection {
  std::vector<std::array<double, 2>> coords;  // indexed by state id
  std::array<std::vector<double>, 2> components;
  std::array<double, 2> variances{};
};

// Principal-component projection of the centred, unscaled feature matrix.
// Each component's largest-magnitude loading is made positive (first such
// index on ties). Components with negligible variance project to zero.
inline Projection project_states(std::span<const StateRecord> states) {
  if (states.size() < 2) throw ContractViolation("project_states: need at least two states");
  const auto n = static_cast<Eigen::Index>(states.size());
  const auto f = static_cast<Eigen::Index>(states.front().features.size());
  Eigen::MatrixXd x(n, f);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < f; ++j) x(i, j) = states[i].features[j];
  const Eigen::RowVectorXd mean = x.colwise().mean();
  x.rowwise() -= mean;
  const Eigen::MatrixXd cov = (x.transpose() * x) / double(n - 1);

  Projection out;
  out.coords.assign(states.size(), {0.0, 0.0});
  for (auto& c : out.components) c.assign(std::size_t(f), 0.0);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  const Eigen::VectorXd& values = eig.eigenvalues();  // ascending
  const double top = values(f - 1);
  if (!(top > 0.0)) return out;

  for (int k = 0; k < 2 && k < f; ++k) {
    const Eigen::Index col = f - 1 - k;
    const double lambda = values(col);
    if (!(lambda > 1e-12 * top)) break;
    Eigen::VectorXd axis = eig.eigenvectors().col(col);
    Eigen::Index pivot = 0;
    for (Eigen::Index j = 1; j < f; ++j)
      if (std::abs(axis(j)) > std::abs(axis(pivot)) + 1e-12) pivot = j;
    if (axis(pivot) < 0) axis = -axis;
    const Eigen::VectorXd proj = x * axis;
    for (Eigen::Index i = 0; i < n; ++i) out.coords[i][k] = proj(i);
    for (Eigen::Index j = 0; j < f; ++j) out.components[k][j] = axis(j);
    out.variances[k] = lambda;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Plain-text rules: "if remaining_capacity >= 1.5 and robot_col < 2.5 then
// Pickup Box", or "always <action>" for an unconstrained rule.
// ---------------------------------------------------------------------------

inline std::string format_threshold(double x) {
  std::array<char, 64> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), x);
  return std::string(buf.data(), res.ptr);
}

inline std::string render_condition(const DomainModel& domain, const Condition& c) {
  const auto& name = domain.features().at(c.feature).name;
  const bool has_lo = std::isfinite(c.range.lo), has_hi = std::isfinite(c.range.hi);
  if (has_lo && has_hi)
    return format_threshold(c.range.lo) + " <= " + name + " < " + format_threshold(c.range.hi);
  if (has_lo) return name + " >= " + format_threshold(c.range.lo);
  if (has_hi) return name + " < " + format_threshold(c.range.hi);
  return name + " any";
}

inline std::string render_rule_text(const DomainModel& domain, const Rule& rule) {
  const auto& action = domain.action_label(rule.action);
  if (rule.conditions.empty()) return "always " + action;
  std::string out = "if ";
  for (std::size_t i = 0; i < rule.conditions.size(); ++i) {
    if (i) out += " and ";
    out += render_condition(domain, rule.conditions[i]);
  }
  return out + " then " + action;
}

namespace detail {

inline double parse_threshold(std::string_view text) {
  double x = 0.0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), x);
  if (res.ec != std::errc{} || res.ptr != text.data() + text.size())
    throw SchemaError("rule", 0, "bad number '" + std::string(text) + "' in rule text");
  return x;
}

inline std::vector<std::string_view> split_words(std::string_view text) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && text[i] == ' ') ++i;
    std::size_t j = i;
    while (j < text.size() && text[j] != ' ') ++j;
    if (j > i) out.push_back(text.substr(i, j - i));
    i = j;
  }
  return out;
}

}  // namespace detail

inline Rule parse_rule_text(const DomainModel& domain, std::string_view text) {
  auto fail = [&](const std::string& why) -> Rule {
    throw SchemaError("rule", 0, "cannot parse rule '" + std::string(text) + "': " + why);
  };
  auto action_of = [&](std::string_view label) {
    const auto a = domain.find_action(label);
    if (!a) fail("unknown action '" + std::string(label) + "'");
    return *a;
  };
  Rule rule;
  if (text.starts_with("always ")) {
    rule.action = action_of(text.substr(7));
    return rule;
  }
  if (!text.starts_with("if ")) return fail("expected 'if' or 'always'");
  const auto then_pos = text.rfind(" then ");
  if (then_pos == std::string_view::npos) return fail("missing 'then'");
  rule.action = action_of(text.substr(then_pos + 6));
  const auto body = text.substr(3, then_pos - 3);

  std::size_t start = 0;
  while (start <= body.size()) {
    auto end = body.find(" and ", start);
    if (end == std::string_view::npos) end = body.size();
    const auto words = detail::split_words(body.substr(start, end - start));
    auto feature_of = [&](std::string_view name) {
      const auto f = domain.find_feature(name);
      if (!f) fail("unknown feature '" + std::string(name) + "'");
      return *f;
    };
    Condition c{};
    if (words.size() == 5 && words[1] == "<=" && words[3] == "<") {
      c.feature = feature_of(words[2]);
      c.range = {detail::parse_threshold(words[0]), detail::parse_threshold(words[4])};
    } else if (words.size() == 3 && words[1] == ">=") {
      c.feature = feature_of(words[0]);
      c.range.lo = detail::parse_threshold(words[2]);
    } else if (words.size() == 3 && words[1] == "<") {
      c.feature = feature_of(words[0]);
      c.range.hi = detail::parse_threshold(words[2]);
    } else if (words.size() == 2 && words[1] == "any") {
      c.feature = feature_of(words[0]);
    } else {
      fail("malformed condition");
    }
    rule.conditions.push_back(c);
    start = end + 5;
  }
  return rule;
}

}  // namespace polex

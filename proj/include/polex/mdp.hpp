#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "polex/errors.hpp"
#include "polex/rng.hpp"

namespace polex {

using StateId = std::uint32_t;
using ActionId = std::uint32_t;
using FeatureVector = std::vector<double>;

struct FeatureSpec {
  std::string name;
  double min = 0.0;
  double max = 0.0;
  bool operator==(const FeatureSpec&) const = default;
};

struct StateRecord {
  StateId id = 0;
  FeatureVector features;
  bool terminal = false;
  bool operator==(const StateRecord&) const = default;
};

struct ActionSpec {
  ActionId id = 0;
  std::string label;
  bool operator==(const ActionSpec&) const = default;
};

struct Outcome {
  StateId next = 0;
  double prob = 0.0;
  double reward = 0.0;
  bool operator==(const Outcome&) const = default;
};

struct Glyph {
  std::string kind;
  int row = 0;
  int col = 0;
  bool operator==(const Glyph&) const = default;
};

// A wall blocks movement between two edge-adjacent cells.
struct WallSegment {
  int row_a = 0, col_a = 0, row_b = 0, col_b = 0;
  bool operator==(const WallSegment&) const = default;
};

struct Layout {
  int width = 0;
  int height = 0;
  std::vector<WallSegment> walls;
  std::vector<std::vector<Glyph>> glyphs;  // indexed by state id
  bool operator==(const Layout&) const = default;
};

using SubgoalMap = std::map<std::pair<StateId, ActionId>, std::string>;

// Raw description of a domain. Transition rows are indexed s * |A| + a;
// rows of terminal states may be left empty and are filled with the
// absorbing self-loop on construction of a DomainModel.
struct DomainData {
  std::string name;
  double discount = 0.95;
  std::vector<FeatureSpec> features;
  std::vector<ActionSpec> actions;
  std::vector<StateRecord> states;
  std::vector<std::vector<Outcome>> transitions;
  std::optional<Layout> layout;
  SubgoalMap subgoals;
  bool operator==(const DomainData&) const = default;
};

inline constexpr double kProbabilityTolerance = 1e-9;

// Validated, immutable MDP over an enumerated state set.
class DomainModel {
 public:
  explicit DomainModel(DomainData data) : data_(std::move(data)) {
    complete_terminal_rows();
    validate();
  }

  const std::string& name() const noexcept { return data_.name; }
  double discount() const noexcept { return data_.discount; }
  std::size_t num_states() const noexcept { return data_.states.size(); }
  std::size_t num_actions() const noexcept { return data_.actions.size(); }
  std::size_t num_features() const noexcept { return data_.features.size(); }

  const std::vector<FeatureSpec>& features() const noexcept { return data_.features; }
  const std::vector<ActionSpec>& actions() const noexcept { return data_.actions; }
  const std::vector<StateRecord>& states() const noexcept { return data_.states; }
  const StateRecord& state(StateId s) const { return data_.states.at(s); }
  const std::string& action_label(ActionId a) const { return data_.actions.at(a).label; }
  bool is_terminal(StateId s) const { return data_.states.at(s).terminal; }

  std::span<const Outcome> outcomes(StateId s, ActionId a) const {
    return data_.transitions.at(static_cast<std::size_t>(s) * num_actions() + a);
  }

  const std::optional<Layout>& layout() const noexcept { return data_.layout; }
  const SubgoalMap& subgoals() const noexcept { return data_.subgoals; }

  std::optional<std::string> subgoal(StateId s, ActionId a) const {
    auto it = data_.subgoals.find({s, a});
    if (it == data_.subgoals.end()) return std::nullopt;
    return it->second;
  }

  std::optional<ActionId> find_action(std::string_view label) const {
    for (const auto& a : data_.actions)
      if (a.label == label) return a.id;
    return std::nullopt;
  }

  std::optional<std::size_t> find_feature(std::string_view name) const {
    for (std::size_t i = 0; i < data_.features.size(); ++i)
      if (data_.features[i].name == name) return i;
    return std::nullopt;
  }

  const DomainData& data() const noexcept { return data_; }

  bool operator==(const DomainModel& other) const { return data_ == other.data_; }

 private:
  void complete_terminal_rows() {
    const std::size_t n_a = data_.actions.size();
    if (data_.transitions.size() < data_.states.size() * n_a)
      data_.transitions.resize(data_.states.size() * n_a);
    for (const auto& st : data_.states) {
      if (!st.terminal || st.id >= data_.states.size()) continue;
      for (std::size_t a = 0; a < n_a; ++a) {
        auto& row = data_.transitions[st.id * n_a + a];
        if (row.empty()) row.push_back({st.id, 1.0, 0.0});
      }
    }
  }

  void validate() const {
    const auto& d = data_;
    if (d.name.empty()) throw ValidationError("domain name is empty");
    if (!(d.discount > 0.0 && d.discount <= 1.0))
      throw ValidationError("discount must lie in (0, 1], got " + std::to_string(d.discount));
    if (d.features.empty()) throw ValidationError("domain declares no features");
    for (const auto& f : d.features) {
      if (!std::isfinite(f.min) || !std::isfinite(f.max) || f.min > f.max)
        throw ValidationError("feature '" + f.name + "' has an invalid declared range");
    }
    if (d.actions.empty()) throw ValidationError("domain declares no actions");
    std::set<std::string> labels;
    for (std::size_t i = 0; i < d.actions.size(); ++i) {
      if (d.actions[i].id != i)
        throw ValidationError("action ids must be contiguous from 0 (at index " +
                              std::to_string(i) + ")");
      if (!labels.insert(d.actions[i].label).second)
        throw ValidationError("duplicate action label '" + d.actions[i].label + "'");
    }
    if (d.states.empty()) throw ValidationError("domain has no states");
    std::set<FeatureVector> seen;
    for (std::size_t i = 0; i < d.states.size(); ++i) {
      const auto& st = d.states[i];
      if (st.id != i)
        throw ValidationError("state ids must be contiguous from 0 (at index " +
                              std::to_string(i) + ")");
      if (st.features.size() != d.features.size())
        throw ValidationError("state " + std::to_string(i) + " has " +
                              std::to_string(st.features.size()) + " features, expected " +
                              std::to_string(d.features.size()));
      for (std::size_t f = 0; f < st.features.size(); ++f) {
        const double x = st.features[f];
        if (!std::isfinite(x))
          throw ValidationError("state " + std::to_string(i) + " feature '" +
                                d.features[f].name + "' is not finite");
        if (x < d.features[f].min || x > d.features[f].max)
          throw ValidationError("state " + std::to_string(i) + " feature '" +
                                d.features[f].name + "' lies outside its declared range");
      }
      if (!seen.insert(st.features).second)
        throw ValidationError("state " + std::to_string(i) +
                              " duplicates the feature vector of an earlier state");
    }
    const std::size_t n_a = d.actions.size();
    if (d.transitions.size() != d.states.size() * n_a)
      throw ValidationError("transition table has the wrong number of rows");
    for (std::size_t s = 0; s < d.states.size(); ++s) {
      for (std::size_t a = 0; a < n_a; ++a) {
        const auto& row = d.transitions[s * n_a + a];
        const std::string where =
            "state " + std::to_string(s) + ", action " + std::to_string(a);
        if (row.empty()) throw ValidationError("missing transition row for " + where);
        double total = 0.0;
        for (const auto& o : row) {
          if (o.next >= d.states.size())
            throw ValidationError("successor out of range for " + where);
          if (!(o.prob >= 0.0) || !std::isfinite(o.prob))
            throw ValidationError("invalid probability for " + where);
          if (!std::isfinite(o.reward)) throw ValidationError("non-finite reward for " + where);
          total += o.prob;
        }
        if (std::abs(total - 1.0) > kProbabilityTolerance)
          throw ValidationError("transition probabilities for " + where + " sum to " +
                                std::to_string(total) + ", not 1");
        if (d.states[s].terminal) {
          if (row.size() != 1 || row[0].next != s || row[0].reward != 0.0)
            throw ValidationError("terminal " + where +
                                  " must be an absorbing self-loop with reward 0");
        }
      }
    }
    if (d.layout) {
      if (d.layout->glyphs.size() != d.states.size())
        throw ValidationError("layout glyph table must have one entry per state");
    }
    for (const auto& [key, label] : d.subgoals) {
      if (key.first >= d.states.size() || key.second >= n_a)
        throw ValidationError("subgoal annotation references an unknown state or action");
    }
  }

  DomainData data_;
};

struct StepResult {
  StateId next;
  double reward;
};

// Samples one transition from T(s, a, .).
inline StepResult step(const DomainModel& domain, StateId s, ActionId a, Rng& rng) {
  if (s >= domain.num_states() || a >= domain.num_actions())
    throw ContractViolation("step: state or action id out of range");
  if (domain.is_terminal(s))
    throw ContractViolation("step: state " + std::to_string(s) + " is terminal");
  const auto row = domain.outcomes(s, a);
  if (row.size() == 1) return {row[0].next, row[0].reward};
  const double u = rng.uniform01();
  double acc = 0.0;
  for (const auto& o : row) {
    acc += o.prob;
    if (u < acc) return {o.next, o.reward};
  }
  return {row.back().next, row.back().reward};
}

// Euclidean distance over raw feature values. `scale`, when non-empty,
// multiplies each coordinate difference.
inline double euclidean_distance(std::span<const double> x, std::span<const double> y,
                                 std::span<const double> scale = {}) {
  if (x.size() != y.size())
    throw ContractViolation("euclidean_distance: feature vectors differ in length");
  if (!scale.empty() && scale.size() != x.size())
    throw ContractViolation("euclidean_distance: scale vector has the wrong length");
  double sum = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double d = x[i] - y[i];
    if (!scale.empty()) d *= scale[i];
    sum += d * d;
  }
  return std::sqrt(sum);
}

}  // namespace polex

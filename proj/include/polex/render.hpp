#pragma once

// Canonical JSON shapes of everything the service and the CLI emit. The
// schemas under schemas/ describe these documents.

#include <cmath>
#include <string>

#include <nlohmann/json.hpp>

#include "polex/explain.hpp"
#include "polex/mdp.hpp"
#include "polex/policy.hpp"
#include "polex/tree.hpp"

namespace polex::render {

using nlohmann::json;

inline json finite_or_null(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

inline json state_record(const DomainModel& domain, const StateRecord& s) {
  json features = json::array();
  for (std::size_t i = 0; i < s.features.size(); ++i)
    features.push_back({{"name", domain.features()[i].name}, {"value", s.features[i]}});
  return {{"id", s.id}, {"features", std::move(features)}, {"terminal", s.terminal}};
}

// `prefix_counts[k]` is the number of states satisfying the first k+1
// conditions; the UI sizes flow-diagram links with it.
inline json rule(const DomainModel& domain, const Rule& r) {
  json conditions = json::array();
  Rule prefix;
  prefix.action = r.action;
  json prefix_counts = json::array();
  for (const auto& c : r.conditions) {
    const auto& spec = domain.features().at(c.feature);
    conditions.push_back({{"feature", c.feature},
                          {"name", spec.name},
                          {"lo", finite_or_null(c.range.lo)},
                          {"hi", finite_or_null(c.range.hi)},
                          {"declared_min", spec.min},
                          {"declared_max", spec.max}});
    prefix.conditions.push_back(c);
    prefix_counts.push_back(rule_coverage(prefix, domain.states()).size());
  }
  return {{"action", r.action},
          {"action_label", domain.action_label(r.action)},
          {"conditions", std::move(conditions)},
          {"prefix_counts", std::move(prefix_counts)},
          {"text", render_rule_text(domain, r)}};
}

inline json explanation(const DomainModel& domain, const WhyExplanation& e) {
  return {{"type", "why"},
          {"domain", domain.name()},
          {"state", e.state},
          {"action", e.action},
          {"action_label", domain.action_label(e.action)},
          {"rule", rule(domain, e.rule)},
          {"coverage", {{"count", e.coverage.size()}, {"states", e.coverage}}},
          {"subgoal", e.subgoal ? json(*e.subgoal) : json(nullptr)}};
}

inline json explanation(const DomainModel& domain, const WhyNotExplanation& e) {
  return {{"type", "whynot"},
          {"domain", domain.name()},
          {"state", e.state},
          {"fact_action", e.fact_action},
          {"fact_action_label", domain.action_label(e.fact_action)},
          {"foil_action", e.foil_action},
          {"foil_action_label", domain.action_label(e.foil_action)},
          {"foil_state", e.foil_state},
          {"distance", e.distance},
          {"fact_rule", rule(domain, e.fact_rule)},
          {"foil_rule", rule(domain, e.foil_rule)}};
}

inline json explanation(const DomainModel& domain, const WhenExplanation& e) {
  json entries = json::array();
  for (const auto& w : e.entries)
    entries.push_back({{"rule", rule(domain, w.rule)}, {"count", w.count}, {"leaf", w.leaf}});
  return {{"type", "when"},
          {"domain", domain.name()},
          {"action", e.action},
          {"action_label", domain.action_label(e.action)},
          {"never_taken", e.never_taken()},
          {"entries", std::move(entries)}};
}

inline json explanation(const DomainModel& domain, const Explanation& e) {
  return std::visit([&](const auto& x) { return explanation(domain, x); }, e);
}

inline std::string explanation_text(const DomainModel& domain, const Explanation& e) {
  struct Visitor {
    const DomainModel& d;
    std::string operator()(const WhyExplanation& w) const {
      std::string out = "Why " + d.action_label(w.action) + " in state " +
                        std::to_string(w.state) + "?\n  " + render_rule_text(d, w.rule) +
                        "\n  holds in " + std::to_string(w.coverage.size()) + " of " +
                        std::to_string(d.num_states()) + " states";
      if (w.subgoal) out += "\n  subgoal: " + *w.subgoal;
      return out + "\n";
    }
    std::string operator()(const WhyNotExplanation& w) const {
      return "Why " + d.action_label(w.fact_action) + " instead of " +
             d.action_label(w.foil_action) + " in state " + std::to_string(w.state) +
             "?\n  chosen:      " + render_rule_text(d, w.fact_rule) +
             "\n  alternative: " + render_rule_text(d, w.foil_rule) + "\n  (nearest state taking " +
             d.action_label(w.foil_action) + " is " + std::to_string(w.foil_state) +
             ", distance " + format_threshold(w.distance) + ")\n";
    }
    std::string operator()(const WhenExplanation& w) const {
      std::string out = "When is " + d.action_label(w.action) + " taken?\n";
      if (w.never_taken()) return out + "  never: no state has it as the optimal action\n";
      for (const auto& e : w.entries)
        out += "  " + render_rule_text(d, e.rule) + "  (" + std::to_string(e.count) + " states)\n";
      return out;
    }
  };
  return std::visit(Visitor{domain}, e);
}

inline json trajectory(const DomainModel& domain, const Trajectory& t) {
  json steps = json::array();
  for (const auto& s : t.steps)
    steps.push_back({{"state", s.state},
                     {"action", s.action},
                     {"action_label", domain.action_label(s.action)},
                     {"reward", s.reward},
                     {"next", s.next}});
  return {{"domain", domain.name()},
          {"start", t.start},
          {"reached_terminal", t.reached_terminal},
          {"discounted_return", t.discounted_return},
          {"steps", std::move(steps)}};
}

inline json criticality(const DomainModel& domain, const CriticalityRanking& r) {
  json entries = json::array();
  for (const auto& e : r.entries)
    entries.push_back({{"state", e.state},
                       {"criticality", e.criticality},
                       {"value", e.value},
                       {"value_label", e.value_label}});
  return {{"domain", domain.name()},
          {"value_cutpoints", r.value_cutpoints},
          {"entries", std::move(entries)}};
}

inline json projection(const TrainedPolicy& policy, const Projection& p) {
  json points = json::array();
  for (std::size_t s = 0; s < p.coords.size(); ++s)
    points.push_back({{"state", s},
                      {"x", p.coords[s][0]},
                      {"y", p.coords[s][1]},
                      {"action", policy.action(StateId(s))}});
  return {{"components", {p.components[0], p.components[1]}},
          {"variances", p.variances},
          {"points", std::move(points)}};
}

inline json policy_summary(const DomainModel& domain, const TrainedPolicy& policy,
                           const PolicySummary& summary, const Projection& proj) {
  json actions = json::array();
  for (ActionId a = 0; a < domain.num_actions(); ++a)
    actions.push_back(
        {{"id", a}, {"label", domain.action_label(a)}, {"count", summary.action_counts[a]}});
  json rewards = json::array();
  for (const auto& b : summary.reward_histogram)
    rewards.push_back({{"reward", b.reward}, {"count", b.count}});
  return {{"domain", domain.name()},
          {"solver", policy.solver()},
          {"actions", std::move(actions)},
          {"reward_histogram", std::move(rewards)},
          {"projection", projection(policy, proj)}};
}

inline json error(const std::string& code, const std::string& reason) {
  return {{"error", code}, {"reason", reason}};
}

}  // namespace polex::render

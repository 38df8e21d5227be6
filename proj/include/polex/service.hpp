#pragma once

// Read-only query service over a workspace of trained artifacts. Routing is
// a pure function of (workspace, path, query) so it can be exercised without
// a socket; `serve` only adapts it to HTTP.

#include <charconv>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "polex/artifacts.hpp"
#include "polex/explain.hpp"
#include "polex/render.hpp"

namespace polex {

inline constexpr std::size_t kDefaultPageSize = 50;
inline constexpr std::size_t kMaxPageSize = 1000;
inline constexpr std::size_t kDefaultTrajectorySteps = 100;
inline constexpr std::uint64_t kTrajectorySeed = 0;

// One trained domain plus the analytics derived from it at load time.
struct WorkspaceEntry {
  DomainModel domain;
  TrainedPolicy policy;
  SurrogateTree tree;
  nlohmann::json manifest;
  CriticalityRanking ranking;
  std::vector<double> criticality_by_state;
  Projection projection;
  PolicySummary summary;

  explicit WorkspaceEntry(ArtifactBundle b)
      : domain(std::move(b.domain)),
        policy(std::move(b.policy)),
        tree(std::move(b.tree)),
        manifest(std::move(b.manifest)),
        ranking(polex::criticality(policy)),
        criticality_by_state(domain.num_states()),
        projection(domain.num_states() >= 2 ? project_states(domain.states()) : Projection{}),
        summary(summarize_policy(domain, policy)) {
    for (const auto& e : ranking.entries) criticality_by_state[e.state] = e.criticality;
    if (projection.coords.empty()) projection.coords.assign(domain.num_states(), {0.0, 0.0});
  }
};

class Workspace {
 public:
  Workspace() = default;

  // Every subdirectory of `root` holding a manifest is one registered domain.
  static Workspace load(const std::filesystem::path& root) {
    if (!std::filesystem::is_directory(root))
      throw Error("artifact directory not found: " + root.string());
    Workspace ws;
    ws.root_ = root;
    std::vector<std::filesystem::path> dirs;
    for (const auto& e : std::filesystem::directory_iterator(root))
      if (e.is_directory() && std::filesystem::exists(e.path() / kManifestFile))
        dirs.push_back(e.path());
    std::sort(dirs.begin(), dirs.end());
    for (const auto& d : dirs) ws.add(read_artifacts(d));
    return ws;
  }

  void add(ArtifactBundle bundle) {
    auto entry = std::make_shared<const WorkspaceEntry>(std::move(bundle));
    const std::string name = entry->domain.name();
    if (!entries_.emplace(name, std::move(entry)).second)
      throw ValidationError("domain '" + name + "' is registered twice");
  }

  const WorkspaceEntry* find(const std::string& name) const {
    auto it = entries_.find(name);
    return it == entries_.end() ? nullptr : it->second.get();
  }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (const auto& [name, _] : entries_) out.push_back(name);
    return out;
  }

  const std::filesystem::path& root() const noexcept { return root_; }

 private:
  std::filesystem::path root_;
  std::map<std::string, std::shared_ptr<const WorkspaceEntry>> entries_;
};

struct Response {
  int status = 200;
  nlohmann::json body;
  std::string text() const { return body.dump() + "\n"; }
};

using QueryParams = std::map<std::string, std::string>;

namespace detail {

struct RouteError {
  int status;
  std::string code;
  std::string reason;
};

inline std::vector<std::string> split_path(std::string_view path) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < path.size()) {
    while (i < path.size() && path[i] == '/') ++i;
    std::size_t j = i;
    while (j < path.size() && path[j] != '/') ++j;
    if (j > i) out.emplace_back(path.substr(i, j - i));
    i = j;
  }
  return out;
}

inline std::optional<std::uint64_t> parse_uint(std::string_view text) {
  std::uint64_t x = 0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), x);
  if (res.ec != std::errc{} || res.ptr != text.data() + text.size()) return std::nullopt;
  return x;
}

inline StateId state_param(const DomainModel& d, std::string_view text) {
  const auto s = parse_uint(text);
  if (!s) throw RouteError{400, "bad_request", "state id must be a non-negative integer"};
  if (*s >= d.num_states())
    throw RouteError{404, "state_not_found",
                     "state " + std::string(text) + " does not exist in '" + d.name() + "'"};
  return static_cast<StateId>(*s);
}

// Accepts an action id or its label.
inline ActionId action_param(const DomainModel& d, std::string_view text) {
  if (const auto a = parse_uint(text)) {
    if (*a >= d.num_actions())
      throw RouteError{404, "action_not_found", "action " + std::string(text) + " does not exist"};
    return static_cast<ActionId>(*a);
  }
  if (const auto a = d.find_action(text)) return *a;
  throw RouteError{404, "action_not_found", "unknown action '" + std::string(text) + "'"};
}

inline std::size_t uint_query(const QueryParams& q, const std::string& key, std::size_t fallback,
                              std::size_t min, std::size_t max) {
  auto it = q.find(key);
  if (it == q.end()) return fallback;
  const auto v = parse_uint(it->second);
  if (!v || *v < min || *v > max)
    throw RouteError{400, "bad_request",
                     key + " must be an integer in [" + std::to_string(min) + ", " +
                         std::to_string(max) + "]"};
  return *v;
}

inline nlohmann::json states_page(const WorkspaceEntry& e, const QueryParams& q) {
  const std::size_t per_page = uint_query(q, "per_page", kDefaultPageSize, 1, kMaxPageSize);
  const std::size_t total = e.domain.num_states();
  const std::size_t pages = (total + per_page - 1) / per_page;
  const std::size_t page = uint_query(q, "page", 1, 1, std::max<std::size_t>(pages, 1));
  nlohmann::json states = nlohmann::json::array();
  for (std::size_t s = (page - 1) * per_page; s < std::min(total, page * per_page); ++s) {
    auto rec = render::state_record(e.domain, e.domain.state(StateId(s)));
    rec["action"] = e.policy.action(StateId(s));
    rec["value"] = e.policy.value(StateId(s));
    rec["criticality"] = e.criticality_by_state[s];
    states.push_back(std::move(rec));
  }
  return {{"domain", e.domain.name()}, {"page", page},   {"per_page", per_page},
          {"total", total},            {"pages", pages}, {"states", std::move(states)}};
}

inline nlohmann::json state_detail(const WorkspaceEntry& e, StateId s) {
  const auto row = e.policy.q_row(s);
  const ActionId a = e.policy.action(s);
  const auto sub = e.domain.subgoal(s, a);
  return {{"domain", e.domain.name()},
          {"state", render::state_record(e.domain, e.domain.state(s))},
          {"q", std::vector<double>(row.begin(), row.end())},
          {"action", a},
          {"action_label", e.domain.action_label(a)},
          {"value", e.policy.value(s)},
          {"value_label", kValueLabels[value_bin(e.policy.value(s), e.ranking.value_cutpoints)]},
          {"criticality", e.criticality_by_state[s]},
          {"subgoal", sub ? nlohmann::json(*sub) : nlohmann::json(nullptr)}};
}

inline nlohmann::json layout(const DomainModel& d) {
  const auto& l = *d.layout();
  nlohmann::json walls = nlohmann::json::array();
  for (const auto& w : l.walls) walls.push_back({w.row_a, w.col_a, w.row_b, w.col_b});
  nlohmann::json glyphs = nlohmann::json::array();
  for (const auto& per_state : l.glyphs) {
    nlohmann::json g = nlohmann::json::array();
    for (const auto& x : per_state) g.push_back({{"kind", x.kind}, {"row", x.row}, {"col", x.col}});
    glyphs.push_back(std::move(g));
  }
  return {{"domain", d.name()},
          {"width", l.width},
          {"height", l.height},
          {"walls", std::move(walls)},
          {"glyphs", std::move(glyphs)}};
}

}  // namespace detail

// Routes one GET request. Responses depend only on the workspace contents
// and the request.
inline Response handle_request(const Workspace& ws, std::string_view path,
                               const QueryParams& query = {}) {
  using detail::RouteError;
  const auto seg = detail::split_path(path);
  try {
    if (seg.empty() || seg[0] != "domains")
      throw RouteError{404, "not_found", "no endpoint at " + std::string(path)};
    if (seg.size() == 1) {
      nlohmann::json list = nlohmann::json::array();
      for (const auto& name : ws.names()) {
        const auto* e = ws.find(name);
        list.push_back({{"name", name},
                        {"num_states", e->domain.num_states()},
                        {"num_actions", e->domain.num_actions()},
                        {"num_features", e->domain.num_features()},
                        {"solver", e->policy.solver()},
                        {"fidelity", e->tree.fidelity()},
                        {"has_layout", e->domain.layout().has_value()}});
      }
      return {200, {{"domains", std::move(list)}}};
    }
    const auto* e = ws.find(seg[1]);
    if (!e) throw RouteError{404, "domain_not_found", "no artifacts for domain '" + seg[1] + "'"};
    const auto& d = e->domain;
    const std::size_t n = seg.size();

    if (n == 3 && seg[2] == "states") return {200, detail::states_page(*e, query)};
    if (n == 3 && seg[2] == "layout") {
      if (!d.layout()) throw RouteError{404, "no_layout", "'" + d.name() + "' has no spatial layout"};
      return {200, detail::layout(d)};
    }
    if (n == 4 && seg[2] == "states") return {200, detail::state_detail(*e, detail::state_param(d, seg[3]))};
    if (n == 5 && seg[2] == "states" && seg[4] == "trajectory") {
      const StateId s = detail::state_param(d, seg[3]);
      const std::size_t max_steps =
          detail::uint_query(query, "max_steps", kDefaultTrajectorySteps, 0, 100000);
      Rng rng(kTrajectorySeed);
      return {200, render::trajectory(d, rollout(d, e->policy, s, max_steps, rng))};
    }
    if (n == 4 && seg[2] == "policy" && seg[3] == "summary")
      return {200, render::policy_summary(d, e->policy, e->summary, e->projection)};
    if (n == 4 && seg[2] == "policy" && seg[3] == "criticality")
      return {200, render::criticality(d, e->ranking)};
    if (n >= 4 && seg[2] == "explain") {
      if (seg[3] == "why" && n == 5)
        return {200, render::explanation(
                         d, explain_why(d, e->policy, e->tree, detail::state_param(d, seg[4])))};
      if (seg[3] == "whynot" && n == 6)
        return {200, render::explanation(
                         d, explain_why_not(d, e->policy, e->tree, detail::state_param(d, seg[4]),
                                            detail::action_param(d, seg[5])))};
      if (seg[3] == "when" && n == 5)
        return {200,
                render::explanation(d, explain_when(d, e->tree, detail::action_param(d, seg[4])))};
    }
    throw RouteError{404, "not_found", "no endpoint at " + std::string(path)};
  } catch (const RouteError& err) {
    return {err.status, render::error(err.code, err.reason)};
  } catch (const InvalidFoil& err) {
    return {422, render::error("invalid_foil", err.what())};
  } catch (const NoFoilState& err) {
    return {422, render::error("no_foil_state", err.what())};
  } catch (const ExplanationUnavailable& err) {
    return {422, render::error("explanation_unavailable", err.what())};
  } catch (const ContractViolation& err) {
    return {400, render::error("bad_request", err.what())};
  }
}

}  // namespace polex

#pragma once

// On-disk artifacts of a training run: the domain, the trained policy, the
// surrogate tree, and a run manifest with checksums of the other three.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "polex/domain_io.hpp"
#include "polex/policy.hpp"
#include "polex/tree.hpp"

namespace polex {

inline constexpr const char* kPolicyFormat = "polex-policy";
inline constexpr const char* kTreeFormat = "polex-tree";
inline constexpr int kArtifactVersion = 1;

inline constexpr const char* kDomainFile = "domain.json";
inline constexpr const char* kPolicyFile = "policy.json";
inline constexpr const char* kTreeFile = "tree.json";
inline constexpr const char* kManifestFile = "manifest.json";

// 64-bit FNV-1a, hex encoded.
inline std::string checksum(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---------------------------------------------------------------------------
// Policy
// ---------------------------------------------------------------------------

inline nlohmann::json policy_to_json(const TrainedPolicy& p) {
  using nlohmann::json;
  json q = json::array();
  for (StateId s = 0; s < p.num_states(); ++s) {
    const auto row = p.q_row(s);
    q.push_back(json(std::vector<double>(row.begin(), row.end())));
  }
  return {{"format", kPolicyFormat},
          {"version", kArtifactVersion},
          {"solver", p.solver()},
          {"gamma", p.gamma()},
          {"num_states", p.num_states()},
          {"num_actions", p.num_actions()},
          {"provenance", p.provenance()},
          {"q", std::move(q)},
          {"pi", p.pi()},
          {"v", p.v()}};
}

inline std::string serialize_policy(const TrainedPolicy& p) { return policy_to_json(p).dump(1) + "\n"; }

inline TrainedPolicy policy_from_json(const nlohmann::json& doc, const DomainModel& domain) {
  using detail::FieldReader;
  const FieldReader root(doc, "");
  if (root.at("format").string() != kPolicyFormat) root.at("format").fail("not a policy artifact");
  const auto n_s = root.at("num_states").index();
  const auto n_a = root.at("num_actions").index();
  if (n_s != domain.num_states() || n_a != domain.num_actions())
    root.fail("policy dimensions do not match domain '" + domain.name() + "'");
  const auto rows = root.at("q");
  if (rows.size() != n_s) rows.fail("expected one row per state");
  std::vector<double> q;
  q.reserve(n_s * n_a);
  for (std::size_t s = 0; s < n_s; ++s) {
    const auto row = rows.at(s);
    if (row.size() != n_a) row.fail("expected one value per action");
    for (std::size_t a = 0; a < n_a; ++a) q.push_back(row.at(a).number());
  }
  std::map<std::string, std::string> prov;
  const auto p = root.at("provenance");
  if (!p.node().is_object()) p.fail("expected an object");
  for (const auto& [k, v] : p.node().items()) {
    if (!v.is_string()) p.fail("provenance values must be strings");
    prov[k] = v.get<std::string>();
  }
  TrainedPolicy policy(std::move(q), n_s, n_a, root.at("gamma").number(), terminal_flags(domain),
                       root.at("solver").string(), std::move(prov));
  const auto pi = root.at("pi");
  if (pi.size() != n_s) pi.fail("expected one action per state");
  for (std::size_t s = 0; s < n_s; ++s)
    if (pi.at(s).index() != policy.action(StateId(s)))
      pi.at(s).fail("stored action disagrees with the greedy action of the q table");
  return policy;
}

// ---------------------------------------------------------------------------
// Tree (preorder node list)
// ---------------------------------------------------------------------------

inline nlohmann::json tree_to_json(const SurrogateTree& tree) {
  using nlohmann::json;
  json nodes = json::array();
  for (const auto& n : tree.nodes()) {
    if (n.leaf)
      nodes.push_back({{"leaf", {{"action", n.action}, {"states", n.states}}}});
    else
      nodes.push_back({{"split", {{"feature", n.feature}, {"threshold", n.threshold}}}});
  }
  return {{"format", kTreeFormat},
          {"version", kArtifactVersion},
          {"num_features", tree.num_features()},
          {"num_actions", tree.num_actions()},
          {"fidelity", tree.fidelity()},
          {"unsplittable", tree.unsplittable_leaves()},
          {"nodes", std::move(nodes)}};
}

inline std::string serialize_tree(const SurrogateTree& tree) { return tree_to_json(tree).dump(1) + "\n"; }

inline SurrogateTree tree_from_json(const nlohmann::json& doc) {
  using detail::FieldReader;
  const FieldReader root(doc, "");
  if (root.at("format").string() != kTreeFormat) root.at("format").fail("not a tree artifact");
  const auto list = root.at("nodes");
  std::vector<TreeNode> nodes(list.size());
  std::size_t cursor = 0;

  // Rebuilds child links from the preorder listing.
  auto build = [&](auto& self, std::optional<std::size_t> parent) -> std::size_t {
    if (cursor >= nodes.size()) list.fail("truncated preorder node list");
    const std::size_t i = cursor++;
    const auto entry = list.at(i);
    auto& n = nodes[i];
    n.parent = parent;
    if (entry.has("leaf")) {
      const auto leaf = entry.at("leaf");
      n.leaf = true;
      n.action = static_cast<ActionId>(leaf.at("action").index());
      const auto states = leaf.at("states");
      for (std::size_t k = 0; k < states.size(); ++k)
        n.states.push_back(static_cast<StateId>(states.at(k).index()));
      return i;
    }
    const auto split = entry.at("split");
    n.leaf = false;
    n.feature = split.at("feature").index();
    n.threshold = split.at("threshold").number();
    const std::size_t left = self(self, i);
    const std::size_t right = self(self, i);
    nodes[i].left = left;
    nodes[i].right = right;
    return i;
  };
  build(build, std::nullopt);
  if (cursor != nodes.size()) list.fail("trailing nodes after the preorder traversal");

  std::vector<std::size_t> unsplittable;
  const auto u = root.at("unsplittable");
  for (std::size_t k = 0; k < u.size(); ++k) unsplittable.push_back(u.at(k).index());
  return SurrogateTree(std::move(nodes), root.at("num_features").index(),
                       root.at("num_actions").index(), root.at("fidelity").number(),
                       std::move(unsplittable));
}

// ---------------------------------------------------------------------------
// Artifact directory
// ---------------------------------------------------------------------------

struct ArtifactBundle {
  DomainModel domain;
  TrainedPolicy policy;
  SurrogateTree tree;
  nlohmann::json manifest;
};

// Writes domain, policy and tree, then the manifest carrying their
// checksums. `run_info` is merged into the manifest.
inline void write_artifacts(const std::filesystem::path& dir, const DomainModel& domain,
                            const TrainedPolicy& policy, const SurrogateTree& tree,
                            const nlohmann::json& run_info) {
  const std::string domain_text = serialize_domain(domain);
  const std::string policy_text = serialize_policy(policy);
  const std::string tree_text = serialize_tree(tree);
  detail::write_file(dir / kDomainFile, domain_text);
  detail::write_file(dir / kPolicyFile, policy_text);
  detail::write_file(dir / kTreeFile, tree_text);
  nlohmann::json manifest = run_info;
  manifest["format"] = "polex-manifest";
  manifest["version"] = kArtifactVersion;
  manifest["domain"] = domain.name();
  manifest["solver"] = policy.solver();
  manifest["fidelity"] = tree.fidelity();
  manifest["checksums"] = {{kDomainFile, checksum(domain_text)},
                           {kPolicyFile, checksum(policy_text)},
                           {kTreeFile, checksum(tree_text)}};
  detail::write_file(dir / kManifestFile, manifest.dump(1) + "\n");
}

inline ArtifactBundle read_artifacts(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir))
    throw Error("artifact directory not found: " + dir.string());
  const auto manifest = detail::parse_document(detail::read_file(dir / kManifestFile));
  const auto checked = [&](const char* file) {
    std::string text = detail::read_file(dir / file);
    std::string expected;
    if (const auto it = manifest.find("checksums"); it != manifest.end() && it->is_object())
      expected = it->value(file, std::string{});
    if (expected != checksum(text))
      throw ValidationError(dir.string() + "/" + file + " does not match its manifest checksum");
    return text;
  };
  DomainModel domain = parse_domain(checked(kDomainFile));
  TrainedPolicy policy = policy_from_json(detail::parse_document(checked(kPolicyFile)), domain);
  SurrogateTree tree = tree_from_json(detail::parse_document(checked(kTreeFile)));
  if (tree.num_features() != domain.num_features() || tree.num_actions() != domain.num_actions())
    throw ValidationError("tree artifact does not match domain '" + domain.name() + "'");
  return {std::move(domain), std::move(policy), std::move(tree), manifest};
}

}  // namespace polex

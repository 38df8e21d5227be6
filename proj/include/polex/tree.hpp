#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "polex/errors.hpp"
#include "polex/mdp.hpp"

namespace polex {

enum class Edge { left, right };

// Flat node storage in preorder; a node's index is its preorder position.
// Internal nodes route f < threshold to the left child and f >= threshold
// to the right child.
struct TreeNode {
  bool leaf = true;
  std::size_t feature = 0;
  double threshold = 0.0;
  std::size_t left = 0;
  std::size_t right = 0;
  std::optional<std::size_t> parent;
  ActionId action = 0;
  std::vector<StateId> states;  // training states routed here (leaves only)

  bool operator==(const TreeNode&) const = default;
};

class SurrogateTree {
 public:
  SurrogateTree() = default;
  SurrogateTree(std::vector<TreeNode> nodes, std::size_t num_features, std::size_t num_actions,
                double fidelity, std::vector<std::size_t> unsplittable = {})
      : nodes_(std::move(nodes)),
        num_features_(num_features),
        num_actions_(num_actions),
        fidelity_(fidelity),
        unsplittable_(std::move(unsplittable)) {
    check_structure();
  }

  const std::vector<TreeNode>& nodes() const noexcept { return nodes_; }
  const TreeNode& node(std::size_t i) const { return nodes_.at(i); }
  std::size_t root() const noexcept { return 0; }
  std::size_t num_features() const noexcept { return num_features_; }
  std::size_t num_actions() const noexcept { return num_actions_; }
  double fidelity() const noexcept { return fidelity_; }
  // Leaves whose training states could not be separated by any threshold.
  const std::vector<std::size_t>& unsplittable_leaves() const noexcept { return unsplittable_; }

  std::vector<std::size_t> leaves() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < nodes_.size(); ++i)
      if (nodes_[i].leaf) out.push_back(i);
    return out;
  }

  std::size_t depth() const {
    std::size_t best = 0;
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      std::size_t d = 0;
      for (auto p = nodes_[i].parent; p; p = nodes_[*p].parent) ++d;
      best = std::max(best, d);
    }
    return best;
  }

  bool operator==(const SurrogateTree&) const = default;

 private:
  void check_structure() const {
    if (nodes_.empty()) throw ValidationError("SurrogateTree: no nodes");
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      const auto& n = nodes_[i];
      if (n.leaf) {
        if (n.action >= num_actions_) throw ValidationError("SurrogateTree: leaf action out of range");
        continue;
      }
      if (n.feature >= num_features_)
        throw ValidationError("SurrogateTree: split feature out of range");
      if (n.left <= i || n.right <= i || n.left >= nodes_.size() || n.right >= nodes_.size())
        throw ValidationError("SurrogateTree: child index violates preorder layout");
      if (nodes_[n.left].parent != i || nodes_[n.right].parent != i)
        throw ValidationError("SurrogateTree: inconsistent parent links");
    }
    if (!(fidelity_ >= 0.0 && fidelity_ <= 1.0))
      throw ValidationError("SurrogateTree: fidelity outside [0, 1]");
  }

  std::vector<TreeNode> nodes_;
  std::size_t num_features_ = 0;
  std::size_t num_actions_ = 0;
  double fidelity_ = 0.0;
  std::vector<std::size_t> unsplittable_;
};

namespace detail {

// Exact comparison of Gini split quality. For a split into children with
// class counts n_c, maximising sum_child (sum_c n_c^2) / n_child is the same
// as minimising the weighted Gini impurity; the fractions are compared by
// cross-multiplication so equal-quality splits tie exactly.
struct SplitScore {
  __int128 num = 0;
  __int128 den = 1;

  static SplitScore of(std::int64_t sq_left, std::int64_t n_left, std::int64_t sq_right,
                       std::int64_t n_right) {
    return {__int128(sq_left) * n_right + __int128(sq_right) * n_left,
            __int128(n_left) * n_right};
  }
  bool better_than(const SplitScore& o) const { return num * o.den > o.num * den; }
};

class TreeBuilder {
 public:
  TreeBuilder(std::span<const StateRecord> states, std::span<const ActionId> labels,
              std::size_t num_features, std::size_t num_actions)
      : states_(states), labels_(labels), num_features_(num_features), num_actions_(num_actions) {}

  std::size_t build(std::vector<std::size_t> rows, std::optional<std::size_t> parent) {
    const std::size_t index = nodes_.size();
    nodes_.emplace_back();
    nodes_[index].parent = parent;

    std::vector<std::int64_t> counts(num_actions_, 0);
    for (auto r : rows) ++counts[labels_[r]];
    const auto majority = static_cast<ActionId>(
        std::max_element(counts.begin(), counts.end()) - counts.begin());
    const bool pure = counts[majority] == static_cast<std::int64_t>(rows.size());

    std::optional<std::pair<std::size_t, double>> split;
    if (!pure) split = best_split(rows);
    if (!split) {
      auto& leaf = nodes_[index];
      leaf.leaf = true;
      leaf.action = majority;
      for (auto r : rows) leaf.states.push_back(states_[r].id);
      std::sort(leaf.states.begin(), leaf.states.end());
      if (!pure) unsplittable_.push_back(index);
      return index;
    }

    const auto [feature, threshold] = *split;
    std::vector<std::size_t> left_rows, right_rows;
    for (auto r : rows)
      (states_[r].features[feature] < threshold ? left_rows : right_rows).push_back(r);
    rows.clear();
    rows.shrink_to_fit();

    nodes_[index].leaf = false;
    nodes_[index].feature = feature;
    nodes_[index].threshold = threshold;
    const std::size_t left = build(std::move(left_rows), index);
    const std::size_t right = build(std::move(right_rows), index);
    nodes_[index].left = left;
    nodes_[index].right = right;
    return index;
  }

  std::vector<TreeNode> take_nodes() { return std::move(nodes_); }
  std::vector<std::size_t> take_unsplittable() { return std::move(unsplittable_); }

 private:
  // Candidate thresholds are midpoints between consecutive distinct values.
  // Ties go to the lowest feature index, then the lowest threshold.
  std::optional<std::pair<std::size_t, double>> best_split(const std::vector<std::size_t>& rows) {
    std::optional<std::pair<std::size_t, double>> best;
    SplitScore best_score{-1, 1};
    std::vector<std::size_t> order(rows);
    std::vector<std::int64_t> left(num_actions_), right(num_actions_);

    for (std::size_t f = 0; f < num_features_; ++f) {
      std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return states_[a].features[f] < states_[b].features[f];
      });
      std::fill(left.begin(), left.end(), 0);
      std::fill(right.begin(), right.end(), 0);
      for (auto r : order) ++right[labels_[r]];
      std::int64_t sq_left = 0, sq_right = 0;
      for (auto c : right) sq_right += c * c;
      const auto n = static_cast<std::int64_t>(order.size());

      for (std::int64_t i = 0; i + 1 < n; ++i) {
        const ActionId y = labels_[order[i]];
        sq_left += 2 * left[y] + 1;
        ++left[y];
        sq_right -= 2 * right[y] - 1;
        --right[y];
        const double lo = states_[order[i]].features[f];
        const double hi = states_[order[i + 1]].features[f];
        if (!(lo < hi)) continue;
        const auto score = SplitScore::of(sq_left, i + 1, sq_right, n - i - 1);
        if (score.better_than(best_score)) {
          best_score = score;
          double mid = lo + (hi - lo) / 2.0;
          if (!(mid > lo)) mid = hi;
          best = {f, mid};
        }
      }
    }
    return best;
  }

  std::span<const StateRecord> states_;
  std::span<const ActionId> labels_;
  std::size_t num_features_;
  std::size_t num_actions_;
  std::vector<TreeNode> nodes_;
  std::vector<std::size_t> unsplittable_;
};

}  // namespace detail

struct PathStep {
  std::size_t node;
  Edge edge;
  bool operator==(const PathStep&) const = default;
};

// Root-to-leaf route of one input.
struct TreePath {
  std::vector<PathStep> steps;
  std::size_t leaf = 0;
  bool operator==(const TreePath&) const = default;
};

inline TreePath path_of(const SurrogateTree& tree, std::span<const double> features) {
  if (features.size() != tree.num_features())
    throw ContractViolation("path_of: feature vector length does not match the tree");
  TreePath path;
  std::size_t i = tree.root();
  while (!tree.node(i).leaf) {
    const auto& n = tree.node(i);
    const Edge e = features[n.feature] < n.threshold ? Edge::left : Edge::right;
    path.steps.push_back({i, e});
    i = e == Edge::left ? n.left : n.right;
  }
  path.leaf = i;
  return path;
}

inline TreePath path_of(const SurrogateTree& tree, const StateRecord& s) {
  return path_of(tree, s.features);
}

// Path from the root to a given leaf, recovered through parent links.
inline TreePath path_to_leaf(const SurrogateTree& tree, std::size_t leaf) {
  if (!tree.node(leaf).leaf) throw ContractViolation("path_to_leaf: node is not a leaf");
  TreePath path;
  path.leaf = leaf;
  std::size_t child = leaf;
  for (auto p = tree.node(leaf).parent; p; p = tree.node(*p).parent) {
    path.steps.push_back({*p, tree.node(*p).left == child ? Edge::left : Edge::right});
    child = *p;
  }
  std::reverse(path.steps.begin(), path.steps.end());
  return path;
}

inline ActionId predict(const SurrogateTree& tree, std::span<const double> features) {
  return tree.node(path_of(tree, features).leaf).action;
}

// Grows a tree to purity on (features -> pi(s)) for every given state.
inline SurrogateTree fit_tree(std::span<const StateRecord> states, std::span<const ActionId> pi,
                              std::size_t num_actions) {
  if (states.empty()) throw ContractViolation("fit_tree: no training states");
  const std::size_t n_f = states.front().features.size();
  std::vector<ActionId> labels;
  labels.reserve(states.size());
  for (const auto& s : states) {
    if (s.id >= pi.size()) throw ContractViolation("fit_tree: policy does not cover every state");
    if (pi[s.id] >= num_actions) throw ContractViolation("fit_tree: policy action out of range");
    if (s.features.size() != n_f) throw ContractViolation("fit_tree: ragged feature vectors");
    labels.push_back(pi[s.id]);
  }
  detail::TreeBuilder builder(states, labels, n_f, num_actions);
  std::vector<std::size_t> rows(states.size());
  std::iota(rows.begin(), rows.end(), 0);
  builder.build(std::move(rows), std::nullopt);
  auto nodes = builder.take_nodes();

  std::size_t agree = 0;
  for (const auto& n : nodes)
    if (n.leaf)
      for (StateId s : n.states) agree += pi[s] == n.action;
  const double fidelity = double(agree) / double(states.size());
  return SurrogateTree(std::move(nodes), n_f, num_actions, fidelity, builder.take_unsplittable());
}

// Fraction of states whose leaf action equals pi(s), recounted by routing.
inline double recount_fidelity(const SurrogateTree& tree, std::span<const StateRecord> states,
                               std::span<const ActionId> pi) {
  std::size_t agree = 0;
  for (const auto& s : states) agree += predict(tree, s.features) == pi[s.id];
  return double(agree) / double(states.size());
}

// ---------------------------------------------------------------------------
// Rules
// ---------------------------------------------------------------------------

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// Half-open interval lo <= x < hi; infinite bounds are open.
struct Interval {
  double lo = -kInf;
  double hi = kInf;
  bool contains(double x) const { return lo <= x && x < hi; }
  bool operator==(const Interval&) const = default;
};

struct Condition {
  std::size_t feature;
  Interval range;
  bool operator==(const Condition&) const = default;
};

// Conjunction of per-feature intervals concluding an action. Conditions are
// listed in order of the feature's first appearance on the path; features
// that never appear are unconstrained.
struct Rule {
  std::vector<Condition> conditions;
  ActionId action = 0;

  const Condition* find(std::size_t feature) const {
    for (const auto& c : conditions)
      if (c.feature == feature) return &c;
    return nullptr;
  }

  bool matches(std::span<const double> features) const {
    for (const auto& c : conditions)
      if (!c.range.contains(features[c.feature])) return false;
    return true;
  }

  bool operator==(const Rule&) const = default;
};

inline Rule rule_of_path(const SurrogateTree& tree, const TreePath& path) {
  Rule rule;
  std::size_t expected = tree.root();
  for (const auto& step : path.steps) {
    if (step.node != expected || tree.node(step.node).leaf)
      throw ContractViolation("rule_of_path: path is not a root-to-leaf path of this tree");
    const auto& n = tree.node(step.node);
    Condition* cond = nullptr;
    for (auto& c : rule.conditions)
      if (c.feature == n.feature) cond = &c;
    if (!cond) {
      rule.conditions.push_back({n.feature, {}});
      cond = &rule.conditions.back();
    }
    if (step.edge == Edge::right)
      cond->range.lo = std::max(cond->range.lo, n.threshold);
    else
      cond->range.hi = std::min(cond->range.hi, n.threshold);
    if (!(cond->range.lo < cond->range.hi))
      throw ValidationError("rule_of_path: empty interval for feature " +
                            std::to_string(n.feature) + " (corrupted tree)");
    expected = step.edge == Edge::left ? n.left : n.right;
  }
  if (expected != path.leaf || !tree.node(path.leaf).leaf)
    throw ContractViolation("rule_of_path: path does not end at its leaf");
  rule.action = tree.node(path.leaf).action;
  return rule;
}

inline std::vector<StateId> rule_coverage(const Rule& rule, std::span<const StateRecord> states) {
  std::vector<StateId> out;
  for (const auto& s : states)
    if (rule.matches(s.features)) out.push_back(s.id);
  return out;
}

}  // namespace polex

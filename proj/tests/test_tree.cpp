#include <gtest/gtest.h>

#include <set>

#include "polex/domains.hpp"
#include "polex/solvers.hpp"
#include "polex/tree.hpp"

namespace polex {
namespace {

std::vector<StateRecord> records(const std::vector<FeatureVector>& rows) {
  std::vector<StateRecord> out;
  for (StateId i = 0; i < rows.size(); ++i) out.push_back({i, rows[i], false});
  return out;
}

TreeNode split(std::size_t feature, double threshold, std::size_t left, std::size_t right,
               std::optional<std::size_t> parent) {
  TreeNode n;
  n.leaf = false;
  n.feature = feature;
  n.threshold = threshold;
  n.left = left;
  n.right = right;
  n.parent = parent;
  return n;
}

TreeNode leaf(ActionId a, std::size_t parent) {
  TreeNode n;
  n.action = a;
  n.parent = parent;
  return n;
}

// Three levels over features (x, y):
//   0: x < 2 ? 1 : 4
//   1: y < 1 ? [2: a0] : [3: a1]
//   4: x < 3 ? 5 : [8: a1]
//   5: y < 0.5 ? [6: a2] : [7: a0]
SurrogateTree hand_tree() {
  return SurrogateTree({split(0, 2.0, 1, 4, std::nullopt), split(1, 1.0, 2, 3, 0), leaf(0, 1),
                        leaf(1, 1), split(0, 3.0, 5, 8, 0), split(1, 0.5, 6, 7, 4), leaf(2, 5),
                        leaf(0, 5), leaf(1, 4)},
                       2, 3, 1.0);
}

TEST(FitTree, SingleActionGivesOneLeaf) {
  const auto states = records({{0, 1}, {1, 1}, {2, 5}});
  const std::vector<ActionId> pi{2, 2, 2};
  const auto tree = fit_tree(states, pi, 3);
  ASSERT_EQ(tree.nodes().size(), 1u);
  EXPECT_EQ(tree.node(0).action, 2u);
  EXPECT_EQ(tree.fidelity(), 1.0);
  EXPECT_TRUE(path_of(tree, states[1]).steps.empty());
}

TEST(FitTree, SeparablePairSplitsAtTheMidpoint) {
  const auto states = records({{0}, {1}});
  const std::vector<ActionId> pi{0, 1};
  const auto tree = fit_tree(states, pi, 2);
  ASSERT_EQ(tree.nodes().size(), 3u);
  EXPECT_FALSE(tree.node(0).leaf);
  EXPECT_GT(tree.node(0).threshold, 0.0);
  EXPECT_LT(tree.node(0).threshold, 1.0);
  EXPECT_EQ(tree.node(0).threshold, 0.5);
  EXPECT_EQ(tree.fidelity(), 1.0);
}

TEST(FitTree, EqualGainTiesGoToLowestFeatureThenThreshold) {
  // Both features separate the classes identically.
  const auto states = records({{0, 10}, {1, 11}, {2, 12}, {3, 13}});
  const std::vector<ActionId> pi{0, 0, 1, 1};
  const auto tree = fit_tree(states, pi, 2);
  EXPECT_EQ(tree.node(0).feature, 0u);
  EXPECT_EQ(tree.node(0).threshold, 1.5);
  // Labels 0 1 0 on one feature score the same at 0.5 and at 1.5.
  const auto line = records({{0}, {1}, {2}});
  const std::vector<ActionId> mid{0, 1, 0};
  const auto t2 = fit_tree(line, mid, 2);
  EXPECT_EQ(t2.node(0).threshold, 0.5);
}

TEST(FitTree, PrefersTheLowerGiniSplit) {
  // Feature 1 separates perfectly, feature 0 does not.
  const auto states = records({{0, 0}, {1, 1}, {2, 0}, {3, 1}});
  const std::vector<ActionId> pi{0, 1, 0, 1};
  const auto tree = fit_tree(states, pi, 2);
  EXPECT_EQ(tree.node(0).feature, 1u);
  EXPECT_EQ(tree.nodes().size(), 3u);
}

TEST(FitTree, IdenticalFeaturesWithDifferentActionsAreReported) {
  const auto states = records({{0}, {0}, {1}});
  const std::vector<ActionId> pi{1, 0, 1};
  const auto tree = fit_tree(states, pi, 2);
  ASSERT_EQ(tree.unsplittable_leaves().size(), 1u);
  const auto& bad = tree.node(tree.unsplittable_leaves()[0]);
  EXPECT_EQ(bad.states, (std::vector<StateId>{0, 1}));
  EXPECT_EQ(bad.action, 0u);
  EXPECT_NEAR(tree.fidelity(), 2.0 / 3.0, 1e-15);
}

TEST(FitTree, TaxiFidelityIsOne) {
  const auto d = domains::build_taxi();
  const auto p = policy_iteration(d);
  const auto tree = fit_tree(d.states(), p.pi(), d.num_actions());
  EXPECT_EQ(tree.fidelity(), 1.0);
  EXPECT_TRUE(tree.unsplittable_leaves().empty());
  for (const auto& s : d.states()) EXPECT_EQ(predict(tree, s.features), p.action(s.id));
  EXPECT_EQ(recount_fidelity(tree, d.states(), p.pi()), tree.fidelity());
}

TEST(FitTree, FidelityEqualsRecountOnStackBot) {
  const auto d = domains::build_stackbot();
  const auto p = policy_iteration(d);
  const auto tree = fit_tree(d.states(), p.pi(), d.num_actions());
  EXPECT_GE(tree.fidelity(), 0.99);
  EXPECT_EQ(recount_fidelity(tree, d.states(), p.pi()), tree.fidelity());
}

TEST(FitTree, IsStrictlyBinaryWithEveryStateInOneLeaf) {
  const auto d = domains::build_taxi();
  const auto tree = fit_tree(d.states(), policy_iteration(d).pi(), d.num_actions());
  std::multiset<StateId> seen;
  for (const auto& n : tree.nodes()) {
    if (n.leaf) {
      seen.insert(n.states.begin(), n.states.end());
    } else {
      EXPECT_NE(n.left, n.right);
    }
  }
  EXPECT_EQ(seen.size(), d.num_states());
  for (StateId s = 0; s < d.num_states(); ++s) EXPECT_EQ(seen.count(s), 1u);
}

TEST(FitTree, RejectsPartialPolicies) {
  const auto states = records({{0}, {1}});
  const std::vector<ActionId> pi{0};
  EXPECT_THROW(fit_tree(states, pi, 2), ContractViolation);
  EXPECT_THROW(fit_tree({}, pi, 2), ContractViolation);
}

TEST(PathOf, ThresholdEqualityTakesTheRightEdge) {
  const auto tree = hand_tree();
  const std::vector<double> x{2.0, 0.0};
  const auto path = path_of(tree, x);
  ASSERT_FALSE(path.steps.empty());
  EXPECT_EQ(path.steps[0], (PathStep{0, Edge::right}));
  EXPECT_EQ(path.leaf, 6u);
}

TEST(PathOf, HandTrace) {
  const auto tree = hand_tree();
  const auto path = path_of(tree, std::vector<double>{2.5, 0.7});
  EXPECT_EQ(path.steps, (std::vector<PathStep>{{0, Edge::right}, {4, Edge::left}, {5, Edge::right}}));
  EXPECT_EQ(path.leaf, 7u);
  EXPECT_EQ(path_to_leaf(tree, 7), path);
  EXPECT_THROW(path_of(tree, std::vector<double>{1.0}), ContractViolation);
}

TEST(RuleOfPath, SameFeatureIntersects) {
  // x >= 0.5 on the right edge, then x < 1.5 on the left edge.
  const SurrogateTree tree({split(0, 0.5, 1, 2, std::nullopt), leaf(0, 0), split(0, 1.5, 3, 4, 0),
                            leaf(1, 2), leaf(0, 2)},
                           1, 2, 1.0);
  const auto rule = rule_of_path(tree, path_of(tree, std::vector<double>{1.0}));
  ASSERT_EQ(rule.conditions.size(), 1u);
  EXPECT_EQ(rule.conditions[0].range, (Interval{0.5, 1.5}));
  EXPECT_EQ(rule.action, 1u);
}

TEST(RuleOfPath, SingleLeafIsUnconstrained) {
  const SurrogateTree tree({TreeNode{}}, 2, 1, 1.0);
  const auto rule = rule_of_path(tree, path_of(tree, std::vector<double>{4, 4}));
  EXPECT_TRUE(rule.conditions.empty());
  const auto states = records({{0, 0}, {1, 3}, {9, 9}});
  EXPECT_EQ(rule_coverage(rule, states).size(), 3u);
}

TEST(RuleOfPath, ThreeLevelHandTrace) {
  const auto tree = hand_tree();
  // Leaf 7: x >= 2, x < 3, y >= 0.5.
  const auto r7 = rule_of_path(tree, path_to_leaf(tree, 7));
  ASSERT_EQ(r7.conditions.size(), 2u);
  EXPECT_EQ(r7.conditions[0], (Condition{0, {2.0, 3.0}}));
  EXPECT_EQ(r7.conditions[1], (Condition{1, {0.5, kInf}}));
  EXPECT_EQ(r7.action, 0u);
  // Leaf 3: x < 2, y >= 1.
  const auto r3 = rule_of_path(tree, path_to_leaf(tree, 3));
  EXPECT_EQ(r3.conditions, (std::vector<Condition>{{0, {-kInf, 2.0}}, {1, {1.0, kInf}}}));
  EXPECT_EQ(r3.action, 1u);
  // Leaf 8: x >= 3 (two right-edge bounds on x, the tighter wins).
  const auto r8 = rule_of_path(tree, path_to_leaf(tree, 8));
  EXPECT_EQ(r8.conditions, (std::vector<Condition>{{0, {3.0, kInf}}}));
}

TEST(RuleOfPath, EmptyIntervalIsAConstructionError) {
  // Corrupted: right child of (x < 1) tests x < 0.5 and we walk its left edge.
  const SurrogateTree tree({split(0, 1.0, 1, 2, std::nullopt), leaf(0, 0), split(0, 0.5, 3, 4, 0),
                            leaf(1, 2), leaf(0, 2)},
                           1, 2, 1.0);
  TreePath bad{{{0, Edge::right}, {2, Edge::left}}, 3};
  EXPECT_THROW(rule_of_path(tree, bad), ValidationError);
}

TEST(RuleOfPath, RejectsForeignPaths) {
  const auto tree = hand_tree();
  TreePath bad{{{4, Edge::left}}, 5};
  EXPECT_THROW(rule_of_path(tree, bad), ContractViolation);
}

TEST(RuleCoverage, HalfOpenBounds) {
  Rule r;
  r.conditions = {{0, {1.0, 2.0}}};
  const auto states = records({{0.999}, {1.0}, {1.5}, {2.0}});
  EXPECT_EQ(rule_coverage(r, states), (std::vector<StateId>{1, 2}));
}

class TreeProperties : public ::testing::TestWithParam<int> {};

DomainModel property_domain(int which) {
  switch (which) {
    case 0: return domains::build_taxi();
    case 1: return domains::build_stackbot(domains::cautious_stackbot_config());
    default: return domains::build_synthetic_treatment(600, 9);
  }
}

TEST_P(TreeProperties, SoundnessPartitionAndLeafCoverage) {
  const auto d = property_domain(GetParam());
  const auto p = policy_iteration(d);
  const auto tree = fit_tree(d.states(), p.pi(), d.num_actions());
  for (const auto& s : d.states()) {
    const auto rule = rule_of_path(tree, path_of(tree, s));
    ASSERT_TRUE(rule.matches(s.features)) << s.id;
  }
  std::vector<int> owners(d.num_states(), 0);
  for (auto l : tree.leaves()) {
    const auto cover = rule_coverage(rule_of_path(tree, path_to_leaf(tree, l)), d.states());
    for (StateId s : cover) ++owners[s];
    if (tree.unsplittable_leaves().empty()) {
      EXPECT_EQ(cover, tree.node(l).states) << "leaf " << l;
    }
  }
  for (StateId s = 0; s < d.num_states(); ++s) EXPECT_EQ(owners[s], 1) << s;
}

TEST_P(TreeProperties, CrossingAThresholdChangesThePathAtThatNode) {
  const auto d = property_domain(GetParam());
  const auto tree = fit_tree(d.states(), policy_iteration(d).pi(), d.num_actions());
  std::size_t checked = 0;
  for (StateId s = 0; s < d.num_states(); s += 7) {
    const auto path = path_of(tree, d.state(s));
    for (std::size_t k = 0; k < path.steps.size(); ++k) {
      const auto& n = tree.node(path.steps[k].node);
      auto x = d.state(s).features;
      x[n.feature] = path.steps[k].edge == Edge::left ? n.threshold : std::nextafter(n.threshold, -kInf);
      const auto moved = path_of(tree, x);
      ASSERT_GT(moved.steps.size(), k);
      for (std::size_t j = 0; j < k; ++j) EXPECT_EQ(moved.steps[j], path.steps[j]);
      EXPECT_NE(moved.steps[k].edge, path.steps[k].edge);
      ++checked;
    }
  }
  EXPECT_GT(checked, 0u);
}

INSTANTIATE_TEST_SUITE_P(Domains, TreeProperties, ::testing::Values(0, 1, 2));

}  // namespace
}  // namespace polex

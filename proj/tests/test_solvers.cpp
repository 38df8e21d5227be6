#include <gtest/gtest.h>

#include "polex/domains.hpp"
#include "polex/dqn.hpp"
#include "polex/solvers.hpp"
#include "support.hpp"

namespace polex {
namespace {

TEST(EstimateModel, DeterministicRowsAreOneHot) {
  const auto d = domains::build_taxi();
  Rng rng(0);
  const auto m = estimate_model(d, 7, rng);
  EXPECT_EQ(m.samples_per_pair(), 7u);
  for (const auto& s : d.states())
    for (ActionId a = 0; a < d.num_actions(); ++a) {
      const auto row = m.outcomes(s.id, a);
      ASSERT_EQ(row.size(), 1u);
      EXPECT_EQ(row[0], d.outcomes(s.id, a)[0]);
    }
}

TEST(EstimateModel, CoinFlipConcentrates) {
  const auto d = domains::build_coin_flip();
  Rng rng(2024);
  const auto m = estimate_model(d, 10000, rng);
  EXPECT_NEAR(m.probability(0, 0, 1), 0.5, 0.02);
  EXPECT_NEAR(m.probability(0, 0, 2), 0.5, 0.02);
  double total = 0.0;
  for (const auto& o : m.outcomes(0, 0)) {
    total += o.prob;
    const double count = o.prob * 10000.0;
    EXPECT_EQ(count, std::round(count));
  }
  EXPECT_EQ(total, 1.0);
  EXPECT_EQ(m.mean_reward(0, 0, 1), 3.0);
  EXPECT_EQ(m.mean_reward(0, 0, 2), -3.0);
}

TEST(EstimateModel, RejectsZeroSamples) {
  Rng rng(0);
  EXPECT_THROW(estimate_model(domains::build_coin_flip(), 0, rng), ContractViolation);
}

TEST(PolicyIteration, SelfLoopGeometricSeries) {
  const auto p = policy_iteration(domains::build_self_loop(0.5));
  EXPECT_NEAR(p.q(0, 0), 2.0, 1e-6);
}

TEST(PolicyIteration, TwoStateChainOneStepBackup) {
  const auto p = policy_iteration(domains::build_two_state_chain(0.9));
  EXPECT_NEAR(p.q(0, 0), 10.0, 1e-9);
  EXPECT_NEAR(p.q(0, 1), 9.0, 1e-9);
  EXPECT_EQ(p.value(1), 0.0);
  EXPECT_EQ(p.action(0), 0u);
  EXPECT_EQ(p.solver(), "policy-iteration");
}

TEST(PolicyIteration, TaxiGreedyRolloutsAreShortestPaths) {
  const auto d = domains::build_taxi();
  const auto p = policy_iteration(d);
  const auto dist = testing::steps_to_terminal(d);
  Rng rng(0);
  for (const auto& start : d.states()) {
    StateId s = start.id;
    std::size_t steps = 0;
    while (!d.is_terminal(s) && steps < 100) {
      s = step(d, s, p.action(s), rng).next;
      ++steps;
    }
    EXPECT_EQ(steps, dist[start.id]) << "start " << start.id;
  }
}

TEST(PolicyIteration, ResidualWithinTolerance) {
  for (const auto& d : {domains::build_taxi(), domains::build_stackbot(), domains::build_coin_flip(),
                        domains::build_synthetic_treatment(300, 2)}) {
    PolicyIterationOptions opt;
    opt.tol = 1e-7;
    const auto p = policy_iteration(d, opt);
    EXPECT_LE(bellman_residual(d, p.q(), d.discount()), 1e-7) << d.name();
  }
}

TEST(PolicyIteration, GammaOutsideOpenIntervalIsRejected) {
  const auto d = domains::build_two_state_chain();
  EXPECT_THROW(policy_iteration(d, 1.0), ContractViolation);
  EXPECT_THROW(policy_iteration(d, 0.0), ContractViolation);
}

TEST(PolicyIteration, IterationCapRaisesConvergenceError) {
  PolicyIterationOptions opt;
  opt.max_sweeps = 3;
  try {
    policy_iteration(domains::build_taxi(), opt);
    FAIL() << "expected a convergence error";
  } catch (const ConvergenceError& e) {
    EXPECT_NE(std::string(e.what()).find("residual"), std::string::npos) << e.what();
  }
}

TEST(TrainedPolicy, Invariants) {
  const auto d = domains::build_stackbot();
  const auto p = policy_iteration(d);
  for (StateId s = 0; s < d.num_states(); ++s) {
    const auto row = p.q_row(s);
    const double best = *std::max_element(row.begin(), row.end());
    EXPECT_EQ(p.value(s), best);
    EXPECT_EQ(p.q(s, p.action(s)), best);
    for (ActionId a = 0; a < p.action(s); ++a) EXPECT_LT(row[a], best);
    if (d.is_terminal(s)) {
      for (double x : row) EXPECT_EQ(x, 0.0);
    }
  }
}

TEST(TrainedPolicy, TiesGoToTheLowestAction) {
  const std::vector<double> row{1.0, 3.0, 3.0, -2.0};
  EXPECT_EQ(greedy_action(row), 1u);
  TrainedPolicy p({0.5, 0.5}, 1, 2, 0.9, {false}, "test", {});
  EXPECT_EQ(p.action(0), 0u);
}

TEST(TrainedPolicy, RejectsNonFiniteValues) {
  EXPECT_THROW(TrainedPolicy({NAN, 0.0}, 1, 2, 0.9, {false}, "test", {}), Error);
}

TEST(ModelBased, DeterministicDomainMatchesExactSolution) {
  const auto d = domains::build_taxi();
  Rng rng(1);
  const auto mb = model_based_learn(d, 3, rng);
  const auto exact = policy_iteration(d);
  EXPECT_EQ(mb.pi(), exact.pi());
  EXPECT_EQ(mb.solver(), "model-based");
  EXPECT_EQ(mb.provenance().at("k"), "3");
}

TEST(EpsilonSchedule, DecaysLinearly) {
  const EpsilonSchedule e{1.0, 0.1, 10};
  EXPECT_EQ(e.at(0), 1.0);
  EXPECT_NEAR(e.at(5), 0.55, 1e-15);
  EXPECT_EQ(e.at(10), 0.1);
  EXPECT_EQ(e.at(1000), 0.1);
}

TEST(LinearQ, SingleUpdate) {
  LinearQ model(1, 1);
  const SparseFeatures f{{0, 1.0}};
  const double delta = model.update(f, 0, 1.0, f, false, 0.5, 0.0);
  EXPECT_EQ(delta, 1.0);
  EXPECT_EQ(model.theta[0], 0.5);
}

TEST(LinearQ, TerminalSuccessorUsesRewardOnly) {
  LinearQ model(1, 1);
  model.theta[0] = 100.0;
  const SparseFeatures f{{0, 1.0}};
  const double delta = model.update(f, 0, 1.0, f, true, 1.0, 0.9);
  EXPECT_EQ(delta, 1.0 - 100.0);
  EXPECT_EQ(model.theta[0], 1.0);
}

TEST(LinearQ, ScaledFeaturesCarryABias) {
  const auto d = domains::build_two_state_chain();
  const FeatureMap phi(d, LinearFeatures::scaled);
  EXPECT_EQ(phi.dimension(), 2u);
  ASSERT_EQ(phi(0).size(), 1u);
  EXPECT_EQ(phi(0)[0].index, 0u);
  EXPECT_EQ(phi(0)[0].value, 1.0);
}

// Independent tabular Q-learning drawing random numbers in the same order.
struct TabularRun {
  std::vector<double> q;
  std::vector<double> deltas;
};

TabularRun tabular_q_learning(const DomainModel& d, const LinearQConfig& cfg, std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t n_a = d.num_actions();
  TabularRun run{std::vector<double>(d.num_states() * n_a, 0.0), {}};
  std::vector<StateId> starts;
  for (const auto& s : d.states())
    if (!s.terminal) starts.push_back(s.id);
  auto argmax = [&](StateId s) {
    ActionId best = 0;
    for (ActionId a = 1; a < n_a; ++a)
      if (run.q[s * n_a + a] > run.q[s * n_a + best]) best = a;
    return best;
  };
  for (std::size_t ep = 0; ep < cfg.episodes; ++ep) {
    StateId s = starts[rng.uniform_int(starts.size())];
    for (std::size_t t = 0; t < cfg.max_steps; ++t) {
      const ActionId a = rng.uniform01() < cfg.epsilon.at(ep) ? ActionId(rng.uniform_int(n_a)) : argmax(s);
      const auto [next, r] = step(d, s, a, rng);
      const bool done = d.is_terminal(next);
      const double target = done ? r : r + cfg.gamma * run.q[next * n_a + argmax(next)];
      const double delta = target - run.q[s * n_a + a];
      run.q[s * n_a + a] += cfg.alpha * delta;
      run.deltas.push_back(delta);
      s = next;
      if (done) break;
    }
  }
  return run;
}

TEST(LinearQ, OneHotMatchesTabularQLearningStepByStep) {
  const auto d = domains::build_taxi();
  LinearQConfig cfg;
  cfg.features = LinearFeatures::one_hot;
  cfg.alpha = 0.3;
  cfg.gamma = d.discount();
  cfg.episodes = 300;
  cfg.epsilon = {1.0, 0.1, 200};
  const auto oracle = tabular_q_learning(d, cfg, 99);

  std::vector<double> deltas;
  Rng rng(99);
  const auto p = linear_q_learn(d, cfg, rng, [&](std::size_t, const TransitionSample&, double delta) {
    deltas.push_back(delta);
  });
  for (std::size_t i = 0; i < std::min(deltas.size(), oracle.deltas.size()); ++i)
    ASSERT_NEAR(deltas[i], oracle.deltas[i], 1e-12) << "step " << i;
  ASSERT_EQ(deltas.size(), oracle.deltas.size());
  for (StateId s = 0; s < d.num_states(); ++s) {
    if (d.is_terminal(s)) continue;
    for (ActionId a = 0; a < d.num_actions(); ++a)
      EXPECT_NEAR(p.q(s, a), oracle.q[s * d.num_actions() + a], 1e-6);
  }
}

TEST(LinearQ, ChainMatchesPolicyIteration) {
  const auto d = domains::build_two_state_chain();
  const auto reference = policy_iteration(d);
  for (auto features : {LinearFeatures::scaled, LinearFeatures::one_hot}) {
    LinearQConfig cfg;
    cfg.gamma = d.discount();
    cfg.features = features;
    cfg.episodes = 500;
    cfg.epsilon = {1.0, 0.05, 250};
    Rng rng(0);
    EXPECT_EQ(linear_q_learn(d, cfg, rng).pi(), reference.pi()) << to_string(features);
  }
}

TEST(LinearQ, DivergenceIsReportedWithTheStep) {
  const auto d = domains::build_self_loop(0.99);
  LinearQConfig cfg;
  cfg.alpha = 1000.0;
  cfg.gamma = 0.99;
  cfg.episodes = 10;
  Rng rng(0);
  try {
    linear_q_learn(d, cfg, rng);
    FAIL() << "expected divergence";
  } catch (const ConvergenceError& e) {
    EXPECT_NE(std::string(e.what()).find("step"), std::string::npos);
  }
}

TEST(ReplayBuffer, EvictsOldestFirst) {
  ReplayBuffer buffer(3);
  for (StateId i = 0; i < 5; ++i) buffer.push({i, 0, 0.0, i, false});
  EXPECT_EQ(buffer.size(), 3u);
  EXPECT_EQ(buffer.at(0).state, 2u);
  EXPECT_EQ(buffer.at(1).state, 3u);
  EXPECT_EQ(buffer.at(2).state, 4u);
  buffer.push({5, 0, 0.0, 5, false});
  EXPECT_EQ(buffer.at(0).state, 3u);
  EXPECT_EQ(buffer.at(2).state, 5u);
  EXPECT_THROW(buffer.at(3), ContractViolation);
}

TEST(ReplayBuffer, SamplesOnlyStoredTransitions) {
  ReplayBuffer buffer(4);
  for (StateId i = 0; i < 10; ++i) buffer.push({i, 0, 0.0, i, false});
  Rng rng(3);
  for (const auto& t : buffer.sample(200, rng)) {
    EXPECT_GE(t.state, 6u);
    EXPECT_LE(t.state, 9u);
  }
}

struct FrozenBatch {
  Mlp net;
  Batch batch;
  Eigen::VectorXd targets;
};

FrozenBatch frozen_batch() {
  const auto d = domains::build_taxi();
  const Eigen::MatrixXd x = encode_states(d, InputEncoding::scaled);
  Rng rng(8);
  FrozenBatch f{Mlp({4, 7, 5, 6}, rng), {}, {}};
  // Non-zero biases so every parameter participates.
  for (auto& b : f.net.biases())
    for (Eigen::Index i = 0; i < b.size(); ++i) b(i) = rng.uniform(-0.3, 0.3);
  std::vector<TransitionSample> samples;
  for (int i = 0; i < 6; ++i) {
    const StateId s = StateId(rng.uniform_int(d.num_states()));
    samples.push_back({s, ActionId(rng.uniform_int(6)), rng.uniform(-1, 1),
                       StateId(rng.uniform_int(d.num_states())), i == 2});
  }
  f.batch = make_batch(samples, x);
  f.targets = td_targets(f.net, f.batch, 0.95);
  return f;
}

TEST(Dqn, AnalyticGradientMatchesCentralDifferences) {
  auto f = frozen_batch();
  const auto g = batch_loss_gradient(f.net, f.batch, f.targets);
  const double h = 1e-6;
  std::size_t checked = 0;
  auto check = [&](double& param, double analytic) {
    const double saved = param;
    param = saved + h;
    const double up = batch_loss(f.net, f.batch, f.targets);
    param = saved - h;
    const double down = batch_loss(f.net, f.batch, f.targets);
    param = saved;
    const double numeric = (up - down) / (2 * h);
    const double scale = std::max({std::abs(numeric), std::abs(analytic), 1e-3});
    EXPECT_LE(std::abs(numeric - analytic) / scale, 1e-4) << numeric << " vs " << analytic;
    ++checked;
  };
  for (std::size_t l = 0; l < f.net.num_layers(); ++l) {
    auto& w = f.net.weights()[l];
    for (Eigen::Index i = 0; i < w.size(); ++i) check(w.data()[i], g.weights[l].data()[i]);
    auto& b = f.net.biases()[l];
    for (Eigen::Index i = 0; i < b.size(); ++i) check(b(i), g.biases[l](i));
  }
  EXPECT_EQ(checked, std::size_t(4 * 7 + 7 + 7 * 5 + 5 + 5 * 6 + 6));
}

TEST(Dqn, TerminalTargetIsTheReward) {
  auto f = frozen_batch();
  EXPECT_EQ(f.targets(2), f.batch.rewards(2));
  const Eigen::MatrixXd next_q = f.net.forward(f.batch.next_states);
  EXPECT_DOUBLE_EQ(f.targets(0), f.batch.rewards(0) + 0.95 * next_q.col(0).maxCoeff());
}

TEST(Dqn, LossAndGradientShareOneForwardPass) {
  auto f = frozen_batch();
  const auto both = batch_loss_and_gradient(f.net, f.batch, f.targets);
  EXPECT_EQ(both.loss, batch_loss(f.net, f.batch, f.targets));
}

TEST(Dqn, CategoricalEncodingOneHotsSmallIntegerFeatures) {
  const auto d = domains::build_taxi();
  const Eigen::MatrixXd x = encode_states(d, InputEncoding::categorical);
  EXPECT_EQ(x.rows(), 5 + 5 + 5 + 4);
  const StateId s = domains::taxi_state_id(3, 1, 4, 2);
  Eigen::VectorXd expected = Eigen::VectorXd::Zero(19);
  expected(3) = expected(5 + 1) = expected(10 + 4) = expected(15 + 2) = 1.0;
  EXPECT_EQ(x.col(s), expected);
  // Wide-range features stay scaled.
  EXPECT_EQ(encode_states(domains::build_synthetic_treatment(100, 1), InputEncoding::categorical).rows(), 6);
}

TEST(Dqn, ChainMatchesPolicyIteration) {
  const auto d = domains::build_two_state_chain();
  DqnConfig cfg;
  cfg.gamma = d.discount();
  cfg.episodes = 300;
  cfg.epsilon = {1.0, 0.05, 150};
  Rng rng(0);
  EXPECT_EQ(dqn_learn(d, cfg, rng).pi(), policy_iteration(d).pi());
}

TEST(Dqn, SameSeedSameNetwork) {
  const auto d = domains::build_two_state_chain();
  DqnConfig cfg;
  cfg.gamma = d.discount();
  cfg.episodes = 50;
  Mlp a, b;
  Rng r1(4), r2(4);
  const auto p1 = dqn_learn(d, cfg, r1, &a);
  const auto p2 = dqn_learn(d, cfg, r2, &b);
  EXPECT_EQ(a, b);
  EXPECT_EQ(p1, p2);
}

TEST(Dqn, NanLossNamesTheIteration) {
  const auto d = domains::build_self_loop(0.99);
  DqnConfig cfg;
  cfg.gamma = 0.99;
  cfg.alpha = 1e6;
  cfg.batch_size = 2;
  cfg.buffer_capacity = 10;
  cfg.episodes = 20;
  Rng rng(0);
  try {
    dqn_learn(d, cfg, rng);
    FAIL() << "expected a convergence error";
  } catch (const ConvergenceError& e) {
    EXPECT_NE(std::string(e.what()).find("iteration"), std::string::npos) << e.what();
  }
}

TEST(Dqn, BufferSmallerThanBatchIsRejected) {
  DqnConfig cfg;
  cfg.buffer_capacity = 4;
  cfg.batch_size = 8;
  Rng rng(0);
  EXPECT_THROW(dqn_learn(domains::build_two_state_chain(), cfg, rng), ContractViolation);
}

}  // namespace
}  // namespace polex

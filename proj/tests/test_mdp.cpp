#include <gtest/gtest.h>

#include <fstream>

#include "polex/domain_io.hpp"
#include "polex/domains.hpp"
#include "support.hpp"

namespace polex {
namespace {

std::string minimal_domain_text() {
  return R"({
  "format": "polex-domain",
  "version": 1,
  "meta": {"name": "single", "discount": 0.9},
  "features": [{"name": "x", "min": 0, "max": 0}],
  "actions": ["wait"],
  "states": [{"id": 0, "features": [0], "terminal": true}],
  "transitions": []
})";
}

std::string short_row_domain_text() {
  return R"({
  "meta": {"name": "leaky", "discount": 0.9},
  "features": [{"name": "x", "min": 0, "max": 1}],
  "actions": ["go"],
  "states": [{"id": 0, "features": [0], "terminal": false},
             {"id": 1, "features": [1], "terminal": true}],
  "transitions": [{"s": 0, "a": 0, "outcomes": [[1, 0.9, 1.0]]}]
})";
}

TEST(LoadDomain, MinimalAbsorbingDomain) {
  testing::TempDir dir;
  const auto path = dir.path() / "single.json";
  std::ofstream(path) << minimal_domain_text();
  const auto d = load_domain(path);
  EXPECT_EQ(d.num_states(), 1u);
  EXPECT_EQ(d.num_actions(), 1u);
  ASSERT_EQ(d.outcomes(0, 0).size(), 1u);
  EXPECT_EQ(d.outcomes(0, 0)[0], (Outcome{0, 1.0, 0.0}));
}

TEST(LoadDomain, TaxiRoundTripsFieldForField) {
  testing::TempDir dir;
  const auto taxi = domains::build_taxi();
  save_domain(taxi, dir.path() / "taxi.json");
  const auto back = load_domain(dir.path() / "taxi.json");
  EXPECT_EQ(back.data(), taxi.data());
  EXPECT_EQ(serialize_domain(back), serialize_domain(taxi));
}

TEST(LoadDomain, EveryBuiltInDomainRoundTrips) {
  for (const auto& d : {domains::build_stackbot(), domains::build_stackbot(domains::cautious_stackbot_config()),
                        domains::build_two_state_chain(), domains::build_coin_flip(),
                        domains::build_synthetic_treatment(300, 5)}) {
    EXPECT_EQ(parse_domain(serialize_domain(d)).data(), d.data()) << d.name();
  }
}

TEST(LoadDomain, RowSummingToPointNineIsRejected) {
  try {
    parse_domain(short_row_domain_text());
    FAIL() << "expected a validation error";
  } catch (const ValidationError& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("state 0"), std::string::npos) << what;
    EXPECT_NE(what.find("action 0"), std::string::npos) << what;
  }
}

TEST(LoadDomain, SyntaxErrorReportsLine) {
  std::string text = minimal_domain_text();
  text.replace(text.find("\"wait\""), 6, "wait");
  try {
    parse_domain(text);
    FAIL() << "expected a schema error";
  } catch (const SchemaError& e) {
    EXPECT_EQ(e.line(), 6u);
  }
}

TEST(LoadDomain, MissingFieldReportsPath) {
  std::string text = minimal_domain_text();
  text.replace(text.find("\"discount\": 0.9"), 15, "\"gamma\": 0.9");
  try {
    parse_domain(text);
    FAIL() << "expected a schema error";
  } catch (const SchemaError& e) {
    EXPECT_EQ(e.field(), "/meta/discount");
  }
}

TEST(LoadDomain, MissingFileIsAnError) {
  EXPECT_THROW(load_domain("/nonexistent/domain.json"), Error);
}

DomainData two_state_data() {
  DomainData d;
  d.name = "pair";
  d.discount = 0.9;
  d.features = {{"x", 0, 1}};
  d.actions = {{0, "go"}};
  d.states = {{0, {0}, false}, {1, {1}, true}};
  d.transitions = {{{1, 1.0, 1.0}}, {}};
  return d;
}

TEST(DomainModel, AcceptsValidData) {
  const DomainModel d(two_state_data());
  EXPECT_EQ(d.outcomes(1, 0)[0], (Outcome{1, 1.0, 0.0}));
}

TEST(DomainModel, RejectsDuplicateFeatureVectors) {
  auto data = two_state_data();
  data.states[1].features = {0};
  EXPECT_THROW(DomainModel{data}, ValidationError);
}

TEST(DomainModel, RejectsNonFiniteFeature) {
  auto data = two_state_data();
  data.states[0].features = {std::nan("")};
  EXPECT_THROW(DomainModel{data}, ValidationError);
}

TEST(DomainModel, RejectsNonFiniteReward) {
  auto data = two_state_data();
  data.transitions[0][0].reward = INFINITY;
  EXPECT_THROW(DomainModel{data}, ValidationError);
}

TEST(DomainModel, RejectsWrongFeatureCount) {
  auto data = two_state_data();
  data.states[0].features = {0, 0};
  EXPECT_THROW(DomainModel{data}, ValidationError);
}

TEST(DomainModel, RejectsNonContiguousIds) {
  auto data = two_state_data();
  data.states[1].id = 2;
  EXPECT_THROW(DomainModel{data}, ValidationError);
}

TEST(DomainModel, RejectsDuplicateActionLabels) {
  auto data = two_state_data();
  data.actions.push_back({1, "go"});
  data.transitions = {{{1, 1.0, 1.0}}, {{1, 1.0, 1.0}}, {}, {}};
  EXPECT_THROW(DomainModel{data}, ValidationError);
}

TEST(DomainModel, RejectsTerminalRowThatLeaves) {
  auto data = two_state_data();
  data.transitions[1] = {{0, 1.0, 0.0}};
  EXPECT_THROW(DomainModel{data}, ValidationError);
}

TEST(DomainModel, RejectsDiscountOutsideRange) {
  auto data = two_state_data();
  data.discount = 0.0;
  EXPECT_THROW(DomainModel{data}, ValidationError);
  data.discount = 1.5;
  EXPECT_THROW(DomainModel{data}, ValidationError);
}

TEST(DomainModel, RowSumToleranceIsOneEMinusNine) {
  auto data = two_state_data();
  data.states.push_back({2, {0.5}, true});
  data.transitions.push_back({});
  data.transitions[0] = {{1, 0.5, 1.0}, {2, 0.5 + 5e-10, 1.0}};
  EXPECT_NO_THROW(DomainModel{data});
  data.transitions[0] = {{1, 0.5, 1.0}, {2, 0.5 + 5e-9, 1.0}};
  EXPECT_THROW(DomainModel{data}, ValidationError);
}

TEST(Step, DeterministicRowAlwaysReturnsSuccessor) {
  const auto d = domains::build_two_state_chain();
  Rng rng(3);
  for (int i = 0; i < 100; ++i) {
    const auto r = step(d, 0, 0, rng);
    EXPECT_EQ(r.next, 1u);
    EXPECT_EQ(r.reward, 10.0);
  }
}

TEST(Step, SamplesStochasticRowInProportion) {
  const auto d = domains::build_coin_flip();
  Rng rng(5);
  int first = 0;
  const StateId target = d.outcomes(0, 0)[0].next;
  for (int i = 0; i < 20000; ++i) first += step(d, 0, 0, rng).next == target;
  EXPECT_NEAR(first / 20000.0, 0.5, 0.02);
}

TEST(Step, TerminalStateIsAContractViolation) {
  const auto d = domains::build_two_state_chain();
  Rng rng(0);
  EXPECT_THROW(step(d, 1, 0, rng), ContractViolation);
  EXPECT_THROW(step(d, 7, 0, rng), ContractViolation);
}

TEST(Step, TaxiRewards) {
  const auto d = domains::build_taxi();
  Rng rng(0);
  const auto south = *d.find_action("Move South");
  const auto dropoff = *d.find_action("Dropoff");
  // Taxi at (2,2), passenger at R, destination G: plain move costs 1.
  EXPECT_EQ(step(d, domains::taxi_state_id(2, 2, 0, 1), south, rng).reward, -1.0);
  // Taxi at G carrying the passenger whose destination is G.
  const auto r = step(d, domains::taxi_state_id(0, 4, 4, 1), dropoff, rng);
  EXPECT_EQ(r.reward, 20.0);
  EXPECT_TRUE(d.is_terminal(r.next));
}

TEST(Distance, Examples) {
  const std::vector<double> a{1.5, -2.0, 7.0};
  EXPECT_EQ(euclidean_distance(a, a), 0.0);
  EXPECT_EQ(euclidean_distance(std::vector<double>{0, 0}, std::vector<double>{3, 4}), 5.0);
  const auto taxi = domains::build_taxi();
  EXPECT_EQ(euclidean_distance(taxi.state(domains::taxi_state_id(1, 3, 2, 0)).features,
                               taxi.state(domains::taxi_state_id(2, 3, 2, 0)).features),
            1.0);
}

TEST(Distance, LengthMismatchIsAContractViolation) {
  EXPECT_THROW(euclidean_distance(std::vector<double>{1}, std::vector<double>{1, 2}),
               ContractViolation);
}

TEST(Distance, IsAMetricOnRandomTaxiTriples) {
  const auto d = domains::build_taxi();
  Rng rng(17);
  for (int i = 0; i < 2000; ++i) {
    const auto& x = d.state(StateId(rng.uniform_int(d.num_states()))).features;
    const auto& y = d.state(StateId(rng.uniform_int(d.num_states()))).features;
    const auto& z = d.state(StateId(rng.uniform_int(d.num_states()))).features;
    const double xy = euclidean_distance(x, y);
    EXPECT_GE(xy, 0.0);
    EXPECT_EQ(xy, euclidean_distance(y, x));
    EXPECT_EQ(xy == 0.0, x == y);
    EXPECT_LE(xy, euclidean_distance(x, z) + euclidean_distance(z, y) + 1e-12);
  }
}

TEST(Distance, ScaleDefaultsToIdentity) {
  const std::vector<double> x{0, 0}, y{3, 4}, ones{1, 1}, halves{0.5, 0.5};
  EXPECT_EQ(euclidean_distance(x, y, ones), euclidean_distance(x, y));
  EXPECT_EQ(euclidean_distance(x, y, halves), 2.5);
}

TEST(Rng, SameSeedSameStream) {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
}

TEST(Rng, UniformIntStaysInRange) {
  Rng rng(1);
  std::vector<int> counts(7);
  for (int i = 0; i < 70000; ++i) ++counts[rng.uniform_int(7)];
  for (int c : counts) EXPECT_NEAR(c, 10000, 500);
}

}  // namespace
}  // namespace polex

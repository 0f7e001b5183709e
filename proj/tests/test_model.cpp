#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "hmt/hmt.hpp"
#include "support/test_models.hpp"

using namespace hmt;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

TEST_CASE("validate accepts the reference models") {
  CHECK(validate(hmt::testing::m1_categorical()).empty());
  CHECK(validate(hmt::testing::m1_gaussian()).empty());
  CHECK(validate(hmt::testing::cycle3_gaussian()).empty());
}

TEST_CASE("validate reports violations with locations") {
  HmtModel m = hmt::testing::m1_categorical();
  m.transitions[2].at(0, 0) = 0.8;  // row 0 now sums to 0.9
  auto violations = validate(m);
  REQUIRE_FALSE(violations.empty());
  CHECK(violations[0].where == "a2[0]");

  HmtModel g = hmt::testing::m1_gaussian();
  std::get<GaussianEmission>(g.emission).stds[1] = 0.0;
  violations = validate(g);
  REQUIRE_FALSE(violations.empty());
  CHECK(violations[0].where == "emission.std[1]");

  HmtModel p = hmt::testing::m1_categorical();
  p.pi = {0.6, 0.6};
  CHECK_FALSE(validate(p).empty());
}

TEST_CASE("perfect coupling survives validation untouched") {
  // Tensors with zero mass on every mixed tuple are legal; nothing may
  // redistribute the coupling.
  const HmtModel m = hmt::testing::m1_categorical();
  CHECK(validate(m).empty());
  CHECK(m.transitions.at(2).at(0, tuple_pack({0, 1}, 2)) == 0.0);
  CHECK(m.transitions.at(2).at(0, tuple_pack({1, 0}, 2)) == 0.0);
  CHECK_THAT(m.transitions.at(2).at(0, tuple_pack({0, 0}, 2)), WithinAbs(0.9, 0.0));
}

TEST_CASE("emission_density values") {
  const HmtModel m1 = hmt::testing::m1_categorical();
  CHECK(emission_density(m1, 0, Observation::categorical(0)) == 1.0);
  CHECK(emission_density(m1, 0, Observation::categorical(1)) == 0.0);
  // Symbols outside the alphabet have no mass.
  CHECK(emission_density(m1, 0, Observation::categorical(5)) == 0.0);

  HmtModel g = hmt::testing::m1_gaussian(0.0, 2.0, 1.0);
  CHECK_THAT(emission_density(g, 0, Observation::scalar(0.0)),
             WithinAbs(0.3989422804014327, 1e-15));
  std::get<GaussianEmission>(g.emission).stds = {1.0, 0.5};
  CHECK_THAT(emission_density(g, 1, Observation::scalar(2.0)),
             WithinAbs(0.7978845608028654, 1e-15));

  CHECK_THROWS_MATCHES(emission_density(m1, 0, Observation::scalar(1.0)), Error,
                       Catch::Matchers::MessageMatches(
                           Catch::Matchers::StartsWith("KindMismatch")));
}

TEST_CASE("child_tuple_marginal") {
  const TransitionTensor coupled = hmt::testing::coupled_2state_tensor(0.9, 0.9);
  CHECK_THAT(child_tuple_marginal(coupled, 0, 0, 0), WithinAbs(0.9, 1e-15));
  CHECK_THAT(child_tuple_marginal(coupled, 0, 1, 1), WithinAbs(0.1, 1e-15));

  // Marginals over the child state always sum to 1.
  std::mt19937_64 g(99);
  for (int rep = 0; rep < 10; ++rep) {
    const auto inst = hmt::testing::random_instance(g, rep % 2 == 0);
    for (const auto& [n, tensor] : inst.model.transitions)
      for (int p = 0; p < tensor.state_count; ++p)
        for (int i = 0; i < n; ++i) {
          double sum = 0.0;
          for (int s = 0; s < tensor.state_count; ++s)
            sum += child_tuple_marginal(tensor, p, i, s);
          CHECK_THAT(sum, WithinAbs(1.0, 1e-12));
        }
  }
}

TEST_CASE("factorized_tensor") {
  const std::vector<std::vector<double>> identity{{1.0, 0.0}, {0.0, 1.0}};
  const TransitionTensor id2 = factorized_tensor({identity, identity});
  CHECK(id2.at(0, tuple_pack({0, 0}, 2)) == 1.0);
  CHECK(id2.at(0, tuple_pack({0, 1}, 2)) == 0.0);
  CHECK(id2.at(1, tuple_pack({1, 1}, 2)) == 1.0);

  const std::vector<std::vector<double>> uniform{{0.5, 0.5}, {0.5, 0.5}};
  const TransitionTensor u2 = factorized_tensor({uniform, uniform});
  for (int p = 0; p < 2; ++p)
    for (int tup = 0; tup < 4; ++tup) CHECK_THAT(u2.at(p, tup), WithinAbs(0.25, 1e-15));

  // Factorized tensors match the per-child matrix through the marginal, and
  // their rows are stochastic.
  std::mt19937_64 g(1234);
  for (int rep = 0; rep < 20; ++rep) {
    const int N = 2 + static_cast<int>(g() % 2);
    const int n = 2 + static_cast<int>(g() % 2);
    std::vector<std::vector<std::vector<double>>> mats;
    for (int i = 0; i < n; ++i) {
      std::vector<std::vector<double>> mat;
      for (int p = 0; p < N; ++p) mat.push_back(hmt::testing::random_distribution(g, N));
      mats.push_back(mat);
    }
    const TransitionTensor t = factorized_tensor(mats);
    for (int p = 0; p < N; ++p) {
      double sum = 0.0;
      for (int tup = 0; tup < t.tuple_count(); ++tup) sum += t.at(p, tup);
      CHECK_THAT(sum, WithinAbs(1.0, 1e-12));
      for (int i = 0; i < n; ++i)
        for (int s = 0; s < N; ++s)
          CHECK_THAT(child_tuple_marginal(t, p, i, s),
                     WithinAbs(mats[static_cast<size_t>(i)][static_cast<size_t>(p)][static_cast<size_t>(s)], 1e-12));
    }

    HmtModel m;
    m.state_count = N;
    m.pi = hmt::testing::random_distribution(g, N);
    m.transitions[n] = t;
    GaussianEmission em;
    for (int s = 0; s < N; ++s) {
      em.means.push_back(0.0);
      em.stds.push_back(1.0);
    }
    m.emission = em;
    CHECK(validate(m).empty());
  }

  CHECK_THROWS_AS(factorized_tensor({identity, {{1.0}}}), Error);
}

TEST_CASE("tensor flat layout is lexicographic with child 1 most significant") {
  TransitionTensor t(3, 2);
  // Tuple (mu1, mu2) -> index mu1*3 + mu2.
  CHECK(tuple_pack({0, 0}, 3) == 0);
  CHECK(tuple_pack({0, 2}, 3) == 2);
  CHECK(tuple_pack({1, 0}, 3) == 3);
  CHECK(tuple_pack({2, 1}, 3) == 7);
  std::vector<int> digits;
  tuple_unpack(7, 2, 3, digits);
  CHECK(digits == std::vector<int>{2, 1});
  CHECK(t.tuple_count() == 9);
}

TEST_CASE("renormalized repairs rows explicitly") {
  HmtModel m = hmt::testing::m1_categorical();
  m.pi = {0.3, 0.3};
  m.transitions[2].at(0, 0) = 1.8;
  CHECK_FALSE(validate(m).empty());
  const HmtModel fixed = renormalized(m);
  CHECK(validate(fixed).empty());
}

TEST_CASE("permute_states round-trips and relabels consistently") {
  const HmtModel m = hmt::testing::cycle3_gaussian();
  const std::vector<int> perm{1, 2, 0};
  const HmtModel p = permute_states(m, perm);
  CHECK(validate(p).empty());
  CHECK(p.pi[1] == 1.0);
  // Old row 0 -> tuple (1,1) becomes row 1 -> tuple (2,2).
  CHECK(p.transitions.at(2).at(1, tuple_pack({2, 2}, 3)) == 1.0);
  const std::vector<int> inverse{2, 0, 1};
  const HmtModel back = permute_states(p, inverse);
  CHECK(back.pi == m.pi);
  CHECK(back.transitions.at(2).rows == m.transitions.at(2).rows);
}

#include <gtest/gtest.h>

#include <cmath>

#include "decoupling/adversary.hpp"
#include "decoupling/dyadic.hpp"
#include "oracles.hpp"

using namespace decoupling;

namespace {

oracle::Levels levels_of(const PredictableTree& t) {
  oracle::Levels lv(t.depth());
  for (std::size_t n = 0; n < t.depth(); ++n)
    for (std::size_t i = 0; i < t.level_size(n); ++i) lv[n].push_back(t.vector(n, i));
  return lv;
}

void expect_same_law(const ScalarDistribution& a, const ScalarDistribution& b) {
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_NEAR(a.atoms()[i].value, b.atoms()[i].value, 1e-12);
    EXPECT_NEAR(a.atoms()[i].probability, b.atoms()[i].probability, 1e-12);
  }
}

}  // namespace

TEST(EvalPath, Examples) {
  const Vector x{1.5, -2};
  auto inc = eval_path(PredictableTree::constant(3, x), 0b111);
  for (const auto& v : inc) EXPECT_EQ(v, x);
  auto one = eval_path(PredictableTree::constant(1, x), 0);
  EXPECT_EQ(one[0], (Vector{-1.5, 2}));
  const auto w = linfty_witness(2);
  for (std::uint64_t path = 0; path < 4; ++path)
    for (const auto& v : eval_path(w, path)) EXPECT_EQ(norm(Space::linf(4), v), 1.0);
  EXPECT_THROW(eval_path(w, 4), InputError);
}

TEST(Distribution, CoupledExamples) {
  auto d = coupled_distribution(PredictableTree::constant(2, {1.0}), Space::l2(1));
  ASSERT_EQ(d.size(), 2u);
  EXPECT_EQ(d.atoms()[0].value, 0.0);
  EXPECT_EQ(d.atoms()[0].probability, 0.5);
  EXPECT_EQ(d.atoms()[1].value, 2.0);
  EXPECT_EQ(d.atoms()[1].probability, 0.5);

  auto point = coupled_distribution(PredictableTree::constant(1, {3.0, 4.0}), Space::l2(2));
  ASSERT_EQ(point.size(), 1u);
  EXPECT_EQ(point.atoms()[0].value, 5.0);

  auto w = coupled_distribution(linfty_witness(4), Space::linf(16));
  ASSERT_EQ(w.size(), 1u);
  EXPECT_EQ(w.atoms()[0].value, 4.0);
}

TEST(Distribution, DecoupledExamples) {
  const auto t = random_tree(1, 3, 5);
  expect_same_law(coupled_distribution(t, Space::lp(3, 1.5)), decoupled_distribution(t, Space::lp(3, 1.5)));
  // 8.25 from a 256-state enumeration over coordinates and decoupled signs
  const auto w = decoupled_distribution(linfty_witness(4), Space::linf(16));
  EXPECT_NEAR(apply_functional(w, Functional::power(2)), 8.25, 1e-12);
}

TEST(Distribution, HilbertSecondMomentsAgree) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto t = random_tree(1 + seed % 5, 1 + seed % 4, seed);
    const Space s = Space::l2(t.dim());
    const double c = apply_functional(coupled_distribution(t, s), Functional::power(2));
    const double d = apply_functional(decoupled_distribution(t, s), Functional::power(2));
    const double o = oracle::decoupled_moment(levels_of(t), oracle::lp_norm(2), 2);
    EXPECT_NEAR(c, o, 1e-12 * (1 + o));
    EXPECT_NEAR(d, o, 1e-12 * (1 + o));
  }
}

TEST(Distribution, CapsRaiseCapacityError) {
  const auto t = PredictableTree::constant(11, {1.0});
  EXPECT_NO_THROW(coupled_distribution(t, Space::l2(1)));
  EXPECT_THROW(decoupled_distribution(t, Space::l2(1)), CapacityError);
  EXPECT_THROW(coupled_distribution(t, Space::l2(1), 10), CapacityError);
}

TEST(Functional, Examples) {
  ScalarDistribution point({{4.0, 1.0}});
  ScalarDistribution two({{0.0, 0.5}, {2.0, 0.5}});
  EXPECT_EQ(apply_functional(point, Functional::power(2)), 16.0);
  EXPECT_EQ(apply_functional(two, Functional::tail(1)), 0.5);
  EXPECT_EQ(apply_functional(two, Functional::weak_lp(2)), 2.0);
  EXPECT_EQ(apply_functional(two, Functional::tail(2)), 0.0);
}

TEST(Functional, TailIsNonincreasing) {
  const auto d = decoupled_distribution(random_tree(4, 2, 8), Space::linf(2));
  double prev = 1.0;
  for (double mu = 0; mu < 10; mu += 0.05) {
    const double t = apply_functional(d, Functional::tail(mu));
    EXPECT_LE(t, prev);
    prev = t;
  }
}

TEST(Ratio, Examples) {
  EXPECT_NEAR(decoupling_ratio(random_tree(1, 4, 1), Space::linf(4), 2), 1.0, 1e-15);
  EXPECT_NEAR(decoupling_ratio(random_tree(5, 4, 2), Space::l2(4), 2), 1.0, 1e-12);
  // 4 / sqrt(8.25)
  EXPECT_NEAR(decoupling_ratio(linfty_witness(4), Space::linf(16), 2), 1.3926212476455828, 1e-12);
  EXPECT_THROW(decoupling_ratio(PredictableTree(3, 2), Space::l2(2), 2), DegenerateInputError);
}

TEST(Ratio, MomentsMatchBruteForceOracle) {
  const std::vector<std::pair<Space, oracle::NormFn>> spaces = {
      {Space::lp(3, 1.0), oracle::lp_norm(1)},
      {Space::lp(3, 3.0), oracle::lp_norm(3)},
      {Space::linf(3), oracle::lp_norm(INFINITY)},
      {Space::weighted_sup(sqrtlog_weights(3)), oracle::weighted_sup_norm(sqrtlog_weights(3))}};
  for (std::uint64_t seed = 0; seed < 6; ++seed)
    for (const auto& [space, fn] : spaces) {
      const auto t = random_tree(1 + seed % 4, 3, 100 + seed);
      for (double p : {1.0, 2.0, 3.0}) {
        const double oc = oracle::coupled_moment(levels_of(t), fn, p);
        const double od = oracle::decoupled_moment(levels_of(t), fn, p);
        EXPECT_NEAR(coupled_moment(t, space, p), oc, 1e-12 * (1 + oc));
        EXPECT_NEAR(decoupled_moment(t, space, p), od, 1e-12 * (1 + od));
      }
    }
}

TEST(Ratio, ScalarSecondMomentRatioIsOne) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const auto t = random_tree(1 + seed % 7, 1, seed);
    for (const Space& s : {Space::l2(1), Space::linf(1), Space::lp(1, 1.0), Space::weighted_sup({0.3})})
      EXPECT_NEAR(decoupling_ratio(t, s, 2), 1.0, 1e-12);
  }
}

TEST(Invariants, SignFlipSymmetry) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto t = random_tree(1 + seed % 5, 3, seed);
    const Space s = Space::lp(3, 1.5);
    expect_same_law(coupled_distribution(t, s), coupled_distribution(t.negated(), s));
    expect_same_law(decoupled_distribution(t, s), decoupled_distribution(t.negated(), s));
  }
}

// Relabelling r_{j+1} -> -r_{j+1}: level-j vectors change sign and deeper
// levels read the flipped bit. Both laws are unchanged.
TEST(Invariants, SignRelabellingExchangeability) {
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    const auto t = random_tree(4, 2, 40 + seed);
    for (std::size_t j = 0; j < 4; ++j) {
      PredictableTree u(4, 2);
      for (std::size_t n = 0; n < 4; ++n)
        for (std::size_t i = 0; i < t.level_size(n); ++i) {
          const std::size_t src = n > j ? i ^ (std::size_t{1} << j) : i;
          for (std::size_t k = 0; k < 2; ++k) u.at(n, i)[k] = (n == j ? -1.0 : 1.0) * t.at(n, src)[k];
        }
      const Space s = Space::linf(2);
      expect_same_law(coupled_distribution(t, s), coupled_distribution(u, s));
      expect_same_law(decoupled_distribution(t, s), decoupled_distribution(u, s));
    }
  }
}

TEST(MonteCarlo, Examples) {
  const auto c = mc_moment(PredictableTree::constant(2, {1.0}), Space::l2(1), Functional::power(2), Side::Coupled,
                           1000000, 1);
  EXPECT_NEAR(c.value, 2.0, 3 * c.std_error);
  const auto w = mc_moment(WitnessField(4), Space::linf(16), Functional::power(2), Side::Decoupled, 1000000, 2);
  EXPECT_NEAR(w.value, 8.25, 3 * w.std_error);
  const auto tail = mc_moment(random_tree(3, 2, 3), Space::l2(2), Functional::tail(1e300), Side::Coupled, 1000, 3);
  EXPECT_EQ(tail.value, 0.0);
  EXPECT_THROW(mc_moment(random_tree(3, 2, 3), Space::l2(2), Functional::weak_lp(2), Side::Coupled, 1000, 3),
               InputError);
  EXPECT_THROW(mc_moment(random_tree(3, 2, 3), Space::l2(2), Functional::power(2), Side::Coupled, 1, 3), InputError);
}

TEST(MonteCarlo, ConsistentWithExactEnumeration) {
  int inside = 0;
  for (std::uint64_t run = 0; run < 100; ++run) {
    const auto t = random_tree(1 + run % 8, 2, 500 + run);
    const Space s = run % 2 ? Space::linf(2) : Space::lp(2, 1.0);
    const Side side = run % 3 ? Side::Decoupled : Side::Coupled;
    const double exact = side == Side::Coupled ? coupled_moment(t, s, 2) : decoupled_moment(t, s, 2);
    const auto mc = mc_moment(t, s, Functional::power(2), side, 4000, run);
    if (std::abs(mc.value - exact) <= 4 * mc.std_error + 1e-12 * exact) ++inside;
  }
  EXPECT_GE(inside, 99);
}

TEST(Tree, JsonRoundTripAndValidation) {
  const auto t = random_tree(3, 2, 77);
  EXPECT_TRUE(tree_from_json(tree_to_json(t)) == t);
  nlohmann::json bad = {{"levels", {{{1.0}}, {{1.0}}}}};
  EXPECT_THROW(tree_from_json(bad), InputError);
  nlohmann::json ragged = {{"levels", {{{1.0}}, {{1.0}, {1.0, 2.0}}}}};
  EXPECT_THROW(tree_from_json(ragged), InputError);
}

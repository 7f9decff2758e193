#include <gtest/gtest.h>

#include <cmath>

#include "decoupling/dyadic.hpp"
#include "decoupling/parallel.hpp"
#include "decoupling/rng.hpp"

using namespace decoupling;

// Known-answer vectors of the reference Philox4x32-10 implementation.
TEST(Philox, KnownAnswers) {
  EXPECT_EQ(philox4x32({0, 0, 0, 0}, {0, 0}), (std::array<std::uint32_t, 4>{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8}));
  EXPECT_EQ(philox4x32({0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}, {0xffffffff, 0xffffffff}),
            (std::array<std::uint32_t, 4>{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd}));
  EXPECT_EQ(philox4x32({0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, {0xa4093822, 0x299f31d0}),
            (std::array<std::uint32_t, 4>{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1}));
}

TEST(CounterRng, StreamsAreReproducibleAndDistinct) {
  CounterRng a(5, 17), b(5, 17), c(5, 18), d(6, 17);
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next_u32();
    EXPECT_EQ(x, b.next_u32());
    (void)c;
  }
  EXPECT_NE(CounterRng(5, 17).next_u64(), CounterRng(5, 18).next_u64());
  EXPECT_NE(CounterRng(5, 17).next_u64(), d.next_u64());
}

TEST(CounterRng, UniformAndNormalMoments) {
  const std::uint64_t n = 200000;
  double su = 0, sn = 0, sn2 = 0;
  for (std::uint64_t i = 0; i < n; ++i) {
    CounterRng r(3, i);
    const double u = r.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    su += u;
    const double z = r.normal();
    sn += z;
    sn2 += z * z;
  }
  EXPECT_NEAR(su / n, 0.5, 4 * std::sqrt(1.0 / 12 / n));
  EXPECT_NEAR(sn / n, 0.0, 4 / std::sqrt(double(n)));
  EXPECT_NEAR(sn2 / n, 1.0, 4 * std::sqrt(2.0 / n));
}

TEST(Parallel, ResultsIgnoreWorkerCount) {
  const auto tree = random_tree(8, 3, 99);
  const Space s = Space::lp(3, 3.0);
  set_worker_count(1);
  const double m1 = decoupled_moment(tree, s, 3.0);
  const auto e1 = mc_moment(tree, s, Functional::power(2), Side::Decoupled, 50000, 4);
  set_worker_count(4);
  const double m4 = decoupled_moment(tree, s, 3.0);
  const auto e4 = mc_moment(tree, s, Functional::power(2), Side::Decoupled, 50000, 4);
  set_worker_count(0);
  EXPECT_EQ(m1, m4);
  EXPECT_EQ(e1.value, e4.value);
  EXPECT_EQ(e1.std_error, e4.std_error);
}

TEST(Parallel, PairwiseSumMatchesExactSum) {
  std::vector<double> x(10000);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = 0.1 * static_cast<double>(i % 7);
  double exact = 0;
  for (std::size_t i = 0; i < x.size(); ++i) exact += static_cast<double>(i % 7);
  EXPECT_NEAR(pairwise_sum(x), 0.1 * exact, 1e-10);
}

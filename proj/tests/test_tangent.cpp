#include <gtest/gtest.h>

#include <cmath>

#include "decoupling/tangent.hpp"

using namespace decoupling;

namespace {

// Uniform space of n signs; atom bit j set <=> r_{j+1} = +1; F_k reveals r_1..r_k.
std::shared_ptr<const FiniteFilteredSpace> sign_space(std::size_t n, std::size_t steps = 0) {
  if (steps == 0) steps = n;
  const std::size_t atoms = std::size_t{1} << n;
  std::vector<std::string> labels;
  std::vector<double> probs(atoms, 1.0 / double(atoms));
  for (std::size_t a = 0; a < atoms; ++a) labels.push_back("w" + std::to_string(a));
  std::vector<Partition> filt;
  for (std::size_t k = 0; k <= steps; ++k) {
    Partition p(atoms);
    for (std::size_t a = 0; a < atoms; ++a) p[a] = a & ((std::size_t{1} << std::min(k, n)) - 1);
    filt.push_back(canonical_partition(p));
  }
  return std::make_shared<const FiniteFilteredSpace>(labels, probs, filt);
}

double r(std::size_t atom, std::size_t j) { return (atom >> (j - 1)) & 1u ? 1.0 : -1.0; }

std::vector<Vector> column(std::size_t atoms, const std::function<double(std::size_t)>& f) {
  std::vector<Vector> out;
  for (std::size_t a = 0; a < atoms; ++a) out.push_back({f(a)});
  return out;
}

}  // namespace

TEST(Space, Validation) {
  EXPECT_THROW(FiniteFilteredSpace({"a", "b"}, {0.5, 0.6}, {{0, 0}}), InputError);
  EXPECT_THROW(FiniteFilteredSpace({"a", "b"}, {0.5, 0.5}, {{0, 1}}), InputError);
  EXPECT_THROW(FiniteFilteredSpace({"a", "b", "c"}, {0.2, 0.3, 0.5}, {{0, 0, 0}, {0, 0, 1}, {0, 1, 0}}), InputError);
  EXPECT_NO_THROW(FiniteFilteredSpace({"a", "b"}, {0.5, 0.5}, {{0, 0}, {0, 1}}));
  auto S = sign_space(1);
  EXPECT_THROW(AdaptedProcess(S, {{{1.0}, {1.0}}, {{1.0}, {1.0}}}), InputError);
  auto S2 = sign_space(2);
  EXPECT_THROW(AdaptedProcess(S2, {column(4, [](std::size_t a) { return r(a, 2); })}), InputError);
}

TEST(Condition, Examples) {
  auto S = sign_space(2);
  const AdaptedProcess d(S, {column(4, [](std::size_t a) { return r(a, 1); }),
                             column(4, [](std::size_t a) { return r(a, 1) * r(a, 2); })});
  const auto k2 = condition(d, 2);
  ASSERT_EQ(k2.per_cell.size(), 2u);
  for (const auto& law : k2.per_cell) {
    EXPECT_EQ(law.support, (std::vector<Vector>{{-1.0}, {1.0}}));
    EXPECT_EQ(law.prob, (std::vector<double>{0.5, 0.5}));
  }
  const AdaptedProcess det(S, {column(4, [](std::size_t) { return 3.0; }), column(4, [](std::size_t) { return -1.0; })});
  for (const auto& law : condition(det, 2).per_cell) {
    EXPECT_EQ(law.support, (std::vector<Vector>{{-1.0}}));
    EXPECT_EQ(law.prob, std::vector<double>{1.0});
  }
  // d_2 = r_2 is independent of F_1
  const AdaptedProcess ind(S, {column(4, [](std::size_t a) { return r(a, 1); }),
                               column(4, [](std::size_t a) { return 2 * r(a, 2); })});
  const auto k = condition(ind, 2);
  EXPECT_EQ(k.per_cell[0].support, k.per_cell[1].support);
  EXPECT_EQ(k.per_cell[0].prob, k.per_cell[1].prob);
  EXPECT_THROW(condition(ind, 3), InputError);
}

TEST(Condition, NonUniformCellMasses) {
  auto S = std::make_shared<const FiniteFilteredSpace>(
      std::vector<std::string>{"a", "b", "c"}, std::vector<double>{0.2, 0.3, 0.5},
      std::vector<Partition>{{0, 0, 0}, {0, 1, 2}});
  const AdaptedProcess d(S, {{{1.0}, {2.0}, {1.0}}});
  const auto law = condition(d, 1).per_cell[0];
  EXPECT_NEAR(law.mass_of({1.0}), 0.7, 1e-15);
  EXPECT_NEAR(law.mass_of({2.0}), 0.3, 1e-15);
  EXPECT_EQ(law.mass_of({3.0}), 0.0);
}

TEST(Decouple, RademacherTransformIsTangent) {
  // d_1 = r_1 v_0, d_2 = r_2 v_1(r_1) with v_0 = 1, v_1 = 2 or 1/2
  auto S = sign_space(2);
  auto v1 = [](std::size_t a) { return r(a, 1) > 0 ? 2.0 : 0.5; };
  const AdaptedProcess d(S, {column(4, [](std::size_t a) { return r(a, 1); }),
                             column(4, [&](std::size_t a) { return r(a, 2) * v1(a); })});
  const auto D = decouple(d);
  const auto rep = verify_tangent(D.d, D.e, D.H);
  EXPECT_TRUE(rep.tangency);
  EXPECT_TRUE(rep.cond_independence);
  EXPECT_LE(rep.max_discrepancy, 1e-12);
  // e_2 = r'_2 v_1(r_1): |e_2| follows |d_2| atomwise and its sign is a fair coin given the base atom
  for (std::size_t a = 0; a < D.space->atoms(); ++a) {
    EXPECT_EQ(std::abs(D.e.value(2, a)[0]), std::abs(D.d.value(2, a)[0]));
    EXPECT_EQ(D.e.value(1, a)[0] * D.e.value(1, a)[0], 1.0);
  }
  const auto k = conditional_laws(D.e.step(2), D.space->probs(), D.H);
  for (const auto& law : k) {
    ASSERT_EQ(law.prob.size(), 2u);
    EXPECT_NEAR(law.prob[0], 0.5, 1e-15);
  }
}

TEST(Decouple, DeterministicProcessIsItsOwnCopy) {
  auto S = sign_space(2);
  const AdaptedProcess d(S, {column(4, [](std::size_t) { return 1.5; }), column(4, [](std::size_t) { return -2.0; })});
  const auto D = decouple(d);
  EXPECT_EQ(D.space->atoms(), 4u);
  for (std::size_t n = 1; n <= 2; ++n) EXPECT_EQ(D.e.step(n), D.d.step(n));
  const auto rep = verify_tangent(d, d, Partition(4, 0));
  EXPECT_TRUE(rep.tangency);
  EXPECT_TRUE(rep.cond_independence);
}

TEST(Decouple, SignProductExample) {
  auto S = sign_space(2);
  const AdaptedProcess d(S, {column(4, [](std::size_t a) { return r(a, 1); }),
                             column(4, [](std::size_t a) { return r(a, 1) * r(a, 2); })});
  const auto D = decouple(d);
  const auto rep = verify_tangent(D.d, D.e, D.H);
  EXPECT_TRUE(rep.tangency);
  EXPECT_TRUE(rep.cond_independence);
  EXPECT_EQ(D.space->atoms(), 16u);
}

TEST(Decouple, TangencyOfKernels) {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto d = random_adapted_process(1 + s % 4, 3, 1 + s % 2, s);
    const auto D = decouple(d);
    const auto rep = verify_tangent(D.d, D.e, D.H);
    EXPECT_TRUE(rep.tangency) << s;
    EXPECT_TRUE(rep.cond_independence) << s;
    EXPECT_LE(rep.max_discrepancy, 1e-12) << s;
    for (std::size_t n = 1; n <= d.length(); ++n) {
      const auto ke = condition(D.e, n), kd = condition(D.d, n);
      ASSERT_EQ(ke.per_cell.size(), kd.per_cell.size());
      for (std::size_t c = 0; c < ke.per_cell.size(); ++c) {
        ASSERT_EQ(ke.per_cell[c].support, kd.per_cell[c].support);
        for (std::size_t j = 0; j < ke.per_cell[c].prob.size(); ++j)
          EXPECT_NEAR(ke.per_cell[c].prob[j], kd.per_cell[c].prob[j], 1e-12);
      }
    }
  }
}

// With H containing sigma(d), e := d is H-measurable, so e_n given H is a Dirac
// mass: the tuple law factorises trivially and tangency is what breaks.
TEST(VerifyTangent, CopyOfNonIndependentProcess) {
  auto S = sign_space(2);
  const auto r1 = column(4, [](std::size_t a) { return r(a, 1); });
  const AdaptedProcess d(S, {r1, r1});
  const auto rep = verify_tangent(d, d, S->partition(2));
  EXPECT_FALSE(rep.tangency);
  EXPECT_TRUE(rep.cond_independence);
  EXPECT_NEAR(rep.tangency_discrepancy, 0.5, 1e-15);
}

// d = (r1, r2), e = (s1, s2), H = sigma(r1, r2, s1 s2): tangent, but e_1 and e_2
// are dependent given H.
TEST(VerifyTangent, DependenceGivenH) {
  const std::size_t atoms = 16;
  std::vector<std::string> labels;
  std::vector<double> probs(atoms, 1.0 / 16);
  Partition f1(atoms), all(atoms), H(atoms), trivial(atoms, 0);
  for (std::size_t a = 0; a < atoms; ++a) {
    labels.push_back(std::to_string(a));
    f1[a] = (a & 1u) | ((a >> 1) & 2u);  // r1 = bit 0, s1 = bit 2
    all[a] = a;
    H[a] = (a & 3u) | ((((a >> 2) ^ (a >> 3)) & 1u) << 2);
  }
  auto S = std::make_shared<const FiniteFilteredSpace>(labels, probs,
                                                       std::vector<Partition>{trivial, canonical_partition(f1), all});
  auto bit = [](std::size_t a, int b) { return (a >> b) & 1u ? 1.0 : -1.0; };
  const AdaptedProcess d(S, {column(atoms, [&](std::size_t a) { return bit(a, 0); }),
                             column(atoms, [&](std::size_t a) { return bit(a, 1); })});
  const AdaptedProcess e(S, {column(atoms, [&](std::size_t a) { return bit(a, 2); }),
                             column(atoms, [&](std::size_t a) { return bit(a, 3); })});
  const auto rep = verify_tangent(d, e, canonical_partition(H));
  EXPECT_TRUE(rep.tangency);
  EXPECT_FALSE(rep.cond_independence);
  EXPECT_NEAR(rep.independence_discrepancy, 0.25, 1e-15);
}

TEST(VerifyTangent, Errors) {
  auto S = sign_space(2);
  const AdaptedProcess d(S, {column(4, [](std::size_t a) { return r(a, 1); })});
  const AdaptedProcess other(sign_space(1), {column(2, [](std::size_t a) { return r(a, 1); })});
  EXPECT_THROW(verify_tangent(d, other, Partition(4, 0)), InputError);
  EXPECT_THROW(verify_tangent(d, d, Partition(4, 0)), InputError);
  EXPECT_NO_THROW(verify_tangent(d, d, S->partition(1)));
}

TEST(Factorize, TwoPointLaw) {
  const std::vector<Vector> d{{1.0}, {3.0}};
  const auto f = factorize(d, {0.5, 0.5}, {0, 0});
  EXPECT_EQ(f.d0(0, 0.3), Vector{1.0});
  EXPECT_EQ(f.d0(0, 0.5), Vector{1.0});
  EXPECT_EQ(f.d0(0, 0.5000001), Vector{3.0});
  EXPECT_EQ(f.H(0, 0.4), 0.2);
  EXPECT_DOUBLE_EQ(f.H(1, 0.4), 0.7);
  EXPECT_TRUE(f.null_set.empty());
  EXPECT_EQ(f.embed(0), 0.0);
  EXPECT_EQ(f.embed(1), 0.5);
}

TEST(Factorize, Dirac) {
  const std::vector<Vector> d(3, Vector{2.0, -1.0});
  const auto f = factorize(d, {0.2, 0.3, 0.5}, {0, 0, 0});
  for (std::size_t a = 0; a < 3; ++a)
    for (double s : {0.1, 0.5, 1.0}) EXPECT_EQ(f.H(a, s), s);
  for (double h : {0.0, 0.3, 1.0}) EXPECT_EQ(f.d0(0, h), (Vector{2.0, -1.0}));
}

TEST(Factorize, CellDependentThresholds) {
  // A1 = {a, b} with 1/2 each; A2 = {a, b, b, b}
  const std::vector<Vector> d{{0.0}, {1.0}, {0.0}, {1.0}, {1.0}, {1.0}};
  const std::vector<double> p{0.25, 0.25, 0.125, 0.125, 0.125, 0.125};
  const auto f = factorize(d, p, {0, 0, 1, 1, 1, 1});
  EXPECT_EQ(f.thresholds(0).front().first, 0.5);
  EXPECT_EQ(f.thresholds(1).front().first, 0.25);
  EXPECT_EQ(f.d0(1, 0.25), Vector{0.0});
  EXPECT_EQ(f.d0(1, 0.26), Vector{1.0});
  const auto c = check_factorization(f, d, p);
  EXPECT_TRUE(c.representation_ok);
  EXPECT_LE(c.pushforward_error, 1e-15);
  EXPECT_LE(c.independence_error, 1e-15);
}

TEST(Factorize, RandomInvariants) {
  for (std::uint64_t s = 0; s < 30; ++s) {
    const auto d = random_adapted_process(2 + s % 2, 3, 2, s + 500);
    const auto& base = *d.base();
    const std::size_t n = d.length();
    const auto f = factorize(d.step(n), base.probs(), base.partition(n - 1));
    const auto c = check_factorization(f, d.step(n), base.probs());
    EXPECT_TRUE(f.null_set.empty());
    EXPECT_TRUE(c.representation_ok);
    EXPECT_LE(c.pushforward_error, 1e-12);
    EXPECT_LE(c.independence_error, 1e-12);
    // d0(w, H(w, s)) = d(w) on a grid of s
    for (std::size_t a = 0; a < base.atoms(); ++a)
      for (double sv : {0.01, 0.3, 0.77, 1.0}) EXPECT_EQ(f.d0(f.G[a], f.H(a, sv)), d.value(n, a));
  }
}

TEST(IntervalSet, Algebra) {
  const IntervalSet a({{0.0, 0.5}, {0.4, 0.6}}), b({{0.2, 0.3}, {0.55, 0.9}});
  EXPECT_EQ(a.parts().size(), 1u);
  EXPECT_DOUBLE_EQ(a.measure(), 0.6);
  EXPECT_DOUBLE_EQ(a.intersect(b).measure(), 0.15);
  EXPECT_DOUBLE_EQ(a.subtract(b).measure(), 0.45);
  EXPECT_DOUBLE_EQ(a.unite(b).measure(), 0.9);
  EXPECT_DOUBLE_EQ(a.symmetric_difference(b), 0.75);
  EXPECT_THROW(IntervalSet({{0.5, 0.4}}), InputError);
}

TEST(DyadicRefine, Examples) {
  const IntervalSet unit({{0.0, 1.0}});
  auto r = dyadic_refine(IntervalSet({{0.0, 0.3}}), {unit}, {0.5, 0.5}, 0.25);
  EXPECT_EQ(r.m, 3u);
  EXPECT_LE(r.symmetric_difference, 0.125);
  EXPECT_LE(r.symmetric_difference, r.bound);
  EXPECT_LE(r.max_straddling, 1u);
  EXPECT_EQ(r.cells.size(), 8u);

  r = dyadic_refine(IntervalSet({{0.0, 0.3}}), {unit}, {0.9, 0.1}, 0.5);
  EXPECT_EQ(r.m, 7u);
  EXPECT_NEAR(r.bound, std::pow(0.9, 7), 1e-15);

  const std::vector<IntervalSet> halves{IntervalSet({{0.0, 0.5}}), IntervalSet({{0.5, 1.0}})};
  r = dyadic_refine(IntervalSet({{0.5, 1.0}}), halves, {0.3, 0.7}, 0.1);
  EXPECT_EQ(r.symmetric_difference, 0.0);
  EXPECT_EQ(r.A_eps.symmetric_difference(IntervalSet({{0.5, 1.0}})), 0.0);

  EXPECT_THROW(dyadic_refine(IntervalSet({{0.0, 0.3}}), {unit}, {1.0}, 0.25), InputError);
  EXPECT_THROW(dyadic_refine(IntervalSet({{0.0, 0.3}}), {unit}, {0.5, 0.5}, 1.0), InputError);
  EXPECT_THROW(dyadic_refine(IntervalSet({{0.0, 0.3}}), {unit}, {0.5, 0.5}, 1e-9, 1024), CapacityError);
}

TEST(DyadicRefine, RandomSetsStayWithinBound) {
  CounterRng rng(17, 0, 3);
  for (int t = 0; t < 40; ++t) {
    std::vector<Interval> parts;
    for (int k = 0; k < 3; ++k) {
      const double x = rng.uniform(), y = rng.uniform();
      parts.push_back({std::min(x, y), std::max(x, y)});
    }
    const double cut = 0.1 + 0.8 * rng.uniform();
    const std::vector<IntervalSet> G{IntervalSet({{0.0, cut}}), IntervalSet({{cut, 1.0}})};
    const std::vector<double> mu = t % 2 ? std::vector<double>{0.2, 0.3, 0.5} : std::vector<double>{0.6, 0.4};
    const auto r = dyadic_refine(IntervalSet(parts), G, mu, 0.05);
    EXPECT_LE(r.symmetric_difference, r.bound + 1e-12);
    EXPECT_LT(r.bound, 0.05);
    EXPECT_LE(r.max_straddling, 1u);
    EXPECT_LE(r.independence_error, 1e-12);
    double total = 0;
    for (const auto& c : r.cells) total += c.measure();
    EXPECT_NEAR(total, 1.0, 1e-12);
    // A_eps is a union of final cells
    double covered = 0;
    for (const auto& c : r.cells)
      if (c.outside.empty()) covered += c.measure();
    EXPECT_NEAR(covered, r.A_eps.measure(), 1e-12);
  }
}

// The refinement variables are mu-distributed and independent of G and of each other.
TEST(DyadicRefine, GeneratedVariablesAreIndependent) {
  const std::vector<IntervalSet> G{IntervalSet({{0.0, 0.35}}), IntervalSet({{0.35, 1.0}})};
  const std::vector<double> mu{0.25, 0.75};
  const auto r = dyadic_refine(IntervalSet({{0.1, 0.62}}), G, mu, 0.3);
  ASSERT_GE(r.m, 2u);
  const double gm[2] = {0.35, 0.65};
  for (const auto& c : r.cells) {
    double want = gm[c.g_cell];
    for (std::size_t v : c.values) want *= mu[v];
    EXPECT_NEAR(c.measure(), want, 1e-12);
  }
}

TEST(Symmetrize, Examples) {
  const std::vector<Vector> f{{1.0, -2.0}, {-1.0, 2.0}, {0.0, 0.0}};
  const std::vector<double> p{0.25, 0.25, 0.5};
  const Partition G{0, 0, 0};
  auto out = symmetrize(f, p, G, 3, Space::l2(2));
  EXPECT_EQ(out[0].values, f);
  EXPECT_EQ(out[0].distance, 0.0);
  EXPECT_TRUE(out[0].symmetric);

  const std::vector<Vector> asym{{1.0}, {-1.0}, {2.0}};
  EXPECT_THROW(symmetrize(asym, {0.3, 0.3, 0.4}, {0, 0, 0}, 2, Space::l2(1)), InputError);
}

TEST(Symmetrize, SignTimesNormIsSymmetricAtEveryLevel) {
  // f = r ||v|| with r independent of G = sigma(v)
  const std::vector<double> norms{0.3, 1.7, std::sqrt(2.0)};
  std::vector<Vector> f;
  std::vector<double> p;
  Partition G;
  for (std::size_t c = 0; c < norms.size(); ++c)
    for (double s : {1.0, -1.0}) {
      f.push_back({s * norms[c]});
      p.push_back(1.0 / 6);
      G.push_back(c);
    }
  const auto out = symmetrize(f, p, G, 10, Space::lp(1, 2));
  for (std::size_t n = 0; n < out.size(); ++n) {
    EXPECT_TRUE(out[n].symmetric);
    if (n > 0) EXPECT_LE(out[n].distance, out[n - 1].distance + 1e-15);
  }
  EXPECT_LT(out.back().distance, 1e-2);
}

TEST(Symmetrize, RandomVectorsNonincreasingDistance) {
  CounterRng rng(3, 0, 9);
  for (int t = 0; t < 20; ++t) {
    std::vector<Vector> f;
    std::vector<double> p;
    Partition G;
    for (std::size_t c = 0; c < 3; ++c)
      for (int k = 0; k < 2; ++k) {
        Vector v{3 * rng.normal(), rng.normal(), 0.1 * rng.normal()};
        const double w = 0.1 + rng.uniform();
        f.push_back(v);
        for (double& x : v) x = -x;
        f.push_back(v);
        p.push_back(w);
        p.push_back(w);
        G.push_back(c);
        G.push_back(c);
      }
    double s = 0;
    for (double x : p) s += x;
    for (double& x : p) x /= s;
    for (const Space& X : {Space::linf(3), Space::lp(3, 1)}) {
      const auto out = symmetrize(f, p, G, 12, X, {1.0, 1.5});
      for (std::size_t n = 1; n < out.size(); ++n) {
        EXPECT_TRUE(out[n].symmetric);
        EXPECT_LE(out[n].distance, out[n - 1].distance + 1e-12);
      }
    }
  }
}

TEST(ProcessJson, RoundTrip) {
  const auto d = random_adapted_process(3, 3, 2, 8);
  const auto back = process_from_json(process_to_json(d));
  EXPECT_TRUE(*back.base() == *d.base());
  for (std::size_t n = 1; n <= d.length(); ++n) EXPECT_EQ(back.step(n), d.step(n));
  EXPECT_THROW(process_from_json(nlohmann::json::object()), InputError);
}

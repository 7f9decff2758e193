#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <nlohmann/json.hpp>

#include "decoupling/distribution.hpp"
#include "decoupling/dyadic.hpp"
#include "decoupling/errors.hpp"
#include "decoupling/parallel.hpp"
#include "decoupling/rng.hpp"
#include "decoupling/space.hpp"

namespace decoupling {

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

// Law of sigma*gamma + sum a_n r_n.
struct RadCoeffs {
  std::vector<double> a;
  double sigma = 0.0;

  RadCoeffs() = default;
  RadCoeffs(std::vector<double> coeffs, double s) : a(std::move(coeffs)), sigma(s) {
    for (double v : a) require(std::isfinite(v), "Rademacher coefficients must be finite");
    require(std::isfinite(sigma) && sigma >= 0.0, "sigma must be finite and nonnegative");
    canonicalize();
  }

  // |a| descending, ties by value ascending.
  void canonicalize() {
    std::sort(a.begin(), a.end(), [](double x, double y) {
      if (std::abs(x) != std::abs(y)) return std::abs(x) > std::abs(y);
      return x < y;
    });
  }

  bool operator==(const RadCoeffs& o) const { return a == o.a && sigma == o.sigma; }
};

inline RadCoeffs convolve(const RadCoeffs& x, const RadCoeffs& y) {
  std::vector<double> a = x.a;
  a.insert(a.end(), y.a.begin(), y.a.end());
  return RadCoeffs(std::move(a), std::hypot(x.sigma, y.sigma));
}

struct Moments {
  double m2 = 0.0;
  double m4 = 0.0;
};

// E xi^4 for xi = R + sigma*gamma: E R^4 + 6 sigma^2 E R^2 + 3 sigma^4, with
// E R^4 = 3 |a|_2^4 - 2 |a|_4^4.
inline Moments moments(const RadCoeffs& x) {
  double s2 = 0.0, s4 = 0.0;
  for (double v : x.a) {
    s2 += v * v;
    s4 += v * v * v * v;
  }
  const double g2 = x.sigma * x.sigma;
  return {g2 + s2, 3.0 * s2 * s2 - 2.0 * s4 + 6.0 * g2 * s2 + 3.0 * g2 * g2};
}

inline constexpr double kRadSupportCap = 16777216.0;  // 2^24 support points

namespace detail {

struct Support {
  std::vector<double> value;
  std::vector<double> weight;
};

inline Support merge_sorted(std::vector<std::pair<double, double>> pts) {
  std::sort(pts.begin(), pts.end());
  double scale = 1.0;
  for (const auto& pt : pts) scale = std::max(scale, std::abs(pt.first));
  const double tol = 1e-12 * scale;
  Support s;
  for (const auto& [v, w] : pts) {
    if (!s.value.empty() && v - s.value.back() <= tol)
      s.weight.back() += w;
    else {
      s.value.push_back(v);
      s.weight.push_back(w);
    }
  }
  return s;
}

inline std::vector<double> binomial_half_weights(std::size_t k) {
  std::vector<double> w(k + 1);
  const double lk = std::lgamma(static_cast<double>(k) + 1.0) - static_cast<double>(k) * std::numbers::ln2;
  for (std::size_t j = 0; j <= k; ++j)
    w[j] = std::exp(lk - std::lgamma(static_cast<double>(j) + 1.0) - std::lgamma(static_cast<double>(k - j) + 1.0));
  if (k <= 50) {
    // exact in double: C(k, j) < 2^53
    double c = 1.0;
    const double scale = std::ldexp(1.0, -static_cast<int>(k));
    for (std::size_t j = 0; j <= k; ++j) {
      w[j] = c * scale;
      c = c * static_cast<double>(k - j) / static_cast<double>(j + 1);
    }
  }
  return w;
}

}  // namespace detail

// Exact law of the Rademacher part. Equal |a| are grouped into binomials,
// then groups are convolved with near-equal support points merged.
inline ScalarDistribution rademacher_distribution(const RadCoeffs& x) {
  std::vector<std::pair<double, std::size_t>> groups;
  for (double v : x.a) {
    const double m = std::abs(v);
    if (m == 0.0) continue;
    if (!groups.empty() && groups.back().first == m)
      ++groups.back().second;
    else
      groups.push_back({m, 1});
  }
  double size = 1.0;
  for (const auto& g : groups) size *= static_cast<double>(g.second + 1);
  if (size > kRadSupportCap)
    throw CapacityError("Rademacher support would exceed 2^24 points; add a Gaussian component or shorten a");
  detail::Support cur{{0.0}, {1.0}};
  for (const auto& [m, k] : groups) {
    const auto w = detail::binomial_half_weights(k);
    std::vector<std::pair<double, double>> pts;
    pts.reserve(cur.value.size() * (k + 1));
    for (std::size_t i = 0; i < cur.value.size(); ++i)
      for (std::size_t j = 0; j <= k; ++j) {
        const double wt = cur.weight[i] * w[j];
        if (wt == 0.0) continue;  // binomial tail below the double range
        pts.push_back({cur.value[i] + m * (2.0 * static_cast<double>(j) - static_cast<double>(k)), wt});
      }
    cur = detail::merge_sorted(std::move(pts));
  }
  std::vector<Atom> atoms;
  double total = 0.0;
  for (std::size_t i = 0; i < cur.value.size(); ++i) total += cur.weight[i];
  for (std::size_t i = 0; i < cur.value.size(); ++i) atoms.push_back({cur.value[i], cur.weight[i] / total});
  return ScalarDistribution(std::move(atoms));
}

// Right-continuous CDF of a finite law, evaluated by binary search.
class RadCdf {
 public:
  explicit RadCdf(const RadCoeffs& x) : sigma_(x.sigma), dist_(rademacher_distribution(x)) {
    double c = 0.0;
    for (const Atom& a : dist_.atoms()) {
      c += a.probability;
      cum_.push_back(c);
    }
  }

  double operator()(double t) const {
    const auto& at = dist_.atoms();
    if (sigma_ == 0.0) {
      auto it = std::upper_bound(at.begin(), at.end(), t, [](double v, const Atom& a) { return v < a.value; });
      if (it == at.begin()) return 0.0;
      return std::min(1.0, cum_[static_cast<std::size_t>(it - at.begin()) - 1]);
    }
    double s = 0.0;
    for (const Atom& a : at) s += a.probability * normal_cdf((t - a.value) / sigma_);
    return s;
  }

  // P(xi < t)
  double left_limit(double t) const {
    if (sigma_ > 0.0) return (*this)(t);
    const auto& at = dist_.atoms();
    auto it = std::lower_bound(at.begin(), at.end(), t, [](const Atom& a, double v) { return a.value < v; });
    if (it == at.begin()) return 0.0;
    return std::min(1.0, cum_[static_cast<std::size_t>(it - at.begin()) - 1]);
  }

  double sigma() const { return sigma_; }
  const ScalarDistribution& discrete_part() const { return dist_; }

 private:
  double sigma_;
  ScalarDistribution dist_;
  std::vector<double> cum_;
};

inline double cdf(const RadCoeffs& x, double t) { return RadCdf(x)(t); }

namespace detail {

// sup_t |F(t) - G(t)| for F, G each either a step function with the given
// jumps or continuous. Exact at jumps; continuous parts use a grid plus
// golden-section refinement.
template <class F, class FL, class G, class GL>
double kolmogorov_sup(F f, FL f_left, G g, GL g_left, const std::vector<double>& jumps, bool any_continuous,
                      double lo, double hi) {
  double best = 0.0;
  for (double s : jumps) {
    best = std::max(best, std::abs(f(s) - g(s)));
    best = std::max(best, std::abs(f_left(s) - g_left(s)));
  }
  if (!any_continuous) return best;
  auto d = [&](double t) { return std::abs(f(t) - g(t)); };
  const int n = 4000;
  std::vector<double> ts(n + 1), ds(n + 1);
  for (int i = 0; i <= n; ++i) {
    ts[i] = lo + (hi - lo) * i / n;
    ds[i] = d(ts[i]);
    best = std::max(best, ds[i]);
  }
  const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
  for (int i = 1; i < n; ++i) {
    if (ds[i] < ds[i - 1] || ds[i] < ds[i + 1]) continue;
    double a = ts[i - 1], b = ts[i + 1];
    double c = b - phi * (b - a), e = a + phi * (b - a);
    double dc = d(c), de = d(e);
    for (int it = 0; it < 80 && b - a > 1e-15 * std::max(1.0, std::abs(a)); ++it) {
      if (dc > de) {
        b = e;
        e = c;
        de = dc;
        c = b - phi * (b - a);
        dc = d(c);
      } else {
        a = c;
        c = e;
        dc = de;
        e = a + phi * (b - a);
        de = d(e);
      }
    }
    best = std::max({best, dc, de});
  }
  return best;
}

}  // namespace detail

// Kolmogorov distance to N(0, m2).
inline double gaussian_distance(const RadCoeffs& x) {
  const double m2 = moments(x).m2;
  if (m2 == 0.0) throw InputError("gaussian_distance needs a nondegenerate law (m2 > 0)");
  const double s = std::sqrt(m2);
  const RadCdf F(x);
  auto G = [s](double t) { return normal_cdf(t / s); };
  std::vector<double> jumps;
  double reach = 0.0;
  for (const Atom& a : F.discrete_part().atoms()) {
    if (x.sigma == 0.0) jumps.push_back(a.value);
    reach = std::max(reach, std::abs(a.value));
  }
  const double span = reach + 10.0 * s;
  return detail::kolmogorov_sup([&](double t) { return F(t); }, [&](double t) { return F.left_limit(t); }, G, G, jumps,
                                x.sigma > 0.0, -span, span);
}

inline double kolmogorov_distance(const RadCoeffs& x, const RadCoeffs& y) {
  const RadCdf F(x), G(y);
  std::vector<double> jumps;
  double reach = 0.0;
  for (const Atom& a : F.discrete_part().atoms()) {
    if (x.sigma == 0.0) jumps.push_back(a.value);
    reach = std::max(reach, std::abs(a.value));
  }
  for (const Atom& a : G.discrete_part().atoms()) {
    if (y.sigma == 0.0) jumps.push_back(a.value);
    reach = std::max(reach, std::abs(a.value));
  }
  const double span = reach + 10.0 * std::max(x.sigma, y.sigma) + 1.0;
  return detail::kolmogorov_sup([&](double t) { return F(t); }, [&](double t) { return F.left_limit(t); },
                                [&](double t) { return G(t); }, [&](double t) { return G.left_limit(t); }, jumps,
                                x.sigma > 0.0 || y.sigma > 0.0, -span, span);
}

// E|mu + sigma Z|^p by Gauss-Kronrod on each side of the kink.
inline double shifted_gaussian_abs_moment(double mu, double sigma, double p) {
  if (sigma == 0.0) return std::pow(std::abs(mu), p);
  using boost::math::quadrature::gauss_kronrod;
  auto f = [=](double z) {
    return std::pow(std::abs(mu + sigma * z), p) * std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
  };
  const double lo = -12.0, hi = 12.0;
  const double kink = -mu / sigma;
  if (kink <= lo || kink >= hi) return gauss_kronrod<double, 61>::integrate(f, lo, hi, 15, 1e-14);
  return gauss_kronrod<double, 61>::integrate(f, lo, kink, 15, 1e-14) +
         gauss_kronrod<double, 61>::integrate(f, kink, hi, 15, 1e-14);
}

inline double abs_moment(const RadCoeffs& x, double p) {
  require(p > 0.0 && std::isfinite(p), "moment order must satisfy 0 < p < inf");
  const ScalarDistribution d = rademacher_distribution(x);
  double s = 0.0;
  for (const Atom& a : d.atoms()) s += a.probability * shifted_gaussian_abs_moment(a.value, x.sigma, p);
  return s;
}

// Kolmogorov distance plus the gap in p-th absolute moments.
inline double dp_distance(const RadCoeffs& x, const RadCoeffs& y, double p) {
  require(p > 0.0, "dp_distance needs p > 0");
  return kolmogorov_distance(x, y) + std::abs(abs_moment(x, p) - abs_moment(y, p));
}

struct LimitReport {
  bool converged = false;
  RadCoeffs limit;
  std::vector<double> position_spread;
  double residual_spread = 0.0;
  std::string diagnostic;
};

// Looks at the last half (at least two) of the sequence. A position converges
// if its values spread by at most tol there; positions whose tail magnitude is
// at most tol converge to 0. sigma^2 is the limit of |b_j - a0|^2 + sigma_j^2,
// which must also stabilise within tol.
inline LimitReport extract_limit(const std::vector<RadCoeffs>& seq, double tol = 1e-3) {
  require(!seq.empty(), "extract_limit needs a nonempty sequence");
  require(tol > 0.0, "tolerance must be positive");
  const std::size_t n = seq.size();
  const std::size_t first = n >= 4 ? n - n / 2 : 0;
  std::size_t width = 0;
  for (std::size_t j = first; j < n; ++j) width = std::max(width, seq[j].a.size());
  LimitReport rep;
  rep.position_spread.assign(width, 0.0);
  auto coef = [&](std::size_t j, std::size_t i) { return i < seq[j].a.size() ? seq[j].a[i] : 0.0; };
  std::vector<double> a0;
  bool ok = true;
  for (std::size_t i = 0; i < width; ++i) {
    double lo = coef(first, i), hi = lo;
    for (std::size_t j = first; j < n; ++j) {
      lo = std::min(lo, coef(j, i));
      hi = std::max(hi, coef(j, i));
    }
    rep.position_spread[i] = hi - lo;
    if (hi - lo > tol) {
      ok = false;
      if (rep.diagnostic.empty()) rep.diagnostic = "position " + std::to_string(i) + " does not stabilise";
      continue;
    }
    const double last = coef(n - 1, i);
    if (std::abs(last) > tol) a0.push_back(last);
  }
  if (!ok) return rep;
  auto residual = [&](std::size_t j) {
    double s = seq[j].sigma * seq[j].sigma;
    for (std::size_t i = 0; i < std::max(a0.size(), seq[j].a.size()); ++i) {
      const double d = coef(j, i) - (i < a0.size() ? a0[i] : 0.0);
      s += d * d;
    }
    return s;
  };
  double rlo = residual(first), rhi = rlo;
  for (std::size_t j = first; j < n; ++j) {
    rlo = std::min(rlo, residual(j));
    rhi = std::max(rhi, residual(j));
  }
  rep.residual_spread = rhi - rlo;
  if (rhi - rlo > tol) {
    rep.diagnostic = "residual l2 mass does not stabilise";
    return rep;
  }
  rep.converged = true;
  rep.limit = RadCoeffs(a0, std::sqrt(std::max(0.0, residual(n - 1))));
  rep.diagnostic = "ok";
  return rep;
}

enum class BaseLaw { Rademacher, Gaussian };

struct ChaosTerm {
  std::vector<std::size_t> indices;  // 1-based, strictly increasing
  double value = 0.0;
};

struct ChaosLaw {
  std::size_t L = 1;
  std::size_t K = 1;
  std::vector<ChaosTerm> coeffs;
  BaseLaw base = BaseLaw::Rademacher;

  ChaosLaw() = default;
  ChaosLaw(std::size_t order, std::size_t count, std::vector<ChaosTerm> terms, BaseLaw b = BaseLaw::Rademacher)
      : L(order), K(count), coeffs(std::move(terms)), base(b) {
    require(L >= 1, "chaos order must be at least 1");
    require(K >= L, "chaos needs K >= L");
    for (const auto& t : coeffs) {
      require(t.indices.size() == L, "every chaos tuple must have exactly L indices");
      for (std::size_t i = 0; i < L; ++i) {
        require(t.indices[i] >= 1 && t.indices[i] <= K, "chaos indices must lie in 1..K");
        if (i > 0) require(t.indices[i] > t.indices[i - 1], "chaos tuple indices must be strictly increasing");
      }
      require(std::isfinite(t.value), "chaos coefficients must be finite");
    }
  }

  double draw(CounterRng& rng, std::vector<double>& base_vars) const {
    base_vars.resize(K);
    for (double& v : base_vars) v = base == BaseLaw::Rademacher ? static_cast<double>(rng.sign()) : rng.normal();
    double s = 0.0;
    for (const auto& t : coeffs) {
      double prod = t.value;
      for (std::size_t i : t.indices) prod *= base_vars[i - 1];
      s += prod;
    }
    return s;
  }
};

inline std::vector<double> chaos_sample(const ChaosLaw& law, std::uint64_t count, std::uint64_t seed) {
  require(count >= 1, "chaos_sample needs count >= 1");
  std::vector<double> out(count);
  parallel_chunks(count, [&](std::uint64_t b, std::uint64_t e) {
    std::vector<double> base;
    for (std::uint64_t i = b; i < e; ++i) {
      CounterRng rng(seed, i, 0xc4a);
      out[i] = law.draw(rng, base);
    }
  });
  return out;
}

// Ratio (E A / E B)^{1/p} where A = ||sum phi_n v_{n-1}(alpha)||^p with
// phi ~ mu, B = ||sum psi'_n v_{n-1}(alpha)||^p with psi' ~ nu independent,
// and alpha_n = 1[phi_n > 0]. Standard error by the delta method.
template <class Field>
Estimate chaos_decoupling_ratio(const Field& field, const Space& space, double p, const ChaosLaw& mu,
                                const ChaosLaw& nu, std::uint64_t samples, std::uint64_t seed) {
  require(samples >= 1000, "chaos_decoupling_ratio needs at least 1000 samples");
  require(p > 0.0 && std::isfinite(p), "p must satisfy 0 < p < inf");
  require(field.dim() == space.dim(), "field dimension does not match space");
  const std::size_t N = field.depth(), K = field.dim();
  require(N <= 63, "depth must not exceed 63");
  std::vector<double> A(samples), B(samples);
  parallel_chunks(samples, [&](std::uint64_t b, std::uint64_t e) {
    std::vector<double> base, phi(N), psi(N), tmp(K), sa(K), sb(K);
    for (std::uint64_t i = b; i < e; ++i) {
      CounterRng rc(seed, i, 0xc0);
      CounterRng rd(seed, i, 0xd0);
      std::uint64_t alpha = 0;
      for (std::size_t n = 0; n < N; ++n) {
        phi[n] = mu.draw(rc, base);
        psi[n] = nu.draw(rd, base);
        if (phi[n] > 0.0) alpha |= std::uint64_t{1} << n;
      }
      std::fill(sa.begin(), sa.end(), 0.0);
      std::fill(sb.begin(), sb.end(), 0.0);
      for (std::size_t n = 1; n <= N; ++n) {
        field.vector_into(n - 1, alpha & prefix_mask(n - 1), tmp.data());
        for (std::size_t k = 0; k < K; ++k) {
          sa[k] += phi[n - 1] * tmp[k];
          sb[k] += psi[n - 1] * tmp[k];
        }
      }
      A[i] = detail::power_of(space.norm_unchecked(sa.data()), p);
      B[i] = detail::power_of(space.norm_unchecked(sb.data()), p);
    }
  });
  const double n = static_cast<double>(samples);
  const double ma = pairwise_sum(A) / n, mb = pairwise_sum(B) / n;
  if (mb == 0.0) throw DegenerateInputError("decoupled side has zero moment");
  std::vector<double> cross(samples);
  for (std::uint64_t i = 0; i < samples; ++i) cross[i] = (A[i] - ma) * (B[i] - mb);
  const double va = pairwise_sum_of(A, [ma](double v) { return (v - ma) * (v - ma); }) / (n - 1);
  const double vb = pairwise_sum_of(B, [mb](double v) { return (v - mb) * (v - mb); }) / (n - 1);
  const double cab = pairwise_sum(cross) / (n - 1);
  const double r = ma / mb;
  const double var_r = std::max(0.0, (va - 2.0 * r * cab + r * r * vb) / (mb * mb) / n);
  const double est = std::pow(r, 1.0 / p);
  return {est, r > 0.0 ? est / (p * r) * std::sqrt(var_r) : 0.0};
}

inline nlohmann::json rad_to_json(const RadCoeffs& x) { return {{"a", x.a}, {"sigma", x.sigma}}; }

inline RadCoeffs rad_from_json(const nlohmann::json& j) {
  require(j.is_object(), "law descriptor must be a JSON object");
  return RadCoeffs(j.value("a", std::vector<double>{}), j.value("sigma", 0.0));
}

inline nlohmann::json chaos_to_json(const ChaosLaw& law) {
  nlohmann::json c = nlohmann::json::array();
  for (const auto& t : law.coeffs) c.push_back({t.indices, t.value});
  return {{"L", law.L},
          {"K", law.K},
          {"coeffs", c},
          {"base", law.base == BaseLaw::Rademacher ? "rademacher" : "gaussian"}};
}

inline ChaosLaw chaos_from_json(const nlohmann::json& j) {
  require(j.is_object() && j.contains("L") && j.contains("K") && j.contains("coeffs"),
          "chaos descriptor needs L, K and coeffs");
  std::vector<ChaosTerm> terms;
  for (const auto& c : j.at("coeffs")) {
    require(c.is_array() && c.size() == 2, "chaos coefficient entries are [[indices], value]");
    terms.push_back({c[0].get<std::vector<std::size_t>>(), c[1].get<double>()});
  }
  const std::string base = j.value("base", std::string("rademacher"));
  require(base == "rademacher" || base == "gaussian", "chaos base must be rademacher or gaussian");
  return ChaosLaw(j.at("L").get<std::size_t>(), j.at("K").get<std::size_t>(), std::move(terms),
                  base == "rademacher" ? BaseLaw::Rademacher : BaseLaw::Gaussian);
}

}  // namespace decoupling

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include <nlohmann/json.hpp>

#include "decoupling/dyadic.hpp"
#include "decoupling/errors.hpp"
#include "decoupling/parallel.hpp"
#include "decoupling/space.hpp"

namespace decoupling {

inline double extrapolation_constant(double p, double q, double Dp) {
  require(p > 0.0 && q > 0.0 && std::isfinite(p) && std::isfinite(q), "p and q must be positive and finite");
  require(Dp >= 1.0, "a decoupling constant is at least 1");
  return 3.0 * std::exp2(3.0 / q + 2.0 + 1.0 / p + q / p) * Dp;
}

struct GoodLambdaConfig {
  double lambda = 1.0;
  double beta = 2.0;
  double delta = 0.1;
  double p = 2.0;

  void validate() const {
    require(lambda > 0.0 && std::isfinite(lambda), "lambda must be positive");
    require(delta > 0.0, "delta must be positive");
    require(beta > 1.0 + delta, "beta must exceed 1 + delta");
    require(p > 0.0 && std::isfinite(p), "p must satisfy 0 < p < inf");
  }
};

struct GoodLambdaReport {
  GoodLambdaConfig cfg;
  double lhs = 0.0;            // P(f* > beta lambda, g* v v* <= delta lambda)
  double stopped_event = 0.0;  // P(nu <= N, sigma = N+1)
  double tail_bound = 0.0;     // P(||mu f^{nu^sigma}|| >= (beta - delta - 1) lambda)
  double chebyshev = 0.0;      // E||mu f^{nu^sigma}||^p / ((beta - delta - 1) lambda)^p
  double stopped_f = 0.0;      // E||mu f^{nu^sigma}||^p
  double stopped_g = 0.0;      // E||mu g^{nu^sigma}||^p
  double stopped_ratio = 0.0;
  double p_fstar = 0.0;        // P(f* > lambda)
  double rhs = 0.0;
  double slack = 0.0;
  bool vacuous = false;

  nlohmann::json to_json() const {
    auto num = [](double x) -> nlohmann::json {
      if (std::isinf(x)) return "inf";
      return x;
    };
    return {{"lambda", cfg.lambda},   {"beta", cfg.beta},
            {"delta", cfg.delta},     {"p", cfg.p},
            {"lhs", lhs},             {"rhs", num(rhs)},
            {"slack", num(slack)},    {"stopped_ratio", num(stopped_ratio)},
            {"vacuous", vacuous},     {"chain",
                                       {{"stopped_event", stopped_event},
                                        {"tail_bound", tail_bound},
                                        {"chebyshev", chebyshev},
                                        {"p_fstar", p_fstar}}}};
  }
};

// Enumerates all (r, r') with f_n = sum_{j<=n} r_j v_{j-1}, g_n the same with
// r', and v_N = 0. mu, nu are the first n with ||f_n|| > lambda, > beta lambda;
// sigma the first n in 0..N with max(||g_n||, ||v_n||) > delta lambda; min of
// the empty set is N+1. Stopped transforms sum over mu < j <= nu ^ sigma.
inline GoodLambdaReport good_lambda_check(const PredictableTree& tree, const Space& space, const GoodLambdaConfig& cfg,
                                          unsigned cap_bits = kDefaultExactBits) {
  cfg.validate();
  if (tree.dim() != space.dim()) throw InputError("tree dimension does not match space");
  const std::size_t N = tree.depth(), K = tree.dim();
  if (2 * N > cap_bits) throw CapacityError("good-lambda enumeration above the exact cap");
  const std::uint64_t count = std::uint64_t{1} << (2 * N);
  const double lam = cfg.lambda, p = cfg.p;
  const double gap = cfg.beta - cfg.delta - 1.0;

  // per state: lhs indicator, stopped event, tail indicator, ||sf||^p, ||sg||^p, 1[f* > lambda]
  std::vector<double> c_lhs(count), c_ev(count), c_tail(count), c_sf(count), c_sg(count), c_fs(count);
  parallel_chunks(count, [&](std::uint64_t b, std::uint64_t e) {
    std::vector<double> f(K), g(K), sf(K), sg(K);
    std::vector<double> fn(N + 1), gn(N + 1), vn(N + 1);
    for (std::uint64_t s = b; s < e; ++s) {
      const std::uint64_t r = s >> N, rp = s & prefix_mask(N);
      std::fill(f.begin(), f.end(), 0.0);
      std::fill(g.begin(), g.end(), 0.0);
      fn[0] = gn[0] = 0.0;
      for (std::size_t n = 1; n <= N; ++n) {
        const double* v = tree.at(n - 1, r & prefix_mask(n - 1));
        vn[n - 1] = space.norm_unchecked(v);
        const double a = (r >> (n - 1)) & 1u ? 1.0 : -1.0;
        const double c = (rp >> (n - 1)) & 1u ? 1.0 : -1.0;
        for (std::size_t k = 0; k < K; ++k) {
          f[k] += a * v[k];
          g[k] += c * v[k];
        }
        fn[n] = space.norm_unchecked(f.data());
        gn[n] = space.norm_unchecked(g.data());
      }
      vn[N] = 0.0;
      std::size_t mu = N + 1, nu = N + 1, sigma = N + 1;
      double fstar = 0.0, gstar = 0.0, vstar = 0.0;
      for (std::size_t n = 1; n <= N; ++n) {
        if (mu == N + 1 && fn[n] > lam) mu = n;
        if (nu == N + 1 && fn[n] > cfg.beta * lam) nu = n;
        fstar = std::max(fstar, fn[n]);
        gstar = std::max(gstar, gn[n]);
      }
      for (std::size_t n = 0; n <= N; ++n) {
        if (std::max(gn[n], vn[n]) > cfg.delta * lam) {
          sigma = n;
          break;
        }
      }
      for (std::size_t n = 0; n < N; ++n) vstar = std::max(vstar, vn[n]);
      const std::size_t stop = std::min(nu, sigma);
      std::fill(sf.begin(), sf.end(), 0.0);
      std::fill(sg.begin(), sg.end(), 0.0);
      for (std::size_t j = 2; j <= N; ++j) {
        if (!(mu < j && j <= stop)) continue;
        const double* v = tree.at(j - 1, r & prefix_mask(j - 1));
        const double a = (r >> (j - 1)) & 1u ? 1.0 : -1.0;
        const double c = (rp >> (j - 1)) & 1u ? 1.0 : -1.0;
        for (std::size_t k = 0; k < K; ++k) {
          sf[k] += a * v[k];
          sg[k] += c * v[k];
        }
      }
      const double nsf = space.norm_unchecked(sf.data()), nsg = space.norm_unchecked(sg.data());
      c_lhs[s] = (fstar > cfg.beta * lam && std::max(gstar, vstar) <= cfg.delta * lam) ? 1.0 : 0.0;
      c_ev[s] = (nu <= N && sigma == N + 1) ? 1.0 : 0.0;
      c_tail[s] = nsf >= gap * lam ? 1.0 : 0.0;
      c_sf[s] = std::pow(nsf, p);
      c_sg[s] = std::pow(nsg, p);
      c_fs[s] = fstar > lam ? 1.0 : 0.0;
    }
  });
  const double w = 1.0 / static_cast<double>(count);
  GoodLambdaReport rep;
  rep.cfg = cfg;
  rep.lhs = pairwise_sum(c_lhs) * w;
  rep.stopped_event = pairwise_sum(c_ev) * w;
  rep.tail_bound = pairwise_sum(c_tail) * w;
  rep.stopped_f = pairwise_sum(c_sf) * w;
  rep.stopped_g = pairwise_sum(c_sg) * w;
  rep.p_fstar = pairwise_sum(c_fs) * w;
  rep.chebyshev = rep.stopped_f / std::pow(gap * lam, p);
  if (rep.stopped_g == 0.0) {
    if (rep.stopped_f > 0.0) {
      rep.vacuous = true;
      rep.stopped_ratio = std::numeric_limits<double>::infinity();
      rep.rhs = std::numeric_limits<double>::infinity();
      rep.slack = std::numeric_limits<double>::infinity();
      return rep;
    }
    rep.stopped_ratio = 0.0;
  } else {
    rep.stopped_ratio = std::pow(rep.stopped_f / rep.stopped_g, 1.0 / p);
  }
  rep.rhs = std::pow(3.0 * cfg.delta * rep.stopped_ratio, p) * std::pow(gap, -p) * rep.p_fstar;
  rep.slack = rep.rhs - rep.lhs;
  return rep;
}

}  // namespace decoupling

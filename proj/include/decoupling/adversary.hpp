#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "decoupling/dyadic.hpp"
#include "decoupling/errors.hpp"
#include "decoupling/parallel.hpp"
#include "decoupling/rng.hpp"
#include "decoupling/space.hpp"

namespace decoupling {

// Coordinates e in {-1,1}^N are indexed by c with bit m-1 of c set iff e_m = +1.
// v_{n-1}(alpha)(e) = e_n * 1[e_1..e_{n-1} = alpha_1..alpha_{n-1}].
class WitnessField {
 public:
  explicit WitnessField(std::size_t depth) : depth_(depth) {
    require(depth >= 1 && depth <= 26, "witness depth must be in 1..26");
  }
  std::size_t depth() const { return depth_; }
  std::size_t dim() const { return std::size_t{1} << depth_; }

  void vector_into(std::size_t level, std::uint64_t prefix, double* out) const {
    const std::uint64_t mask = prefix_mask(level);
    for (std::uint64_t c = 0; c < dim(); ++c)
      out[c] = (c & mask) == prefix ? ((c >> level) & 1u ? 1.0 : -1.0) : 0.0;
  }

 private:
  std::size_t depth_;
};

inline PredictableTree linfty_witness(std::size_t N) {
  WitnessField field(N);
  PredictableTree t(N, field.dim());
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t i = 0; i < t.level_size(n); ++i) field.vector_into(n, i, t.at(n, i));
  return t;
}

// With eps_m = alpha_m r'_m and partial sums S_m, the decoupled sup norm is
// max(|S_N|, max_m |2 S_{m-1} - S_m|); the law of eps does not depend on alpha.
inline double witness_decoupled_moment(std::size_t N, double p) {
  require(N >= 1 && N <= 24, "witness reduction supports 1 <= N <= 24");
  require(p > 0.0 && std::isfinite(p), "p must satisfy 0 < p < inf");
  const std::uint64_t count = std::uint64_t{1} << N;
  std::vector<double> values(count);
  parallel_chunks(count, [&](std::uint64_t b, std::uint64_t e) {
    for (std::uint64_t pattern = b; pattern < e; ++pattern) {
      int s = 0, m = 0;
      for (std::size_t j = 0; j < N; ++j) {
        const int step = (pattern >> j) & 1u ? 1 : -1;
        m = std::max(m, std::abs(2 * s - (s + step)));
        s += step;
      }
      m = std::max(m, std::abs(s));
      values[pattern] = detail::power_of(static_cast<double>(m), p);
    }
  });
  return pairwise_sum(values) / static_cast<double>(count);
}

inline double witness_decoupled_norm(std::size_t N, double p) {
  return std::pow(witness_decoupled_moment(N, p), 1.0 / p);
}

struct WitnessReport {
  std::size_t N = 0;
  std::size_t K = 0;
  double p = 2.0;
  double coupled_lp = 0.0;
  double decoupled_lp = 0.0;
  double ratio = 0.0;
  std::string method;
  std::uint64_t seed = 0;

  static std::string csv_header() { return "N,K,p,coupled,decoupled,ratio,method,seed"; }
  std::string csv_row() const {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%zu,%zu,%.17g,%.17g,%.17g,%.17g,%s,%llu", N, K, p, coupled_lp, decoupled_lp, ratio,
                  method.c_str(), static_cast<unsigned long long>(seed));
    return buf;
  }
};

// The coupled norm of the witness is N on every path, so only the decoupled
// side needs work. method "exact" runs the 4^N enumeration, "reduced" the walk.
inline WitnessReport witness_report(std::size_t N, double p, const std::string& method) {
  WitnessReport r;
  r.N = N;
  r.K = std::size_t{1} << N;
  r.p = p;
  r.method = method;
  if (method == "exact") {
    const PredictableTree t = linfty_witness(N);
    const auto parts = decoupling_ratio_parts(t, Space::linf(r.K), p);
    r.coupled_lp = parts.coupled_lp;
    r.decoupled_lp = parts.decoupled_lp;
  } else if (method == "reduced") {
    r.coupled_lp = static_cast<double>(N);
    r.decoupled_lp = witness_decoupled_norm(N, p);
  } else {
    throw InputError("witness method must be exact or reduced");
  }
  r.ratio = r.coupled_lp / r.decoupled_lp;
  return r;
}

struct SearchOptions {
  std::size_t starts = 4;
  bool witness_seeded = true;
  double step = 0.3;
};

struct SearchResult {
  PredictableTree best;
  double ratio = 0.0;
  std::size_t evaluations = 0;
  std::size_t start_index = 0;
};

namespace detail {

inline void negate_subtree(PredictableTree& t, std::size_t level, std::size_t index) {
  for (std::size_t m = level; m < t.depth(); ++m)
    for (std::size_t i = 0; i < t.level_size(m); ++i)
      if ((i & prefix_mask(level)) == index)
        for (std::size_t k = 0; k < t.dim(); ++k) t.at(m, i)[k] = -t.at(m, i)[k];
}

inline double safe_ratio(const PredictableTree& t, const Space& space, double p) {
  try {
    return decoupling_ratio(t, space, p);
  } catch (const DegenerateInputError&) {
    return 0.0;
  }
}

}  // namespace detail

// Multi-start hill climbing on the exact ratio. Start s uses RNG stream s, the
// budget is split evenly, and ties go to the lowest start index.
inline SearchResult search_ratio(const Space& space, std::size_t N, double p, std::size_t budget, std::uint64_t seed,
                                 const SearchOptions& opt = {}) {
  require(N >= 1, "search depth must be at least 1");
  require(opt.starts >= 1, "search needs at least one start");
  require(budget >= opt.starts, "budget must allow one evaluation per start");
  if (2 * N > kDefaultExactBits) throw CapacityError("search evaluates exact ratios; 2N must not exceed the cap");
  const std::size_t K = space.dim();
  const bool witness_fits = K == (std::size_t{1} << N);
  const std::size_t per_start = budget / opt.starts;

  std::vector<SearchResult> results;
  results.reserve(opt.starts);
  for (std::size_t s = 0; s < opt.starts; ++s) results.push_back({PredictableTree(N, K), 0.0, 0, s});

  // Starts are independent; each worker chunk is one start.
  parallel_chunks(
      opt.starts,
      [&](std::uint64_t b, std::uint64_t e) {
        for (std::uint64_t s = b; s < e; ++s) {
          CounterRng rng(seed, s, 0x5ea);
          PredictableTree cur = (opt.witness_seeded && witness_fits && s == 0) ? linfty_witness(N)
                                                                               : random_tree(N, K, seed ^ (0x9e37ull * (s + 1)));
          double cur_ratio = detail::safe_ratio(cur, space, p);
          std::size_t evals = 1;
          const PredictableTree witness = witness_fits ? linfty_witness(N) : PredictableTree(N, K);
          while (evals < per_start) {
            PredictableTree cand = cur;
            const std::uint32_t move = rng.next_u32() % (witness_fits ? 3u : 2u);
            const std::size_t level = rng.next_u32() % N;
            const std::size_t index = rng.next_u32() % cand.level_size(level);
            if (move == 0) {
              const std::size_t k = rng.next_u32() % K;
              cand.at(level, index)[k] += opt.step * rng.normal();
            } else if (move == 1) {
              detail::negate_subtree(cand, level, index);
            } else {
              for (std::size_t i = 0; i < cand.level_size(level); ++i)
                std::copy(witness.at(level, i), witness.at(level, i) + K, cand.at(level, i));
            }
            const double r = detail::safe_ratio(cand, space, p);
            ++evals;
            if (r > cur_ratio) {
              cur = std::move(cand);
              cur_ratio = r;
            }
          }
          results[s] = {std::move(cur), cur_ratio, evals, static_cast<std::size_t>(s)};
        }
      },
      1);

  std::size_t best = 0, total = 0;
  for (std::size_t s = 0; s < results.size(); ++s) {
    total += results[s].evaluations;
    if (results[s].ratio > results[best].ratio) best = s;
  }
  SearchResult out = std::move(results[best]);
  out.evaluations = total;
  return out;
}

}  // namespace decoupling

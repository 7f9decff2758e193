#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "decoupling/dyadic.hpp"
#include "decoupling/errors.hpp"
#include "decoupling/parallel.hpp"
#include "decoupling/rng.hpp"
#include "decoupling/space.hpp"

namespace decoupling {

class TimeGrid {
 public:
  explicit TimeGrid(std::vector<double> t) : t_(std::move(t)) {
    require(t_.size() >= 2, "time grid needs at least t_0 and t_1");
    require(t_[0] == 0.0, "time grid must start at 0");
    for (std::size_t n = 1; n < t_.size(); ++n) {
      require(std::isfinite(t_[n]), "time grid points must be finite");
      require(t_[n] > t_[n - 1], "time grid must be strictly increasing");
    }
  }
  static TimeGrid uniform(std::size_t steps, double horizon = 1.0) {
    require(steps >= 1, "grid needs at least one step");
    std::vector<double> t(steps + 1);
    for (std::size_t n = 0; n <= steps; ++n) t[n] = horizon * static_cast<double>(n) / static_cast<double>(steps);
    return TimeGrid(std::move(t));
  }

  std::size_t steps() const { return t_.size() - 1; }
  double dt(std::size_t n) const { return t_[n] - t_[n - 1]; }  // n = 1..N
  const std::vector<double>& points() const { return t_; }

 private:
  std::vector<double> t_;
};

// Brownian increments dW_1..dW_N and auxiliary signs; aux_counts[m] signs are
// revealed at time t_m (m = 0..N-1).
struct Scenario {
  std::vector<double> dW;
  std::vector<int> aux;
};

inline void draw_scenario(const TimeGrid& grid, const std::vector<std::size_t>& aux_counts, std::uint64_t seed,
                          std::uint64_t index, Scenario& out) {
  CounterRng rng(seed, index);
  const std::size_t N = grid.steps();
  out.dW.resize(N);
  for (std::size_t n = 1; n <= N; ++n) out.dW[n - 1] = std::sqrt(grid.dt(n)) * rng.normal();
  std::size_t total = 0;
  for (std::size_t c : aux_counts) total += c;
  out.aux.resize(total);
  for (int& s : out.aux) s = rng.sign();
}

struct DriverBatch {
  std::size_t steps = 0;
  std::size_t aux_total = 0;
  std::vector<double> increments;  // paths x steps
  std::vector<int> aux;            // paths x aux_total
};

inline std::vector<std::size_t> checked_aux(const TimeGrid& grid, std::vector<std::size_t> aux_counts) {
  if (aux_counts.empty()) aux_counts.assign(grid.steps(), 0);
  require(aux_counts.size() == grid.steps(), "need one enlargement count per step");
  return aux_counts;
}

inline DriverBatch simulate_driver(const TimeGrid& grid, std::vector<std::size_t> aux_counts, std::uint64_t paths,
                                   std::uint64_t seed) {
  require(paths >= 1, "simulate_driver needs paths >= 1");
  aux_counts = checked_aux(grid, std::move(aux_counts));
  DriverBatch b;
  b.steps = grid.steps();
  for (std::size_t c : aux_counts) b.aux_total += c;
  b.increments.resize(paths * b.steps);
  b.aux.resize(paths * b.aux_total);
  parallel_chunks(paths, [&](std::uint64_t lo, std::uint64_t hi) {
    Scenario sc;
    for (std::uint64_t i = lo; i < hi; ++i) {
      draw_scenario(grid, aux_counts, seed, i, sc);
      std::copy(sc.dW.begin(), sc.dW.end(), b.increments.begin() + static_cast<std::ptrdiff_t>(i * b.steps));
      std::copy(sc.aux.begin(), sc.aux.end(), b.aux.begin() + static_cast<std::ptrdiff_t>(i * b.aux_total));
    }
  });
  return b;
}

// v_{n-1} is read from the information bits available at t_{n-1}, ordered as
// [aux at t_0] then, for m = 1..n-1, [sign dW_m, aux at t_m], little endian.
class SimpleProcess {
 public:
  SimpleProcess(TimeGrid grid, std::vector<std::size_t> aux_counts, std::size_t dim)
      : grid_(std::move(grid)), aux_(checked_aux(grid_, std::move(aux_counts))), dim_(dim) {
    require(dim >= 1, "process dimension must be positive");
    std::size_t total = 0;
    for (std::size_t n = 0; n < grid_.steps(); ++n) {
      const std::size_t b = info_bits(n);
      total += (std::size_t{1} << b) * dim;
      if (b > 24 || total > kMaxTreeEntries) throw CapacityError("simple process table too large");
      values_.emplace_back((std::size_t{1} << b) * dim, 0.0);
    }
  }

  // A tree over increment signs; auxiliary signs are ignored.
  static SimpleProcess from_tree(const TimeGrid& grid, const PredictableTree& tree,
                                 std::vector<std::size_t> aux_counts = {}) {
    require(tree.depth() == grid.steps(), "tree depth must equal the number of grid steps");
    SimpleProcess h(grid, std::move(aux_counts), tree.dim());
    for (std::size_t n = 0; n < h.steps(); ++n)
      for (std::uint64_t idx = 0; idx < (std::uint64_t{1} << h.info_bits(n)); ++idx) {
        const double* src = tree.at(n, h.sign_prefix(n, idx));
        std::copy(src, src + h.dim_, h.at(n, idx));
      }
    return h;
  }

  std::size_t steps() const { return grid_.steps(); }
  std::size_t dim() const { return dim_; }
  const TimeGrid& grid() const { return grid_; }
  const std::vector<std::size_t>& aux_counts() const { return aux_; }

  // number of information bits v_level depends on
  std::size_t info_bits(std::size_t level) const {
    std::size_t b = level;
    for (std::size_t m = 0; m <= level; ++m) b += aux_[m];
    return b;
  }

  const double* at(std::size_t level, std::uint64_t idx) const { return values_[level].data() + idx * dim_; }
  double* at(std::size_t level, std::uint64_t idx) { return values_[level].data() + idx * dim_; }

  std::uint64_t info_index(std::size_t level, const Scenario& sc) const {
    std::uint64_t idx = 0;
    std::size_t bit = 0, a = 0;
    auto push = [&](bool on) {
      if (on) idx |= std::uint64_t{1} << bit;
      ++bit;
    };
    for (std::size_t c = 0; c < aux_[0]; ++c) push(sc.aux[a++] > 0);
    for (std::size_t m = 1; m <= level; ++m) {
      push(sc.dW[m - 1] > 0.0);
      for (std::size_t c = 0; c < aux_[m]; ++c) push(sc.aux[a++] > 0);
    }
    return idx;
  }

  // Extracts the increment-sign bits of an information index as a tree index.
  std::uint64_t sign_prefix(std::size_t level, std::uint64_t idx) const {
    std::uint64_t out = 0;
    std::size_t pos = aux_[0];
    for (std::size_t m = 1; m <= level; ++m) {
      if ((idx >> pos) & 1u) out |= std::uint64_t{1} << (m - 1);
      pos += 1 + aux_[m];
    }
    return out;
  }

  void check_scenario(const Scenario& sc) const {
    std::size_t total = 0;
    for (std::size_t c : aux_) total += c;
    if (sc.dW.size() != steps() || sc.aux.size() != total) throw InputError("scenario does not match the process grid");
  }

  SimpleProcess scaled(double alpha) const {
    SimpleProcess h = *this;
    for (auto& l : h.values_)
      for (double& v : l) v *= alpha;
    return h;
  }

  bool is_zero() const {
    for (const auto& l : values_)
      for (double v : l)
        if (v != 0.0) return false;
    return true;
  }

 private:
  TimeGrid grid_;
  std::vector<std::size_t> aux_;
  std::size_t dim_;
  std::vector<std::vector<double>> values_;
};

inline Vector integrate(const SimpleProcess& H, const Scenario& sc) {
  H.check_scenario(sc);
  Vector out(H.dim(), 0.0);
  for (std::size_t n = 1; n <= H.steps(); ++n) {
    const double* v = H.at(n - 1, H.info_index(n - 1, sc));
    for (std::size_t k = 0; k < H.dim(); ++k) out[k] += v[k] * sc.dW[n - 1];
  }
  return out;
}

struct GammaOperator {
  std::vector<double> weights;
  std::vector<Vector> columns;

  GammaOperator(std::vector<double> w, std::vector<Vector> c) : weights(std::move(w)), columns(std::move(c)) {
    require(!columns.empty(), "gamma operator needs at least one column");
    require(weights.size() == columns.size(), "one weight per column");
    for (double x : weights) require(x > 0.0 && std::isfinite(x), "column weights must be positive");
    for (const auto& c : columns) require(c.size() == columns[0].size(), "columns must share one dimension");
  }
  std::size_t dim() const { return columns[0].size(); }
};

struct GammaResult {
  double value = 0.0;
  double std_error = 0.0;
  bool exact = false;
};

// Hilbert-Schmidt (exact) for l2 and for one-dimensional spaces, Monte Carlo
// over standard Gaussian vectors otherwise.
inline GammaResult gamma_norm(const GammaOperator& op, const Space& space, std::uint64_t samples, std::uint64_t seed) {
  require(op.dim() == space.dim(), "gamma operator dimension does not match space");
  if (space.is_hilbert() || space.dim() == 1) {
    double s = 0.0;
    for (std::size_t n = 0; n < op.columns.size(); ++n) {
      const double c = op.weights[n] * space.norm_unchecked(op.columns[n].data());
      s += c * c;
    }
    return {std::sqrt(s), 0.0, true};
  }
  require(samples >= 2, "Monte Carlo gamma norm needs at least 2 samples");
  const std::size_t K = op.dim();
  std::vector<double> sq(samples);
  parallel_chunks(samples, [&](std::uint64_t b, std::uint64_t e) {
    Vector acc(K);
    for (std::uint64_t i = b; i < e; ++i) {
      CounterRng rng(seed, i, 0x9a);
      std::fill(acc.begin(), acc.end(), 0.0);
      for (std::size_t n = 0; n < op.columns.size(); ++n) {
        const double g = rng.normal() * op.weights[n];
        for (std::size_t k = 0; k < K; ++k) acc[k] += g * op.columns[n][k];
      }
      const double x = space.norm_unchecked(acc.data());
      sq[i] = x * x;
    }
  });
  const Estimate m = mean_and_stderr(sq);
  const double v = std::sqrt(m.value);
  return {v, v > 0.0 ? m.std_error / (2.0 * v) : 0.0, false};
}

inline GammaOperator square_function_operator(const SimpleProcess& H, const Scenario& sc) {
  H.check_scenario(sc);
  std::vector<double> w;
  std::vector<Vector> cols;
  for (std::size_t n = 1; n <= H.steps(); ++n) {
    w.push_back(std::sqrt(H.grid().dt(n)));
    const double* v = H.at(n - 1, H.info_index(n - 1, sc));
    cols.emplace_back(v, v + H.dim());
  }
  return {std::move(w), std::move(cols)};
}

inline GammaResult square_function(const SimpleProcess& H, const Scenario& sc, const Space& space,
                                   std::uint64_t samples = 20000, std::uint64_t seed = 1) {
  return gamma_norm(square_function_operator(H, sc), space, samples, seed);
}

// ||int H dW||_{L^q} / ||S(H)||_{L^q}. S(H)^q is exact where gamma_norm is;
// otherwise for q = 2 one Gaussian draw per path gives an unbiased estimate of
// S(H)^2, and for q != 2 (mean of `inner` draws)^{q/2} is used, which carries
// an O(1/inner) bias.
inline Estimate wq_ratio(const SimpleProcess& H, const Space& space, double q, std::uint64_t paths, std::uint64_t seed,
                         std::uint64_t inner = 64) {
  require(paths >= 1000, "wq_ratio needs at least 1000 paths");
  require(q > 0.0 && std::isfinite(q), "q must satisfy 0 < q < inf");
  require(H.dim() == space.dim(), "process dimension does not match space");
  if (H.is_zero()) throw DegenerateInputError("H is identically zero");
  const bool exact = space.is_hilbert() || space.dim() == 1;
  const std::uint64_t draws = (exact || q == 2.0) ? 1 : std::max<std::uint64_t>(inner, 1);
  const std::size_t K = H.dim(), N = H.steps();
  std::vector<double> A(paths), B(paths);
  parallel_chunks(paths, [&](std::uint64_t b, std::uint64_t e) {
    Scenario sc;
    Vector acc(K);
    std::vector<const double*> cols(N);
    for (std::uint64_t i = b; i < e; ++i) {
      draw_scenario(H.grid(), H.aux_counts(), seed, i, sc);
      std::fill(acc.begin(), acc.end(), 0.0);
      for (std::size_t n = 1; n <= N; ++n) {
        cols[n - 1] = H.at(n - 1, H.info_index(n - 1, sc));
        for (std::size_t k = 0; k < K; ++k) acc[k] += cols[n - 1][k] * sc.dW[n - 1];
      }
      A[i] = std::pow(space.norm_unchecked(acc.data()), q);
      if (exact) {
        double s = 0.0;
        for (std::size_t n = 1; n <= N; ++n) {
          const double c = space.norm_unchecked(cols[n - 1]);
          s += H.grid().dt(n) * c * c;
        }
        B[i] = std::pow(s, q / 2.0);
      } else {
        CounterRng g(seed, i, 1);
        double s = 0.0;
        for (std::uint64_t d = 0; d < draws; ++d) {
          std::fill(acc.begin(), acc.end(), 0.0);
          for (std::size_t n = 1; n <= N; ++n) {
            const double w = g.normal() * std::sqrt(H.grid().dt(n));
            for (std::size_t k = 0; k < K; ++k) acc[k] += w * cols[n - 1][k];
          }
          const double x = space.norm_unchecked(acc.data());
          s += x * x;
        }
        s /= static_cast<double>(draws);
        B[i] = q == 2.0 ? s : std::pow(s, q / 2.0);
      }
    }
  });
  const double n = static_cast<double>(paths);
  const double ma = pairwise_sum(A) / n, mb = pairwise_sum(B) / n;
  if (mb == 0.0) throw DegenerateInputError("square function vanishes on every path");
  std::vector<double> cross(paths);
  for (std::uint64_t i = 0; i < paths; ++i) cross[i] = (A[i] - ma) * (B[i] - mb);
  const double va = pairwise_sum_of(A, [ma](double v) { return (v - ma) * (v - ma); }) / (n - 1);
  const double vb = pairwise_sum_of(B, [mb](double v) { return (v - mb) * (v - mb); }) / (n - 1);
  const double cab = pairwise_sum(cross) / (n - 1);
  const double r = ma / mb;
  const double var_r = std::max(0.0, (va - 2.0 * r * cab + r * r * vb) / (mb * mb) / n);
  const double est = std::pow(r, 1.0 / q);
  return {est, r > 0.0 ? est / (q * r) * std::sqrt(var_r) : 0.0};
}

}  // namespace decoupling

#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "decoupling/distribution.hpp"
#include "decoupling/errors.hpp"
#include "decoupling/parallel.hpp"
#include "decoupling/rng.hpp"
#include "decoupling/space.hpp"

namespace decoupling {

inline constexpr unsigned kDefaultExactBits = 20;
inline constexpr std::size_t kMaxTreeEntries = std::size_t{1} << 27;

// v_n at sign prefix i lives at level n, index i (n low bits, bit j = 1 <=> r_{j+1} = +1).
class PredictableTree {
 public:
  PredictableTree(std::size_t depth, std::size_t dim) : depth_(depth), dim_(dim) {
    require(depth >= 1, "tree depth must be at least 1");
    require(dim >= 1, "tree dimension must be at least 1");
    if (depth > 26 || ((std::size_t{1} << depth) - 1) * dim > kMaxTreeEntries)
      throw CapacityError("tree with depth " + std::to_string(depth) + " and dimension " + std::to_string(dim) +
                          " is too large to store; use a generator");
    levels_.resize(depth);
    for (std::size_t n = 0; n < depth; ++n) levels_[n].assign((std::size_t{1} << n) * dim, 0.0);
  }

  static PredictableTree from_levels(const std::vector<std::vector<Vector>>& levels) {
    require(!levels.empty(), "tree needs at least one level");
    require(!levels[0].empty() && !levels[0][0].empty(), "tree vectors must be nonempty");
    PredictableTree t(levels.size(), levels[0][0].size());
    for (std::size_t n = 0; n < levels.size(); ++n) {
      require(levels[n].size() == (std::size_t{1} << n),
              "tree level " + std::to_string(n) + " must have exactly 2^n entries");
      for (std::size_t i = 0; i < levels[n].size(); ++i) {
        require(levels[n][i].size() == t.dim_, "tree vectors must share one dimension");
        for (std::size_t k = 0; k < t.dim_; ++k) {
          require(std::isfinite(levels[n][i][k]), "tree entries must be finite");
          t.at(n, i)[k] = levels[n][i][k];
        }
      }
    }
    return t;
  }

  static PredictableTree constant(std::size_t depth, const Vector& x) {
    PredictableTree t(depth, x.size());
    for (std::size_t n = 0; n < depth; ++n)
      for (std::size_t i = 0; i < (std::size_t{1} << n); ++i) std::memcpy(t.at(n, i), x.data(), x.size() * sizeof(double));
    return t;
  }

  std::size_t depth() const { return depth_; }
  std::size_t dim() const { return dim_; }
  std::size_t level_size(std::size_t n) const { return std::size_t{1} << n; }

  const double* at(std::size_t n, std::size_t i) const { return levels_[n].data() + i * dim_; }
  double* at(std::size_t n, std::size_t i) { return levels_[n].data() + i * dim_; }
  Vector vector(std::size_t n, std::size_t i) const { return Vector(at(n, i), at(n, i) + dim_); }

  // Field interface shared with on-the-fly generators.
  void vector_into(std::size_t n, std::uint64_t i, double* out) const {
    std::memcpy(out, at(n, static_cast<std::size_t>(i)), dim_ * sizeof(double));
  }

  bool is_zero() const {
    for (const auto& l : levels_)
      for (double v : l)
        if (v != 0.0) return false;
    return true;
  }

  PredictableTree negated() const {
    PredictableTree t = *this;
    for (auto& l : t.levels_)
      for (double& v : l) v = -v;
    return t;
  }

  bool operator==(const PredictableTree& o) const {
    return depth_ == o.depth_ && dim_ == o.dim_ && levels_ == o.levels_;
  }

 private:
  std::size_t depth_;
  std::size_t dim_;
  std::vector<std::vector<double>> levels_;
};

// Standard normal entries.
inline PredictableTree random_tree(std::size_t depth, std::size_t dim, std::uint64_t seed) {
  PredictableTree t(depth, dim);
  CounterRng rng(seed, 0, 0x7ee);
  for (std::size_t n = 0; n < depth; ++n)
    for (std::size_t i = 0; i < t.level_size(n); ++i)
      for (std::size_t k = 0; k < dim; ++k) t.at(n, i)[k] = rng.normal();
  return t;
}

inline std::uint64_t prefix_mask(std::size_t n) { return n >= 64 ? ~std::uint64_t{0} : (std::uint64_t{1} << n) - 1; }

inline std::vector<Vector> eval_path(const PredictableTree& tree, std::uint64_t path) {
  const std::size_t N = tree.depth();
  if (path >= (std::uint64_t{1} << N)) throw InputError("path index out of range for tree depth");
  std::vector<Vector> inc(N, Vector(tree.dim()));
  for (std::size_t n = 1; n <= N; ++n) {
    const double r = (path >> (n - 1)) & 1u ? 1.0 : -1.0;
    const double* v = tree.at(n - 1, path & prefix_mask(n - 1));
    for (std::size_t k = 0; k < tree.dim(); ++k) inc[n - 1][k] = r * v[k];
  }
  return inc;
}

namespace detail {

inline void check_tree_space(const PredictableTree& tree, const Space& space) {
  if (tree.dim() != space.dim())
    throw InputError("tree dimension " + std::to_string(tree.dim()) + " does not match space dimension " +
                     std::to_string(space.dim()));
}

// Norm of sum_n s_n v_{n-1}(path), s_n read from the bits of `signs`.
template <class Field>
double signed_sum_norm(const Field& field, const Space& space, std::uint64_t path, std::uint64_t signs,
                       std::vector<double>& acc, std::vector<double>& tmp) {
  const std::size_t K = field.dim();
  std::fill(acc.begin(), acc.end(), 0.0);
  for (std::size_t n = 1; n <= field.depth(); ++n) {
    field.vector_into(n - 1, path & prefix_mask(n - 1), tmp.data());
    if ((signs >> (n - 1)) & 1u)
      for (std::size_t k = 0; k < K; ++k) acc[k] += tmp[k];
    else
      for (std::size_t k = 0; k < K; ++k) acc[k] -= tmp[k];
  }
  return space.norm_unchecked(acc.data());
}

inline double power_of(double x, double p) {
  if (p == 1.0) return x;
  if (p == 2.0) return x * x;
  return std::pow(x, p);
}

}  // namespace detail

// ||sum r_n v_{n-1}|| for every path, indexed by path.
inline std::vector<double> coupled_norms(const PredictableTree& tree, const Space& space,
                                         unsigned cap_bits = kDefaultExactBits) {
  detail::check_tree_space(tree, space);
  if (tree.depth() > cap_bits)
    throw CapacityError("coupled enumeration needs 2^" + std::to_string(tree.depth()) + " paths, above cap 2^" +
                        std::to_string(cap_bits) + "; use Monte Carlo");
  const std::uint64_t count = std::uint64_t{1} << tree.depth();
  std::vector<double> out(count);
  parallel_chunks(count, [&](std::uint64_t b, std::uint64_t e) {
    std::vector<double> acc(tree.dim()), tmp(tree.dim());
    for (std::uint64_t path = b; path < e; ++path) out[path] = detail::signed_sum_norm(tree, space, path, path, acc, tmp);
  });
  return out;
}

// ||sum r'_n v_{n-1}(r)|| for every (r, r'), index r * 2^N + r'.
inline std::vector<double> decoupled_norms(const PredictableTree& tree, const Space& space,
                                           unsigned cap_bits = kDefaultExactBits) {
  detail::check_tree_space(tree, space);
  if (2 * tree.depth() > cap_bits)
    throw CapacityError("decoupled enumeration needs 4^" + std::to_string(tree.depth()) + " states, above cap 2^" +
                        std::to_string(cap_bits) + "; use Monte Carlo");
  const std::size_t N = tree.depth();
  const std::uint64_t count = std::uint64_t{1} << (2 * N);
  std::vector<double> out(count);
  parallel_chunks(count, [&](std::uint64_t b, std::uint64_t e) {
    std::vector<double> acc(tree.dim()), tmp(tree.dim());
    for (std::uint64_t s = b; s < e; ++s) out[s] = detail::signed_sum_norm(tree, space, s >> N, s & prefix_mask(N), acc, tmp);
  });
  return out;
}

inline ScalarDistribution coupled_distribution(const PredictableTree& tree, const Space& space,
                                               unsigned cap_bits = kDefaultExactBits) {
  return ScalarDistribution::from_equal_weights(coupled_norms(tree, space, cap_bits));
}

inline ScalarDistribution decoupled_distribution(const PredictableTree& tree, const Space& space,
                                                 unsigned cap_bits = kDefaultExactBits) {
  return ScalarDistribution::from_equal_weights(decoupled_norms(tree, space, cap_bits));
}

// E||.||^p straight from the enumeration, pairwise summed.
inline double mean_power(const std::vector<double>& norms, double p) {
  require(p > 0.0, "moment order p must be positive");
  return pairwise_sum_of(norms, [p](double v) { return detail::power_of(v, p); }) / static_cast<double>(norms.size());
}

inline double coupled_moment(const PredictableTree& tree, const Space& space, double p) {
  return mean_power(coupled_norms(tree, space), p);
}

inline double decoupled_moment(const PredictableTree& tree, const Space& space, double p) {
  return mean_power(decoupled_norms(tree, space), p);
}

struct RatioParts {
  double coupled_lp = 0.0;
  double decoupled_lp = 0.0;
  double ratio = 0.0;
};

inline RatioParts decoupling_ratio_parts(const PredictableTree& tree, const Space& space, double p) {
  require(p > 0.0 && std::isfinite(p), "ratio exponent must satisfy 0 < p < inf");
  const double a = coupled_moment(tree, space, p);
  const double b = decoupled_moment(tree, space, p);
  if (b == 0.0) throw DegenerateInputError("decoupled L^p norm is zero (all-zero tree)");
  RatioParts r;
  r.coupled_lp = std::pow(a, 1.0 / p);
  r.decoupled_lp = std::pow(b, 1.0 / p);
  r.ratio = r.coupled_lp / r.decoupled_lp;
  return r;
}

inline double decoupling_ratio(const PredictableTree& tree, const Space& space, double p) {
  return decoupling_ratio_parts(tree, space, p).ratio;
}

enum class Side { Coupled, Decoupled };

// Field: depth(), dim(), vector_into(level, index, out). Each sample i draws
// its signs from CounterRng(seed, i), so the result ignores the thread count.
template <class Field>
Estimate mc_moment(const Field& field, const Space& space, const Functional& f, Side side, std::uint64_t samples,
                   std::uint64_t seed) {
  require(samples >= 2, "Monte Carlo needs at least 2 samples");
  require(field.dim() == space.dim(), "field dimension does not match space");
  require(field.depth() >= 1 && field.depth() <= 63, "Monte Carlo depth must be in 1..63");
  require(f.kind() != Functional::Kind::WeakLp, "weak-L^p is a supremum, not an expectation; use the exact route");
  const std::size_t N = field.depth();
  std::vector<double> values(samples);
  parallel_chunks(samples, [&](std::uint64_t b, std::uint64_t e) {
    std::vector<double> acc(field.dim()), tmp(field.dim());
    for (std::uint64_t i = b; i < e; ++i) {
      CounterRng rng(seed, i);
      const std::uint64_t path = rng.next_u64() & prefix_mask(N);
      const std::uint64_t resign = rng.next_u64() & prefix_mask(N);
      const double x = detail::signed_sum_norm(field, space, path, side == Side::Coupled ? path : resign, acc, tmp);
      values[i] = f.kind() == Functional::Kind::Power ? detail::power_of(x, f.parameter())
                                                      : (x > f.parameter() ? 1.0 : 0.0);
    }
  });
  return mean_and_stderr(values);
}

inline nlohmann::json tree_to_json(const PredictableTree& t) {
  nlohmann::json levels = nlohmann::json::array();
  for (std::size_t n = 0; n < t.depth(); ++n) {
    nlohmann::json level = nlohmann::json::array();
    for (std::size_t i = 0; i < t.level_size(n); ++i) level.push_back(t.vector(n, i));
    levels.push_back(std::move(level));
  }
  return {{"depth", t.depth()}, {"dim", t.dim()}, {"levels", std::move(levels)}};
}

inline PredictableTree tree_from_json(const nlohmann::json& j) {
  require(j.is_object() && j.contains("levels"), "tree JSON needs \"levels\"");
  auto levels = j.at("levels").get<std::vector<std::vector<Vector>>>();
  PredictableTree t = PredictableTree::from_levels(levels);
  if (j.contains("depth")) require(j.at("depth").get<std::size_t>() == t.depth(), "tree depth disagrees with levels");
  if (j.contains("dim")) require(j.at("dim").get<std::size_t>() == t.dim(), "tree dim disagrees with levels");
  return t;
}

}  // namespace decoupling

#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include <nlohmann/json.hpp>

#include "decoupling/dyadic.hpp"
#include "decoupling/errors.hpp"
#include "decoupling/parallel.hpp"
#include "decoupling/space.hpp"

namespace decoupling {

struct HaarIndex {
  std::size_t n = 0;
  std::uint64_t k = 0;
};

// h_{n,k} is +1 on (left, split], -1 on (split, right].
struct HaarSupport {
  double left = 0.0;
  double right = 1.0;
  double split = 0.5;
};

inline HaarSupport haar_support(HaarIndex idx) {
  require(idx.n < 62 && idx.k < (std::uint64_t{1} << idx.n), "Haar index (n, k) needs 0 <= k < 2^n");
  const double w = std::ldexp(1.0, -static_cast<int>(idx.n));
  const double left = static_cast<double>(idx.k) * w;
  return {left, left + w, left + w / 2};
}

inline std::uint64_t reverse_bits(std::uint64_t x, std::size_t width) {
  std::uint64_t y = 0;
  for (std::size_t j = 0; j < width; ++j) y |= ((x >> j) & 1u) << (width - 1 - j);
  return y;
}

// The cylinder A_{n,k} is {r : sum_j (r_j + 1) 2^{j-2} = k}, i.e. k read little
// endian from the signs. We send sign +1 to binary digit 0 of t, so the
// interval position is the complement of the reversed prefix. The map is an
// involution between Haar position and tree index.
inline std::uint64_t haar_position_to_tree_index(std::size_t n, std::uint64_t k) {
  return reverse_bits(~k & prefix_mask(n), n);
}
inline std::uint64_t tree_index_to_haar_position(std::size_t n, std::uint64_t i) {
  return haar_position_to_tree_index(n, i);
}

class HaarExpansion {
 public:
  HaarExpansion(std::size_t depth, std::size_t dim) : coeffs_(depth, dim) {}
  explicit HaarExpansion(PredictableTree storage) : coeffs_(std::move(storage)) {}

  std::size_t depth() const { return coeffs_.depth(); }
  std::size_t dim() const { return coeffs_.dim(); }
  const double* at(HaarIndex idx) const { return coeffs_.at(idx.n, static_cast<std::size_t>(idx.k)); }
  double* at(HaarIndex idx) { return coeffs_.at(idx.n, static_cast<std::size_t>(idx.k)); }
  Vector vector(HaarIndex idx) const { return coeffs_.vector(idx.n, static_cast<std::size_t>(idx.k)); }

  // Same storage shape as a tree, indexed by Haar position.
  const PredictableTree& raw() const { return coeffs_; }

  bool operator==(const HaarExpansion& o) const { return coeffs_ == o.coeffs_; }

 private:
  PredictableTree coeffs_;
};

inline HaarExpansion dyadic_to_haar(const PredictableTree& tree) {
  HaarExpansion h(tree.depth(), tree.dim());
  for (std::size_t n = 0; n < tree.depth(); ++n)
    for (std::uint64_t k = 0; k < (std::uint64_t{1} << n); ++k) {
      const double* src = tree.at(n, haar_position_to_tree_index(n, k));
      std::copy(src, src + tree.dim(), h.at({n, k}));
    }
  return h;
}

inline PredictableTree haar_to_dyadic(const HaarExpansion& h) {
  PredictableTree t(h.depth(), h.dim());
  for (std::size_t n = 0; n < h.depth(); ++n)
    for (std::uint64_t i = 0; i < (std::uint64_t{1} << n); ++i) {
      const double* src = h.at({n, tree_index_to_haar_position(n, i)});
      std::copy(src, src + h.dim(), t.at(n, i));
    }
  return t;
}

// modulus=false: (int_0^1 ||sum h_{n,k}(t) x_{n,k}||^p dt)^{1/p}.
// modulus=true: the same with |h_{n,k}| and an independent sign per (n,k);
// only the N signs active on each finest interval matter.
inline double haar_norm(const HaarExpansion& h, const Space& space, double p, bool modulus) {
  require(p > 0.0 && std::isfinite(p), "haar_norm needs 0 < p < inf");
  if (h.dim() != space.dim()) throw InputError("expansion dimension does not match space");
  const std::size_t N = h.depth();
  if ((modulus ? 2 * N : N) > kDefaultExactBits) throw CapacityError("Haar integration above the exact cap");
  const std::size_t K = h.dim();
  const std::uint64_t intervals = std::uint64_t{1} << N;
  const std::uint64_t patterns = modulus ? intervals : 1;
  const std::uint64_t count = intervals * patterns;
  std::vector<double> values(count);
  parallel_chunks(count, [&](std::uint64_t b, std::uint64_t e) {
    Vector acc(K);
    for (std::uint64_t s = b; s < e; ++s) {
      const std::uint64_t j = modulus ? s >> N : s;
      const std::uint64_t eps = modulus ? s & prefix_mask(N) : 0;
      std::fill(acc.begin(), acc.end(), 0.0);
      for (std::size_t n = 0; n < N; ++n) {
        const std::uint64_t k = j >> (N - n);
        double sign;
        if (modulus)
          sign = (eps >> n) & 1u ? 1.0 : -1.0;
        else
          sign = (j >> (N - n - 1)) & 1u ? -1.0 : 1.0;
        const double* x = h.at({n, k});
        for (std::size_t c = 0; c < K; ++c) acc[c] += sign * x[c];
      }
      values[s] = detail::power_of(space.norm_unchecked(acc.data()), p);
    }
  });
  return std::pow(pairwise_sum(values) / static_cast<double>(count), 1.0 / p);
}

inline nlohmann::json haar_to_json(const HaarExpansion& h) {
  nlohmann::json j = tree_to_json(h.raw());
  j["indexing"] = "haar";
  return j;
}

inline HaarExpansion haar_from_json(const nlohmann::json& j) {
  require(j.value("indexing", std::string()) == "haar", "Haar expansion JSON needs \"indexing\": \"haar\"");
  return HaarExpansion(tree_from_json(j));
}

}  // namespace decoupling

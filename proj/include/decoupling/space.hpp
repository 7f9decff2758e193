#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "decoupling/errors.hpp"

namespace decoupling {

using Vector = std::vector<double>;

enum class NormKind { Lp, WeightedSup };

class Space {
 public:
  static Space lp(std::size_t dim, double p) {
    require(dim >= 1, "space dimension must be positive");
    require(p >= 1.0 || std::isinf(p), "lp exponent must satisfy p >= 1 or p = inf");
    Space s;
    s.dim_ = dim;
    s.kind_ = NormKind::Lp;
    s.p_ = p;
    return s;
  }
  static Space linf(std::size_t dim) { return lp(dim, std::numeric_limits<double>::infinity()); }
  static Space l2(std::size_t dim) { return lp(dim, 2.0); }
  static Space weighted_sup(std::vector<double> weights) {
    require(!weights.empty(), "weighted sup space needs at least one weight");
    for (double w : weights)
      require(std::isfinite(w) && w > 0.0, "weights must be finite and strictly positive");
    Space s;
    s.dim_ = weights.size();
    s.kind_ = NormKind::WeightedSup;
    s.p_ = std::numeric_limits<double>::infinity();
    s.weights_ = std::move(weights);
    return s;
  }

  std::size_t dim() const { return dim_; }
  NormKind kind() const { return kind_; }
  double p() const { return p_; }
  const std::vector<double>& weights() const { return weights_; }
  bool is_hilbert() const { return kind_ == NormKind::Lp && p_ == 2.0; }

  // No dimension check; hot loops call this after validating once.
  double norm_unchecked(const double* x) const {
    if (kind_ == NormKind::WeightedSup) {
      double m = 0.0;
      for (std::size_t k = 0; k < dim_; ++k) m = std::max(m, weights_[k] * std::abs(x[k]));
      return m;
    }
    if (std::isinf(p_)) {
      double m = 0.0;
      for (std::size_t k = 0; k < dim_; ++k) m = std::max(m, std::abs(x[k]));
      return m;
    }
    if (p_ == 1.0) {
      double s = 0.0;
      for (std::size_t k = 0; k < dim_; ++k) s += std::abs(x[k]);
      return s;
    }
    if (p_ == 2.0) {
      double s = 0.0;
      for (std::size_t k = 0; k < dim_; ++k) s += x[k] * x[k];
      return std::sqrt(s);
    }
    double m = 0.0;
    for (std::size_t k = 0; k < dim_; ++k) m = std::max(m, std::abs(x[k]));
    if (m == 0.0) return 0.0;
    double s = 0.0;
    for (std::size_t k = 0; k < dim_; ++k) s += std::pow(std::abs(x[k]) / m, p_);
    return m * std::pow(s, 1.0 / p_);
  }

  bool operator==(const Space& o) const {
    return dim_ == o.dim_ && kind_ == o.kind_ && p_ == o.p_ && weights_ == o.weights_;
  }

 private:
  Space() = default;
  std::size_t dim_ = 1;
  NormKind kind_ = NormKind::Lp;
  double p_ = 2.0;
  std::vector<double> weights_;
};

inline double norm(const Space& space, std::span<const double> x) {
  if (x.size() != space.dim())
    throw InputError("vector dimension " + std::to_string(x.size()) + " does not match space dimension " +
                     std::to_string(space.dim()));
  for (double v : x) require(std::isfinite(v), "vector entries must be finite");
  return space.norm_unchecked(x.data());
}

inline std::vector<double> sqrtlog_weights(std::size_t K) {
  require(K >= 1, "sqrtlog_weights needs K >= 1");
  std::vector<double> w(K);
  for (std::size_t k = 1; k <= K; ++k) w[k - 1] = 1.0 / std::sqrt(1.0 + std::log(static_cast<double>(k)));
  return w;
}

class LinearOperator {
 public:
  // matrix is row-major, codomain.dim() rows by domain.dim() columns
  LinearOperator(std::vector<double> matrix, Space domain, Space codomain)
      : matrix_(std::move(matrix)), domain_(std::move(domain)), codomain_(std::move(codomain)) {
    require(matrix_.size() == domain_.dim() * codomain_.dim(), "operator matrix shape does not match its spaces");
    for (double v : matrix_) require(std::isfinite(v), "operator entries must be finite");
  }
  static LinearOperator identity(const Space& s) {
    std::vector<double> m(s.dim() * s.dim(), 0.0);
    for (std::size_t k = 0; k < s.dim(); ++k) m[k * s.dim() + k] = 1.0;
    return {std::move(m), s, s};
  }
  static LinearOperator diagonal(const std::vector<double>& d, const Space& domain, const Space& codomain) {
    require(d.size() == domain.dim() && d.size() == codomain.dim(), "diagonal length mismatch");
    std::vector<double> m(d.size() * d.size(), 0.0);
    for (std::size_t k = 0; k < d.size(); ++k) m[k * d.size() + k] = d[k];
    return {std::move(m), domain, codomain};
  }

  const Space& domain() const { return domain_; }
  const Space& codomain() const { return codomain_; }
  const std::vector<double>& matrix() const { return matrix_; }

  Vector apply(std::span<const double> x) const {
    if (x.size() != domain_.dim()) throw InputError("operator applied to vector of wrong dimension");
    const std::size_t rows = codomain_.dim(), cols = domain_.dim();
    Vector y(rows, 0.0);
    for (std::size_t i = 0; i < rows; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < cols; ++j) s += matrix_[i * cols + j] * x[j];
      y[i] = s;
    }
    return y;
  }

 private:
  std::vector<double> matrix_;
  Space domain_;
  Space codomain_;
};

inline Vector apply(const LinearOperator& op, std::span<const double> x) { return op.apply(x); }

inline nlohmann::json space_to_json(const Space& s) {
  nlohmann::json j;
  j["dim"] = s.dim();
  if (s.kind() == NormKind::WeightedSup) {
    j["kind"] = "wsup";
    j["weights"] = s.weights();
  } else {
    j["kind"] = "lp";
    if (std::isinf(s.p()))
      j["p"] = "inf";
    else
      j["p"] = s.p();
  }
  return j;
}

inline Space space_from_json(const nlohmann::json& j) {
  require(j.is_object() && j.contains("kind"), "space descriptor needs a \"kind\" field");
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "wsup") {
    auto w = j.at("weights").get<std::vector<double>>();
    if (j.contains("dim")) require(j.at("dim").get<std::size_t>() == w.size(), "wsup dim disagrees with weights");
    return Space::weighted_sup(std::move(w));
  }
  require(kind == "lp", "unknown space kind '" + kind + "'");
  require(j.contains("dim"), "lp space descriptor needs \"dim\"");
  const auto dim = j.at("dim").get<std::size_t>();
  const auto& pj = j.at("p");
  double p = 0.0;
  if (pj.is_string()) {
    require(pj.get<std::string>() == "inf", "p must be a number or \"inf\"");
    p = std::numeric_limits<double>::infinity();
  } else {
    p = pj.get<double>();
  }
  return Space::lp(dim, p);
}

}  // namespace decoupling

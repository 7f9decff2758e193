#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "decoupling/errors.hpp"
#include "decoupling/parallel.hpp"

namespace decoupling {

struct Atom {
  double value = 0.0;
  double probability = 0.0;
};

// Finite law on the real line, atoms sorted by value.
class ScalarDistribution {
 public:
  explicit ScalarDistribution(std::vector<Atom> atoms) : atoms_(std::move(atoms)) {
    require(!atoms_.empty(), "distribution needs at least one atom");
    std::sort(atoms_.begin(), atoms_.end(), [](const Atom& a, const Atom& b) { return a.value < b.value; });
    std::vector<Atom> merged;
    for (const Atom& a : atoms_) {
      require(std::isfinite(a.value), "distribution values must be finite");
      require(a.probability > 0.0, "distribution probabilities must be positive");
      if (!merged.empty() && merged.back().value == a.value)
        merged.back().probability += a.probability;
      else
        merged.push_back(a);
    }
    atoms_ = std::move(merged);
    double total = 0.0;
    for (const Atom& a : atoms_) total += a.probability;
    require(std::abs(total - 1.0) <= 1e-12, "distribution probabilities must sum to 1");
  }

  // Equal-weight samples; values within ~1e-13 relative of the first value of
  // a run are merged into one atom. Probabilities are count / n.
  static ScalarDistribution from_equal_weights(std::vector<double> values) {
    require(!values.empty(), "distribution needs at least one value");
    std::sort(values.begin(), values.end());
    const double n = static_cast<double>(values.size());
    std::vector<Atom> atoms;
    std::size_t i = 0;
    while (i < values.size()) {
      const double lead = values[i];
      const double tol = 1e-13 * std::max(1.0, std::abs(lead));
      std::size_t j = i + 1;
      while (j < values.size() && values[j] - lead <= tol) ++j;
      atoms.push_back({lead, static_cast<double>(j - i) / n});
      i = j;
    }
    return ScalarDistribution(std::move(atoms));
  }

  const std::vector<Atom>& atoms() const { return atoms_; }
  std::size_t size() const { return atoms_.size(); }

  double expectation_of_power(double p) const {
    double s = 0.0;
    for (const Atom& a : atoms_) s += a.probability * std::pow(std::abs(a.value), p);
    return s;
  }

  std::string to_csv() const {
    std::ostringstream os;
    os << "value,probability\n";
    char buf[64];
    for (const Atom& a : atoms_) {
      std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", a.value, a.probability);
      os << buf;
    }
    return os.str();
  }

 private:
  std::vector<Atom> atoms_;
};

class Functional {
 public:
  enum class Kind { Power, Tail, WeakLp };

  static Functional power(double p) {
    require(p > 0.0 && std::isfinite(p), "Power functional needs 0 < p < inf");
    return {Kind::Power, p};
  }
  static Functional tail(double mu) {
    require(mu >= 0.0, "Tail functional needs threshold >= 0");
    return {Kind::Tail, mu};
  }
  static Functional weak_lp(double p) {
    require(p > 0.0 && std::isfinite(p), "WeakLp functional needs 0 < p < inf");
    return {Kind::WeakLp, p};
  }

  Kind kind() const { return kind_; }
  double parameter() const { return param_; }

 private:
  Functional(Kind k, double v) : kind_(k), param_(v) {}
  Kind kind_;
  double param_;
};

inline double apply_functional(const ScalarDistribution& dist, const Functional& f) {
  const auto& at = dist.atoms();
  switch (f.kind()) {
    case Functional::Kind::Power:
      return dist.expectation_of_power(f.parameter());
    case Functional::Kind::Tail: {
      double s = 0.0;
      for (const Atom& a : at)
        if (a.value > f.parameter()) s += a.probability;
      return s;
    }
    case Functional::Kind::WeakLp: {
      // sup over lambda of lambda^p P(xi > lambda): approached just below each
      // positive atom, where it equals v^p P(xi >= v).
      double best = 0.0, upper = 0.0;
      for (auto it = at.rbegin(); it != at.rend(); ++it) {
        upper += it->probability;
        if (it->value > 0.0) best = std::max(best, std::pow(it->value, f.parameter()) * upper);
      }
      return best;
    }
  }
  return 0.0;
}

}  // namespace decoupling

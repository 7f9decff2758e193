#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "decoupling/errors.hpp"
#include "decoupling/rng.hpp"
#include "decoupling/space.hpp"

namespace decoupling {

// Cell id per atom; canonical ids count up in order of first appearance.
using Partition = std::vector<std::size_t>;

inline Partition canonical_partition(const std::vector<std::size_t>& labels) {
  std::map<std::size_t, std::size_t> ids;
  Partition out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto it = ids.try_emplace(labels[i], ids.size()).first;
    out[i] = it->second;
  }
  return out;
}

template <class Key>
Partition partition_by_key(const std::vector<Key>& keys) {
  std::map<Key, std::size_t> ids;
  Partition out(keys.size());
  for (std::size_t i = 0; i < keys.size(); ++i) out[i] = ids.try_emplace(keys[i], ids.size()).first->second;
  return out;
}

inline std::size_t cell_count(const Partition& p) {
  std::size_t m = 0;
  for (std::size_t c : p) m = std::max(m, c + 1);
  return m;
}

inline bool refines(const Partition& fine, const Partition& coarse) {
  if (fine.size() != coarse.size()) return false;
  std::map<std::size_t, std::size_t> parent;
  for (std::size_t i = 0; i < fine.size(); ++i) {
    auto [it, fresh] = parent.try_emplace(fine[i], coarse[i]);
    if (!fresh && it->second != coarse[i]) return false;
  }
  return true;
}

class FiniteFilteredSpace {
 public:
  FiniteFilteredSpace(std::vector<std::string> labels, std::vector<double> probs, std::vector<Partition> filtration)
      : labels_(std::move(labels)), probs_(std::move(probs)) {
    require(!probs_.empty(), "space needs at least one atom");
    if (labels_.empty())
      for (std::size_t i = 0; i < probs_.size(); ++i) labels_.push_back("w" + std::to_string(i));
    require(labels_.size() == probs_.size(), "one label per atom");
    double total = 0.0;
    for (double p : probs_) {
      require(std::isfinite(p) && p > 0.0, "atom probabilities must be positive");
      total += p;
    }
    require(std::abs(total - 1.0) <= 1e-12, "atom probabilities must sum to 1");
    require(!filtration.empty(), "filtration needs at least F_0");
    for (auto& part : filtration) {
      require(part.size() == probs_.size(), "every partition must label every atom");
      filtration_.push_back(canonical_partition(part));
    }
    require(cell_count(filtration_[0]) == 1, "F_0 must be the trivial partition");
    for (std::size_t n = 1; n < filtration_.size(); ++n)
      require(refines(filtration_[n], filtration_[n - 1]), "partition " + std::to_string(n) + " must refine its predecessor");
  }

  std::size_t atoms() const { return probs_.size(); }
  std::size_t steps() const { return filtration_.size() - 1; }
  double prob(std::size_t atom) const { return probs_[atom]; }
  const std::vector<double>& probs() const { return probs_; }
  const std::string& label(std::size_t atom) const { return labels_[atom]; }
  const std::vector<std::string>& labels() const { return labels_; }
  const Partition& partition(std::size_t n) const { return filtration_.at(n); }
  std::size_t cells(std::size_t n) const { return cell_count(filtration_.at(n)); }

  bool operator==(const FiniteFilteredSpace& o) const {
    return labels_ == o.labels_ && probs_ == o.probs_ && filtration_ == o.filtration_;
  }

 private:
  std::vector<std::string> labels_;
  std::vector<double> probs_;
  std::vector<Partition> filtration_;
};

inline bool is_measurable(const std::vector<Vector>& values, const Partition& part) {
  std::map<std::size_t, const Vector*> seen;
  for (std::size_t i = 0; i < values.size(); ++i) {
    auto [it, fresh] = seen.try_emplace(part[i], &values[i]);
    if (!fresh && *it->second != values[i]) return false;
  }
  return true;
}

// values[n-1][atom] = d_n(atom), n = 1..length.
class AdaptedProcess {
 public:
  AdaptedProcess(std::shared_ptr<const FiniteFilteredSpace> base, std::vector<std::vector<Vector>> values)
      : base_(std::move(base)), values_(std::move(values)) {
    require(base_ != nullptr, "process needs a base space");
    require(!values_.empty(), "process needs at least one step");
    require(values_.size() <= base_->steps(), "process is longer than the filtration");
    dim_ = values_[0].empty() ? 0 : values_[0][0].size();
    require(dim_ >= 1, "process values must be nonempty vectors");
    for (std::size_t n = 1; n <= values_.size(); ++n) {
      require(values_[n - 1].size() == base_->atoms(), "one value per atom at every step");
      for (const auto& v : values_[n - 1]) {
        require(v.size() == dim_, "process values must share one dimension");
        for (double x : v) require(std::isfinite(x), "process values must be finite");
      }
      require(is_measurable(values_[n - 1], base_->partition(n)),
              "d_" + std::to_string(n) + " is not constant on the cells of F_" + std::to_string(n));
    }
  }

  const std::shared_ptr<const FiniteFilteredSpace>& base() const { return base_; }
  std::size_t length() const { return values_.size(); }
  std::size_t dim() const { return dim_; }
  const Vector& value(std::size_t n, std::size_t atom) const { return values_[n - 1][atom]; }
  const std::vector<Vector>& step(std::size_t n) const { return values_[n - 1]; }

 private:
  std::shared_ptr<const FiniteFilteredSpace> base_;
  std::vector<std::vector<Vector>> values_;
  std::size_t dim_ = 0;
};

struct DiscreteLaw {
  std::vector<Vector> support;  // lexicographic order
  std::vector<double> prob;

  double mass_of(const Vector& x) const {
    auto it = std::lower_bound(support.begin(), support.end(), x);
    return (it != support.end() && *it == x) ? prob[static_cast<std::size_t>(it - support.begin())] : 0.0;
  }
};

// Conditional law of values given each cell of part: P(value = x, A) / P(A).
inline std::vector<DiscreteLaw> conditional_laws(const std::vector<Vector>& values, const std::vector<double>& probs,
                                                 const Partition& part) {
  const std::size_t cells = cell_count(part);
  std::vector<std::map<Vector, double>> mass(cells);
  std::vector<double> cell_mass(cells, 0.0);
  for (std::size_t i = 0; i < values.size(); ++i) {
    mass[part[i]][values[i]] += probs[i];
    cell_mass[part[i]] += probs[i];
  }
  std::vector<DiscreteLaw> out(cells);
  for (std::size_t c = 0; c < cells; ++c)
    for (const auto& [x, m] : mass[c]) {
      out[c].support.push_back(x);
      out[c].prob.push_back(m / cell_mass[c]);
    }
  return out;
}

struct KernelStep {
  std::size_t step = 0;
  std::vector<DiscreteLaw> per_cell;  // indexed by F_{n-1} cell
};

inline KernelStep condition(const AdaptedProcess& d, std::size_t n) {
  require(n >= 1 && n <= d.length(), "condition step must lie in 1..length");
  return {n, conditional_laws(d.step(n), d.base()->probs(), d.base()->partition(n - 1))};
}

struct Decoupled {
  std::shared_ptr<const FiniteFilteredSpace> space;
  AdaptedProcess d;   // original process lifted to the product space
  AdaptedProcess e;   // decoupled tangent sequence
  Partition H;        // sigma-algebra of base atoms, lifted
  std::vector<std::size_t> base_atom;
};

inline constexpr std::size_t kMaxProductAtoms = std::size_t{1} << 22;

// Product of the base with one independent draw per step from the kernel of the
// atom's current F_{n-1} cell. Draws for other cells are never read, so they are
// integrated out: the atom (w, j_1..j_N) has mass P(w) prod_n kappa_n[cell](j_n).
// G_n = sigma(F_n, j_1..j_n) and H = sigma(base atom).
inline Decoupled decouple(const AdaptedProcess& d) {
  const auto& base = *d.base();
  const std::size_t N = d.length();
  std::vector<KernelStep> kernels;
  for (std::size_t n = 1; n <= N; ++n) kernels.push_back(condition(d, n));

  std::size_t total = 0;
  for (std::size_t w = 0; w < base.atoms(); ++w) {
    std::size_t c = 1;
    for (std::size_t n = 1; n <= N; ++n) {
      c *= kernels[n - 1].per_cell[base.partition(n - 1)[w]].support.size();
      if (c > kMaxProductAtoms) break;
    }
    total += c;
    if (total > kMaxProductAtoms) throw CapacityError("decoupled product space exceeds 2^22 atoms");
  }

  std::vector<std::string> labels;
  std::vector<double> probs;
  std::vector<std::size_t> origin;
  std::vector<std::vector<std::size_t>> draws;
  for (std::size_t w = 0; w < base.atoms(); ++w) {
    std::vector<std::size_t> j(N, 0);
    for (;;) {
      double p = base.prob(w);
      std::string lab = base.label(w) + "|";
      for (std::size_t n = 1; n <= N; ++n) {
        p *= kernels[n - 1].per_cell[base.partition(n - 1)[w]].prob[j[n - 1]];
        lab += (n > 1 ? "." : "") + std::to_string(j[n - 1]);
      }
      labels.push_back(std::move(lab));
      probs.push_back(p);
      origin.push_back(w);
      draws.push_back(j);
      // odometer, last step fastest
      std::size_t n = N;
      while (n > 0) {
        const std::size_t size = kernels[n - 1].per_cell[base.partition(n - 1)[w]].support.size();
        if (++j[n - 1] < size) break;
        j[n - 1] = 0;
        --n;
      }
      if (n == 0) break;
    }
  }
  // Products of probabilities drift from 1 by rounding; renormalise.
  double mass = 0.0;
  for (double p : probs) mass += p;
  for (double& p : probs) p /= mass;

  std::vector<Partition> filtration;
  for (std::size_t n = 0; n <= N; ++n) {
    std::vector<std::vector<std::size_t>> keys(origin.size());
    for (std::size_t a = 0; a < origin.size(); ++a) {
      keys[a].push_back(base.partition(n)[origin[a]]);
      keys[a].insert(keys[a].end(), draws[a].begin(), draws[a].begin() + static_cast<std::ptrdiff_t>(n));
    }
    filtration.push_back(partition_by_key(keys));
  }
  auto space = std::make_shared<const FiniteFilteredSpace>(std::move(labels), std::move(probs), std::move(filtration));

  std::vector<std::vector<Vector>> dv(N), ev(N);
  for (std::size_t n = 1; n <= N; ++n)
    for (std::size_t a = 0; a < origin.size(); ++a) {
      dv[n - 1].push_back(d.value(n, origin[a]));
      ev[n - 1].push_back(kernels[n - 1].per_cell[base.partition(n - 1)[origin[a]]].support[draws[a][n - 1]]);
    }
  return {space, AdaptedProcess(space, std::move(dv)), AdaptedProcess(space, std::move(ev)), canonical_partition(origin),
          origin};
}

struct TangentReport {
  bool tangency = false;
  bool cond_independence = false;
  double max_discrepancy = 0.0;
  double tangency_discrepancy = 0.0;
  double independence_discrepancy = 0.0;

  nlohmann::json to_json() const {
    return {{"tangency", tangency},
            {"cond_independence", cond_independence},
            {"max_discrepancy", max_discrepancy},
            {"tangency_discrepancy", tangency_discrepancy},
            {"independence_discrepancy", independence_discrepancy}};
  }
};

inline TangentReport verify_tangent(const AdaptedProcess& d, const AdaptedProcess& e, const Partition& H,
                                    double tol = 1e-12) {
  if (!(d.base() == e.base() || *d.base() == *e.base())) throw InputError("d and e live on different base spaces");
  require(d.length() == e.length(), "d and e must have the same length");
  require(d.dim() == e.dim(), "d and e must share one dimension");
  const auto& base = *d.base();
  require(H.size() == base.atoms(), "H must label every atom");
  for (std::size_t n = 1; n <= d.length(); ++n)
    require(is_measurable(d.step(n), H), "sigma(d) is not contained in H (d_" + std::to_string(n) + ")");

  TangentReport rep;
  const auto& probs = base.probs();
  for (std::size_t n = 1; n <= d.length(); ++n) {
    const Partition& past = base.partition(n - 1);
    const auto ld = conditional_laws(d.step(n), probs, past);
    const auto le = conditional_laws(e.step(n), probs, past);
    const auto lh = conditional_laws(e.step(n), probs, H);
    std::map<std::pair<std::size_t, std::size_t>, bool> done;
    for (std::size_t a = 0; a < base.atoms(); ++a) {
      if (!done.try_emplace({past[a], H[a]}, true).second) continue;
      const DiscreteLaw& x = ld[past[a]];
      const DiscreteLaw& y = le[past[a]];
      const DiscreteLaw& z = lh[H[a]];
      std::vector<Vector> pts = x.support;
      pts.insert(pts.end(), y.support.begin(), y.support.end());
      pts.insert(pts.end(), z.support.begin(), z.support.end());
      for (const Vector& v : pts) {
        const double px = x.mass_of(v), py = y.mass_of(v), pz = z.mass_of(v);
        rep.tangency_discrepancy = std::max({rep.tangency_discrepancy, std::abs(px - py), std::abs(py - pz)});
      }
    }
  }

  // Product form of the joint law of (e_1..e_N) given each H cell.
  const std::size_t hc = cell_count(H);
  std::vector<double> hmass(hc, 0.0);
  std::vector<std::map<std::vector<Vector>, double>> joint(hc);
  std::vector<std::vector<std::map<Vector, double>>> marg(hc, std::vector<std::map<Vector, double>>(d.length()));
  for (std::size_t a = 0; a < base.atoms(); ++a) {
    std::vector<Vector> tuple;
    for (std::size_t n = 1; n <= e.length(); ++n) {
      tuple.push_back(e.value(n, a));
      marg[H[a]][n - 1][e.value(n, a)] += probs[a];
    }
    joint[H[a]][tuple] += probs[a];
    hmass[H[a]] += probs[a];
  }
  for (std::size_t c = 0; c < hc; ++c) {
    double combos = 1.0;
    for (const auto& m : marg[c]) combos *= static_cast<double>(m.size());
    if (combos > 4e6) throw CapacityError("conditional independence check needs too many tuples");
    std::vector<std::vector<std::pair<Vector, double>>> sup;
    for (const auto& m : marg[c]) sup.emplace_back(m.begin(), m.end());
    std::vector<std::size_t> idx(sup.size(), 0);
    for (;;) {
      std::vector<Vector> tuple;
      double prod = 1.0;
      for (std::size_t n = 0; n < sup.size(); ++n) {
        tuple.push_back(sup[n][idx[n]].first);
        prod *= sup[n][idx[n]].second / hmass[c];
      }
      auto it = joint[c].find(tuple);
      const double pj = it == joint[c].end() ? 0.0 : it->second / hmass[c];
      rep.independence_discrepancy = std::max(rep.independence_discrepancy, std::abs(pj - prod));
      std::size_t n = sup.size();
      while (n > 0) {
        if (++idx[n - 1] < sup[n - 1].size()) break;
        idx[n - 1] = 0;
        --n;
      }
      if (n == 0) break;
    }
  }
  rep.max_discrepancy = std::max(rep.tangency_discrepancy, rep.independence_discrepancy);
  rep.tangency = rep.tangency_discrepancy <= tol;
  rep.cond_independence = rep.independence_discrepancy <= tol;
  return rep;
}

// Factorisation d(w) = d0(w, H(w, s)) with H uniform and independent of G.
// Distinct support vectors, sorted, sit at j / M. Per G cell, cdf[c][j] is the
// kernel mass of codes 0..j; H(w, s) = cdf[c][j-1] + s * kappa[c](j).
struct Factorization {
  std::vector<Vector> codebook;
  std::vector<std::size_t> code;  // per atom
  Partition G;
  std::vector<std::vector<double>> cdf;
  std::vector<double> offset;  // per atom
  std::vector<double> slope;   // per atom
  std::vector<std::size_t> null_set;

  double embed(std::size_t j) const { return static_cast<double>(j) / static_cast<double>(codebook.size()); }
  double H(std::size_t atom, double s) const { return offset[atom] + s * slope[atom]; }

  // inf { x : kappa[cell, [0, x]] >= h }, as a code
  std::size_t d0_code(std::size_t cell, double h) const {
    const auto& c = cdf.at(cell);
    if (h <= 0.0) return 0;
    auto it = std::lower_bound(c.begin(), c.end(), h);
    if (it != c.end()) return static_cast<std::size_t>(it - c.begin());
    std::size_t j = c.size() - 1;
    while (j > 0 && c[j] == c[j - 1]) --j;
    return j;
  }
  const Vector& d0(std::size_t cell, double h) const { return codebook[d0_code(cell, h)]; }

  // Threshold points of d0 on a cell: (cdf value, code) for codes with mass.
  std::vector<std::pair<double, std::size_t>> thresholds(std::size_t cell) const {
    std::vector<std::pair<double, std::size_t>> out;
    double prev = 0.0;
    for (std::size_t j = 0; j < cdf[cell].size(); ++j) {
      if (cdf[cell][j] > prev) out.push_back({cdf[cell][j], j});
      prev = cdf[cell][j];
    }
    return out;
  }
};

inline Factorization factorize(const std::vector<Vector>& d, const std::vector<double>& probs, const Partition& G) {
  require(!d.empty() && d.size() == probs.size() && G.size() == d.size(), "factorize needs one value and one cell per atom");
  Factorization f;
  f.G = canonical_partition(G);
  f.codebook = d;
  std::sort(f.codebook.begin(), f.codebook.end());
  f.codebook.erase(std::unique(f.codebook.begin(), f.codebook.end()), f.codebook.end());
  const std::size_t M = f.codebook.size();
  for (const auto& x : d)
    f.code.push_back(static_cast<std::size_t>(std::lower_bound(f.codebook.begin(), f.codebook.end(), x) - f.codebook.begin()));
  const std::size_t cells = cell_count(f.G);
  std::vector<std::vector<double>> mass(cells, std::vector<double>(M, 0.0));
  std::vector<double> cell_mass(cells, 0.0);
  for (std::size_t a = 0; a < d.size(); ++a) {
    mass[f.G[a]][f.code[a]] += probs[a];
    cell_mass[f.G[a]] += probs[a];
  }
  f.cdf.assign(cells, std::vector<double>(M, 0.0));
  for (std::size_t c = 0; c < cells; ++c) {
    double run = 0.0;
    for (std::size_t j = 0; j < M; ++j) {
      run += mass[c][j] / cell_mass[c];
      f.cdf[c][j] = run;
    }
  }
  for (std::size_t a = 0; a < d.size(); ++a) {
    const auto& c = f.cdf[f.G[a]];
    const std::size_t j = f.code[a];
    const double lo = j == 0 ? 0.0 : c[j - 1];
    f.offset.push_back(lo);
    f.slope.push_back(c[j] - lo);
  }
  // d0 takes the atom's code on (offset, offset + slope] by construction; the
  // check is repeated here so the null set is computed, not assumed.
  for (std::size_t a = 0; a < d.size(); ++a) {
    const std::size_t cell = f.G[a];
    bool ok = f.slope[a] > 0.0 && f.d0_code(cell, f.H(a, 1.0)) == f.code[a];
    for (double s : {1e-6, 0.25, 0.5, 0.75}) ok = ok && f.d0_code(cell, f.H(a, s)) == f.code[a];
    if (!ok) f.null_set.push_back(a);
  }
  return f;
}

struct FactorizationCheck {
  double pushforward_error = 0.0;   // sup_x |P(H <= x) - x|
  double independence_error = 0.0;  // sup_{C, x} |P(C, H <= x) - P(C) x|
  bool representation_ok = false;   // d0(w, H(w, s)) = d(w) for all s in (0, 1]
  std::vector<std::size_t> mismatches;
};

inline FactorizationCheck check_factorization(const Factorization& f, const std::vector<Vector>& d,
                                              const std::vector<double>& probs) {
  FactorizationCheck out;
  const std::size_t cells = f.cdf.size();
  // The pushforward cdf is piecewise linear with kinks at the interval ends.
  std::vector<double> xs{0.0, 1.0};
  for (std::size_t a = 0; a < d.size(); ++a) {
    xs.push_back(f.offset[a]);
    xs.push_back(f.offset[a] + f.slope[a]);
  }
  std::sort(xs.begin(), xs.end());
  xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
  std::vector<double> cell_mass(cells, 0.0);
  for (std::size_t a = 0; a < d.size(); ++a) cell_mass[f.G[a]] += probs[a];
  for (double x : xs) {
    std::vector<double> within(cells, 0.0);
    for (std::size_t a = 0; a < d.size(); ++a) {
      const double frac = std::clamp((x - f.offset[a]) / f.slope[a], 0.0, 1.0);
      within[f.G[a]] += probs[a] * frac;
    }
    double total = 0.0;
    for (std::size_t c = 0; c < cells; ++c) {
      total += within[c];
      out.independence_error = std::max(out.independence_error, std::abs(within[c] - cell_mass[c] * x));
    }
    out.pushforward_error = std::max(out.pushforward_error, std::abs(total - x));
  }
  // Symbolic check: the image (a, a + b] must sit inside the code's threshold
  // interval (cdf[j-1], cdf[j]].
  for (std::size_t a = 0; a < d.size(); ++a) {
    const auto& c = f.cdf[f.G[a]];
    const std::size_t j = f.code[a];
    const double lo = j == 0 ? 0.0 : c[j - 1];
    const bool ok = f.codebook[j] == d[a] && f.slope[a] > 0.0 && f.offset[a] >= lo && f.offset[a] + f.slope[a] <= c[j];
    if (!ok) out.mismatches.push_back(a);
  }
  out.representation_ok = out.mismatches.empty();
  return out;
}

// Finite union of half-open intervals [lo, hi), kept sorted and disjoint.
struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

class IntervalSet {
 public:
  IntervalSet() = default;
  explicit IntervalSet(std::vector<Interval> parts) {
    for (const auto& iv : parts) {
      require(std::isfinite(iv.lo) && std::isfinite(iv.hi), "interval endpoints must be finite");
      require(iv.lo <= iv.hi, "interval needs lo <= hi");
    }
    std::sort(parts.begin(), parts.end(), [](const Interval& a, const Interval& b) { return a.lo < b.lo; });
    for (const auto& iv : parts) {
      if (iv.hi <= iv.lo) continue;
      if (!parts_.empty() && iv.lo <= parts_.back().hi)
        parts_.back().hi = std::max(parts_.back().hi, iv.hi);
      else
        parts_.push_back(iv);
    }
  }

  const std::vector<Interval>& parts() const { return parts_; }
  bool empty() const { return parts_.empty(); }

  double measure() const {
    double s = 0.0;
    for (const auto& iv : parts_) s += iv.hi - iv.lo;
    return s;
  }

  IntervalSet intersect(const IntervalSet& o) const {
    std::vector<Interval> out;
    std::size_t i = 0, j = 0;
    while (i < parts_.size() && j < o.parts_.size()) {
      const double lo = std::max(parts_[i].lo, o.parts_[j].lo);
      const double hi = std::min(parts_[i].hi, o.parts_[j].hi);
      if (lo < hi) out.push_back({lo, hi});
      if (parts_[i].hi < o.parts_[j].hi)
        ++i;
      else
        ++j;
    }
    return IntervalSet(std::move(out));
  }

  IntervalSet subtract(const IntervalSet& o) const {
    std::vector<Interval> out;
    std::size_t j = 0;
    for (const auto& iv : parts_) {
      double cur = iv.lo;
      while (j < o.parts_.size() && o.parts_[j].hi <= cur) ++j;
      std::size_t k = j;
      while (k < o.parts_.size() && o.parts_[k].lo < iv.hi) {
        if (o.parts_[k].lo > cur) out.push_back({cur, o.parts_[k].lo});
        cur = std::max(cur, o.parts_[k].hi);
        ++k;
      }
      if (cur < iv.hi) out.push_back({cur, iv.hi});
    }
    return IntervalSet(std::move(out));
  }

  IntervalSet unite(const IntervalSet& o) const {
    std::vector<Interval> all = parts_;
    all.insert(all.end(), o.parts_.begin(), o.parts_.end());
    return IntervalSet(std::move(all));
  }

  double symmetric_difference(const IntervalSet& o) const { return subtract(o).measure() + o.subtract(*this).measure(); }

 private:
  std::vector<Interval> parts_;
};

struct RefineCell {
  IntervalSet inside;   // cell intersected with F
  IntervalSet outside;  // cell minus F
  std::size_t g_cell = 0;
  std::vector<std::size_t> values;  // phi_1..phi_i as indices into mu

  double measure() const { return inside.measure() + outside.measure(); }
  IntervalSet set() const { return inside.unite(outside); }
};

struct RefineResult {
  std::size_t m = 0;
  double delta = 0.0;
  double bound = 0.0;  // delta^m
  std::vector<RefineCell> cells;
  IntervalSet A_eps;
  double symmetric_difference = 0.0;
  double independence_error = 0.0;  // max |lambda(phi_i = j, C) - alpha_j lambda(C)|
  std::size_t max_straddling = 0;   // per parent cell, per step
};

namespace detail {

// Cuts the virtual line "inside then outside" of a cell into consecutive
// pieces of the given lengths; the last piece takes the remainder. Slivers
// below 1e-15 left at the end of a segment are absorbed into the piece.
inline std::vector<RefineCell> cut_cell(const RefineCell& cell, const std::vector<double>& alpha) {
  struct Seg {
    Interval iv;
    bool in;
  };
  std::vector<Seg> line;
  for (const auto& iv : cell.inside.parts()) line.push_back({iv, true});
  for (const auto& iv : cell.outside.parts()) line.push_back({iv, false});
  const double total = cell.measure();
  const double sliver = 1e-15;
  std::vector<RefineCell> out;
  std::size_t seg = 0;
  double cur = line.empty() ? 0.0 : line[0].iv.lo;
  for (std::size_t j = 0; j < alpha.size(); ++j) {
    std::vector<Interval> in, outp;
    auto take = [&](double lo, double hi, bool is_in) { (is_in ? in : outp).push_back({lo, hi}); };
    if (j + 1 == alpha.size()) {
      for (; seg < line.size(); ++seg) {
        take(cur, line[seg].iv.hi, line[seg].in);
        if (seg + 1 < line.size()) cur = line[seg + 1].iv.lo;
      }
    } else {
      double need = alpha[j] * total;
      while (need > 0.0 && seg < line.size()) {
        const double room = line[seg].iv.hi - cur;
        if (room <= need + sliver) {
          take(cur, line[seg].iv.hi, line[seg].in);
          need -= room;
          ++seg;
          if (seg < line.size()) cur = line[seg].iv.lo;
        } else {
          take(cur, cur + need, line[seg].in);
          cur += need;
          need = 0.0;
        }
      }
    }
    RefineCell child;
    child.inside = IntervalSet(std::move(in));
    child.outside = IntervalSet(std::move(outp));
    child.g_cell = cell.g_cell;
    child.values = cell.values;
    child.values.push_back(j);
    out.push_back(std::move(child));
  }
  return out;
}

}  // namespace detail

// Refines every cell m times into mu-proportioned pieces with at most one
// piece per cell meeting both F and its complement; A_eps is the union of the
// final cells inside F.
inline RefineResult dyadic_refine(const IntervalSet& F, const std::vector<IntervalSet>& G, const std::vector<double>& mu,
                                  double eps, std::size_t cell_cap = std::size_t{1} << 20) {
  require(eps > 0.0 && eps < 1.0, "eps must lie in (0, 1)");
  require(mu.size() >= 1, "mu needs at least one atom");
  double total = 0.0, delta = 0.0;
  for (double a : mu) {
    require(std::isfinite(a) && a > 0.0, "mu probabilities must be positive");
    total += a;
    delta = std::max(delta, a);
  }
  require(std::abs(total - 1.0) <= 1e-12, "mu probabilities must sum to 1");
  require(mu.size() >= 2 && delta < 1.0, "mu must not be a Dirac mass");
  const IntervalSet unit({{0.0, 1.0}});
  require(F.subtract(unit).empty(), "F must lie in [0, 1)");
  require(!G.empty(), "G needs at least one cell");
  IntervalSet cover;
  double gsum = 0.0;
  for (const auto& g : G) {
    require(g.subtract(unit).empty(), "G cells must lie in [0, 1)");
    cover = cover.unite(g);
    gsum += g.measure();
  }
  require(std::abs(cover.measure() - 1.0) <= 1e-12 && std::abs(gsum - 1.0) <= 1e-12,
          "G cells must be disjoint and cover [0, 1)");

  RefineResult r;
  r.delta = delta;
  r.bound = 1.0;
  while (!(r.bound < eps)) {
    r.bound *= delta;
    ++r.m;
  }
  for (std::size_t c = 0; c < G.size(); ++c) r.cells.push_back({G[c].intersect(F), G[c].subtract(F), c, {}});
  for (std::size_t step = 0; step < r.m; ++step) {
    if (r.cells.size() * mu.size() > cell_cap)
      throw CapacityError("refinement would exceed " + std::to_string(cell_cap) + " cells");
    std::vector<RefineCell> next;
    for (const auto& cell : r.cells) {
      auto kids = detail::cut_cell(cell, mu);
      std::size_t straddle = 0;
      for (std::size_t j = 0; j < kids.size(); ++j) {
        r.independence_error = std::max(r.independence_error, std::abs(kids[j].measure() - mu[j] * cell.measure()));
        if (!kids[j].inside.empty() && !kids[j].outside.empty()) ++straddle;
      }
      r.max_straddling = std::max(r.max_straddling, straddle);
      for (auto& k : kids) next.push_back(std::move(k));
    }
    r.cells = std::move(next);
  }
  for (const auto& cell : r.cells)
    if (cell.outside.empty()) r.A_eps = r.A_eps.unite(cell.inside);
  r.symmetric_difference = F.symmetric_difference(r.A_eps);
  return r;
}

inline bool is_conditionally_symmetric(const std::vector<Vector>& f, const std::vector<double>& probs, const Partition& G,
                                       double tol = 1e-12) {
  const std::size_t cells = cell_count(G);
  std::vector<std::map<Vector, double>> mass(cells);
  for (std::size_t a = 0; a < f.size(); ++a) mass[G[a]][f[a]] += probs[a];
  for (const auto& m : mass)
    for (const auto& [x, p] : m) {
      Vector neg = x;
      for (double& v : neg) v = -v;
      auto it = m.find(neg);
      if (std::abs(p - (it == m.end() ? 0.0 : it->second)) > tol) return false;
    }
  return true;
}

struct SymmetrizeOptions {
  double h = 1.0;  // level-n grid spacing is h * 2^{-(n-1)}
  double p = 2.0;
};

struct Approximant {
  std::vector<Vector> values;
  bool symmetric = false;
  double distance = 0.0;  // (E ||f - f_n||^p)^{1/p}
};

// f_n = (q_n(f) - q_n(-f)) / 2 with q_n rounding each coordinate to the
// nearest point of h 2^{-(n-1)} Z; the sets B_{n,k} are the rounding cells.
inline std::vector<Approximant> symmetrize(const std::vector<Vector>& f, const std::vector<double>& probs,
                                           const Partition& G, std::size_t levels, const Space& space,
                                           const SymmetrizeOptions& opt = {}) {
  require(!f.empty() && f.size() == probs.size() && G.size() == f.size(), "symmetrize needs one value and cell per atom");
  require(levels >= 1, "symmetrize needs at least one level");
  require(opt.h > 0.0 && std::isfinite(opt.h), "grid spacing must be positive");
  require(opt.p > 0.0 && std::isfinite(opt.p), "p must satisfy 0 < p < inf");
  for (const auto& x : f) require(x.size() == space.dim(), "values must match the space dimension");
  if (!is_conditionally_symmetric(f, probs, G)) throw InputError("f is not conditionally symmetric given G");
  std::vector<Approximant> out;
  for (std::size_t n = 1; n <= levels; ++n) {
    const double step = std::ldexp(opt.h, -static_cast<int>(n - 1));
    auto q = [step](double y) { return step * std::round(y / step); };
    Approximant ap;
    double acc = 0.0;
    for (std::size_t a = 0; a < f.size(); ++a) {
      Vector v(f[a].size()), diff(f[a].size());
      for (std::size_t k = 0; k < v.size(); ++k) {
        v[k] = 0.5 * (q(f[a][k]) - q(-f[a][k]));
        diff[k] = f[a][k] - v[k];
      }
      acc += probs[a] * std::pow(space.norm_unchecked(diff.data()), opt.p);
      ap.values.push_back(std::move(v));
    }
    ap.distance = std::pow(acc, 1.0 / opt.p);
    ap.symmetric = is_conditionally_symmetric(ap.values, probs, G);
    out.push_back(std::move(ap));
  }
  return out;
}

// Random adapted process on a tree-shaped space: each F_{n-1} cell splits into
// 1..max_branch children with random masses, and d_n takes an integer vector
// per child drawn from {-2..2}^K (repeats allowed, so laws have 1..max_branch
// points). Atoms are the leaves.
inline AdaptedProcess random_adapted_process(std::size_t steps, std::size_t max_branch, std::size_t dim,
                                             std::uint64_t seed) {
  require(steps >= 1 && max_branch >= 1 && dim >= 1, "random process needs positive sizes");
  CounterRng rng(seed, 0, 0x7a);
  struct Node {
    double p;
    std::vector<std::size_t> path;
    std::vector<Vector> vals;
  };
  std::vector<Node> nodes{{1.0, {}, {}}};
  for (std::size_t n = 1; n <= steps; ++n) {
    std::vector<Node> next;
    for (const auto& nd : nodes) {
      const std::size_t b = 1 + rng.next_u32() % max_branch;
      std::vector<double> w(b);
      double s = 0.0;
      for (double& x : w) {
        x = 0.2 + rng.uniform();
        s += x;
      }
      for (std::size_t c = 0; c < b; ++c) {
        Node kid = nd;
        kid.p *= w[c] / s;
        kid.path.push_back(c);
        Vector v(dim);
        for (double& x : v) x = static_cast<double>(static_cast<int>(rng.next_u32() % 5) - 2);
        kid.vals.push_back(std::move(v));
        next.push_back(std::move(kid));
      }
    }
    nodes = std::move(next);
  }
  std::vector<double> probs;
  std::vector<std::string> labels;
  double s = 0.0;
  for (const auto& nd : nodes) s += nd.p;
  for (const auto& nd : nodes) {
    probs.push_back(nd.p / s);
    std::string lab = "w";
    for (std::size_t c : nd.path) lab += std::to_string(c);
    labels.push_back(std::move(lab));
  }
  std::vector<Partition> filtration;
  for (std::size_t n = 0; n <= steps; ++n) {
    std::vector<std::vector<std::size_t>> keys;
    for (const auto& nd : nodes) keys.emplace_back(nd.path.begin(), nd.path.begin() + static_cast<std::ptrdiff_t>(n));
    filtration.push_back(partition_by_key(keys));
  }
  auto space = std::make_shared<const FiniteFilteredSpace>(std::move(labels), std::move(probs), std::move(filtration));
  std::vector<std::vector<Vector>> values(steps);
  for (std::size_t n = 1; n <= steps; ++n)
    for (const auto& nd : nodes) values[n - 1].push_back(nd.vals[n - 1]);
  return AdaptedProcess(space, std::move(values));
}

inline nlohmann::json process_to_json(const AdaptedProcess& d) {
  const auto& b = *d.base();
  nlohmann::json atoms = nlohmann::json::array();
  for (std::size_t a = 0; a < b.atoms(); ++a) atoms.push_back({{"label", b.label(a)}, {"p", b.prob(a)}});
  nlohmann::json filt = nlohmann::json::array();
  for (std::size_t n = 0; n <= b.steps(); ++n) filt.push_back(b.partition(n));
  nlohmann::json vals = nlohmann::json::array();
  for (std::size_t n = 1; n <= d.length(); ++n) vals.push_back(d.step(n));
  return {{"atoms", atoms}, {"filtration", filt}, {"values", vals}};
}

inline AdaptedProcess process_from_json(const nlohmann::json& j) {
  require(j.is_object() && j.contains("atoms") && j.contains("filtration") && j.contains("values"),
          "process JSON needs atoms, filtration and values");
  std::vector<std::string> labels;
  std::vector<double> probs;
  for (const auto& a : j.at("atoms")) {
    labels.push_back(a.value("label", "w" + std::to_string(labels.size())));
    probs.push_back(a.at("p").get<double>());
  }
  auto filt = j.at("filtration").get<std::vector<Partition>>();
  auto space = std::make_shared<const FiniteFilteredSpace>(std::move(labels), std::move(probs), std::move(filt));
  return AdaptedProcess(space, j.at("values").get<std::vector<std::vector<Vector>>>());
}

}  // namespace decoupling

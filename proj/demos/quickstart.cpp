// Builds a small tree, compares its coupled and decoupled norms in two
// spaces, then walks the linf witness up to N = 12.
#include <cmath>
#include <cstdio>

#include "decoupling/decoupling.hpp"

using namespace decoupling;

int main() {
  const auto tree = random_tree(5, 4, 42);
  for (const Space& X : {Space::l2(4), Space::linf(4)}) {
    const auto r = decoupling_ratio_parts(tree, X, 2.0);
    std::printf("%-5s coupled %.6f  decoupled %.6f  ratio %.6f\n", X.is_hilbert() ? "l2" : "linf", r.coupled_lp,
                r.decoupled_lp, r.ratio);
  }

  std::printf("\n  N      K   ratio   ratio/sqrt(1+log K)\n");
  for (std::size_t N = 1; N <= 12; ++N) {
    const auto w = witness_report(N, 2.0, "reduced");
    std::printf("%3zu %6zu %7.4f %10.4f\n", w.N, w.K, w.ratio, w.ratio / std::sqrt(1.0 + std::log(double(w.K))));
  }

  const auto d = random_adapted_process(3, 3, 1, 7);
  const auto D = decouple(d);
  std::printf("\ndecoupled tangent sequence: %s\n", verify_tangent(D.d, D.e, D.H).to_json().dump().c_str());
}

// Build Four-Rooms, take the Laplacian basis of the uniform random walk and
// compare how well the first k eigenvectors reconstruct two rewards.
#include <iostream>

#include "lapkey/envs.hpp"
#include "lapkey/experiments.hpp"

int main() {
  using namespace lapkey;
  const GridWorld g = four_rooms();
  const auto spec = experiments::grid_spectrum(g);
  std::cout << "states: " << g.n_states() << "\nfirst eigenvalues:";
  for (int i = 0; i < 6; ++i) std::cout << ' ' << spec.basis.eigenvalues(i);
  std::cout << "\n\n";

  for (const auto& rw : reward_library(g)) {
    std::cout << rw.id << " (graph norm " << rw.graph_norm << ")\n";
    for (int k : {6, 20, 50}) {
      const Vector rk = reconstruct_truncated(spec.basis, rw.reward.values, k);
      std::cout << "  k=" << k << "  max |r - r_k| = " << (rw.reward.values - rk).cwiseAbs().maxCoeff() << '\n';
    }
  }
}

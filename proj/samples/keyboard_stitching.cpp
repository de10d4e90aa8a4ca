// Zero-shot vs. option stitching on a Four-Rooms goal that lies outside the
// span of six eigenvectors.
#include <iostream>

#include "lapkey/experiments.hpp"

int main() {
  using namespace lapkey;
  experiments::StitchConfig cfg;  // goal (9, 9), k = 6, t_term = 6
  const auto res = experiments::four_rooms_keyboard(cfg, 0);
  std::cout << "options:";
  for (const auto& label : res.library.labels) std::cout << ' ' << label;
  std::cout << "\nzero-shot success rate: " << res.zero_shot.success_rate
            << "\nkeyboard success rate:  " << res.keyboard.success_rate
            << "\nkeyboard mean return:   " << res.keyboard.mean_return << '\n';
  for (const auto& p : res.curve)
    if (p.episode % 500 == 0) std::cout << "  episode " << p.episode << " greedy return " << p.greedy_return << '\n';
}

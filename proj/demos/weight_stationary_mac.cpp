// Streams a row of activations past one resident weight per lane and
// accumulates, printing exact and approximate dot products side by side.

#include <cstdio>
#include <vector>

#include "dyrecmul/datapath.hpp"

int main() {
  using namespace dyrecmul;
  const Multiplier multiplier(Mode::Signed);
  const std::vector<int> weights = {-128, -77, -3, 0, 5, 64, 100, 127};

  // Load once (one reconfiguration per lane), then stream.
  std::vector<LoadedWeight> lanes;
  for (int w : weights) lanes.push_back(multiplier.load(w));

  for (int step = 0; step < 4; ++step) {
    Accumulator acc;
    long long exact = 0;
    for (std::size_t lane = 0; lane < lanes.size(); ++lane) {
      const int x = static_cast<int>((step * 37 + static_cast<int>(lane) * 53) % 256) - 128;
      acc = mac_step(acc, x, lanes[lane], multiplier);
      exact += static_cast<long long>(x) * weights[lane];
    }
    std::printf("step %d: exact %7lld  dyrecmul %7d  (%+.2f%%)\n", step, exact, acc.value,
                exact != 0 ? 100.0 * (acc.value - exact) / static_cast<double>(exact) : 0.0);
  }
  std::printf("%zu reconfigurations, %d configuration bits each\n", lanes.size(),
              multiplier.memory().spec().config_bits());
  return 0;
}

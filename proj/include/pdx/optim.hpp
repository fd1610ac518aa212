#pragma once
#include <functional>
#include <utility>
#include <vector>

#include "pdx/rng.hpp"

namespace pdx {

using ObjectiveFn = std::function<double(const std::vector<double>&)>;

struct Bounds {
  std::vector<double> lo, hi;
  size_t dim() const { return lo.size(); }
  void validate() const;  // lo <= hi elementwise, equal sizes
  bool degenerate() const;
  std::vector<double> clip(std::vector<double> x) const;
};

struct OptimResult {
  std::vector<double> x;
  double fx = 0.0;
  size_t evaluations = 0;
  // best-so-far improvements: (evaluation index, objective value), non-increasing
  std::vector<std::pair<size_t, double>> history;
};

struct DeConfig {
  double F = 0.6;
  double CR = 0.9;
  int pop_per_dim = 15;
};

// Differential evolution, rand/1/bin, generation-synchronous: all trial points
// of a generation are built from the parent population, then replacements are
// applied at a barrier.  Selection is therefore independent of evaluation
// order, which keeps parallel and serial evaluation equivalent.
OptimResult differential_evolution(const ObjectiveFn& f, const Bounds& b, size_t budget,
                                   uint64_t seed, const DeConfig& cfg = {});

// Nelder-Mead with candidates clipped into the box.  Deterministic.
OptimResult nelder_mead(const ObjectiveFn& f, const std::vector<double>& x0, const Bounds& b,
                        size_t budget, double initial_step = 0.05);

}  // namespace pdx

#pragma once
#include <vector>

#include "pdx/moc.hpp"
#include "pdx/optim.hpp"
#include "pdx/signal.hpp"

namespace pdx {

// The calibration parameter vector stacks, in order:
//   [a_1..a_n, D_1..D_n, L_1..L_n, x_1..x_m, kv, p_set]
// over the segment count n and sensor count m of the template parameters.
struct ThetaLayout {
  size_t n_seg = 0, n_sens = 0;
  size_t dim() const { return 3 * n_seg + n_sens + 2; }
  size_t a(size_t i) const { return i; }
  size_t D(size_t i) const { return n_seg + i; }
  size_t L(size_t i) const { return 2 * n_seg + i; }
  size_t x(size_t j) const { return 3 * n_seg + j; }
  size_t kv() const { return 3 * n_seg + n_sens; }
  size_t p_set() const { return 3 * n_seg + n_sens + 1; }
};

std::vector<double> params_to_theta(const PipelineParams& p);
PipelineParams theta_to_params(const std::vector<double>& theta, const PipelineParams& tmpl);

struct CalibrationProblem {
  std::vector<std::pair<int, Signal>> measured;  // (sensor index, pressure history)
  Signal inlet_flow_healthy;
  PipelineParams base;       // template & prior values for fixed parameters
  std::vector<double> lo, hi;
  std::vector<bool> fixed_mask;   // true -> pinned at base value
  std::vector<double> weights;    // per-sensor scalarization weights (default: equal)
  double washout_travel_times = 5.0;
  size_t residual_samples = 3072;  // must span integer pumping periods

  void validate() const;
};

struct CalibEval {
  size_t evaluation = 0;
  std::vector<double> per_sensor;
  double scalar = 0.0;
};

struct CalibrationResult {
  PipelineParams theta_star;
  std::vector<CalibEval> objective_history;  // best-so-far records, non-increasing scalar
  size_t evaluations = 0;
  double best_scalar = 0.0;
};

// Per-sensor squared-L2 residuals between measured and simulated pressures,
// after washout discard and mean removal.  Simulation failures surface as
// +inf residuals rather than exceptions.
std::vector<double> objective(const std::vector<double>& theta, const CalibrationProblem& prob);

double scalarize(const std::vector<double>& per_sensor, const std::vector<double>& weights);

// DE global search plus Nelder-Mead polish inside the box.  Deterministic for
// a fixed seed.  Reported wave speeds are canonicalized to their grid-adjusted
// values: within one Courant cell the model is constant, so the adjusted speed
// is the identifiable representative.
CalibrationResult calibrate(const CalibrationProblem& prob, size_t budget, RngSeed seed);

}  // namespace pdx

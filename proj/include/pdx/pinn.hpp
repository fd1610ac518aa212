#pragma once
#include <string>
#include <vector>

#include "pdx/signal.hpp"
#include "pdx/wavedecomp.hpp"

namespace pdx {

// Physics-informed virtual flow sensor: sine-activation coordinate networks
// (x,t) -> (p,Q), one subnet per pipe segment, fitted jointly to the sensor
// pressures, the line equations, the junction continuity conditions, and the
// orifice law, with the calibrated parameters held fixed.  The first layer is
// seeded with traveling-wave features read off the sensor spectrum, and the
// output layers are solved directly by damped Gauss-Newton before and after
// the gradient loop.  Complements the wave-decomposition estimator: slower,
// but free of its sensor-placement restrictions.
struct PinnConfig {
  std::vector<int> hidden = {256};  // widths per subnet; one wide layer keeps
                                    // the seeded features linear in the readout
  int n_interior = 1536;  // PDE collocation points
  int n_boundary = 192;   // orifice-boundary sample times (and per junction)
  int n_data = 1536;      // fitted sensor samples, split across sensors
  double w_data = 1.0;    // loss weights on the normalized residual terms
  double w_pde = 1.0;
  double w_bc = 1.0;
  int iterations = 150;  // Adam steps (the training budget)
  double learning_rate = 5e-4;
  double fd_dx = 0.0;  // residual stencil step, m; 0 picks line length / 2000
  double fd_dt = 0.0;  // residual stencil step, s; 0 picks 1/(4*sample_rate)
  // input premultipliers: first-layer sine features reach about these angular
  // frequencies in the [-1,1]-scaled coordinates
  double freq_scale_t = 90.0;
  double freq_scale_x = 12.0;

  void validate() const;
};

struct PinnLossRecord {
  int iteration = 0;
  double data = 0.0;  // raw mean-square terms, before normalization
  double pde = 0.0;
  double bc = 0.0;
  double total = 0.0;  // the optimized objective (weighted, normalized)
};

struct PinnResult {
  Signal q_hat;  // flow at the pump outlet on the measurement grid
  // one record per iteration, including the untrained state at iteration 0;
  // the run ends with a Gauss-Newton refit of the output layers (the
  // residuals are linear in them), logged as one extra record
  std::vector<PinnLossRecord> log;
};

PinnResult estimate_flow_pinn_detailed(const InverseProblem& prob, const PinnConfig& cfg,
                                       RngSeed seed);
Signal estimate_flow_pinn(const InverseProblem& prob, const PinnConfig& cfg, RngSeed seed);

void write_pinn_log_csv(const std::vector<PinnLossRecord>& log, const std::string& path);

}  // namespace pdx

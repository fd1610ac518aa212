#pragma once
#include <utility>
#include <vector>

#include "pdx/moc.hpp"
#include "pdx/signal.hpp"

namespace pdx {

// Flow estimation from measured pipeline pressures with the calibrated model
// held fixed.  Sensor entries are (position from the pump outlet in m, signal).
struct InverseProblem {
  PipelineParams params;
  std::vector<std::pair<double, Signal>> sensor_pressures;
  double t0 = 0.0, t1 = 0.0;  // estimation window, s

  void validate() const;
};

// Steady (mean) flow implied by the outlet orifice law at the measured mean
// pressures, with the laminar friction drop from the sensor to the valve.
double steady_flow_from_means(const InverseProblem& prob);

// Two-transducer wave decomposition: split the pressure field in the pump-side
// segment into forward/backward traveling components in the frequency domain,
// back-propagate them to x = 0 and convert to flow.  Deterministic and fast;
// serves as the reference for the PINN path.
Signal estimate_flow_wave_decomposition(const InverseProblem& prob);

}  // namespace pdx

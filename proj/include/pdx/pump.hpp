#pragma once
#include <string>
#include <vector>

#include "pdx/signal.hpp"

namespace pdx {

enum class HealthState { H, S, C1, C2, C };  // C = cylinder fault of unspecified severity (plant)

std::string to_string(HealthState h);
HealthState health_state_from_string(const std::string& s);

// Axial piston pump described by its kinematics.  Outlet flow is the sum of
// the delivering pistons' displacement rates (rectified sine), plus a short
// reverse-flow pulse each time a piston chamber opens to the discharge port
// (compressibility backflow).  The backflow pulses repeat n_pistons times per
// revolution and carry the fundamental at the pumping frequency; the rectified
// sum alone would only populate even multiples for odd piston counts.
struct PumpGeometry {
  int n_pistons = 9;
  double speed = 1000.0;          // r/min
  double piston_area = 2.0767e-4; // m^2
  double pitch_radius = 0.035;    // m
  double swash_angle = 0.29671;   // rad (17 deg)
  double backflow_gain = 2.6;     // pulse amplitude = gain * mean_flow / n_pistons^2
  double backflow_width = 0.25;   // pulse width as fraction of the pumping period

  double shaft_freq() const { return speed / 60.0; }                 // Hz
  double pumping_freq() const { return n_pistons * speed / 60.0; }   // Hz
  double mean_flow() const;                                          // m^3/s
  void validate() const;
};

struct FaultSpec {
  HealthState label = HealthState::H;
  double dip_depth = 0.0;          // fraction of mean flow removed at dip center
  double dip_width = 0.0;          // fraction of the shaft period
  std::vector<double> dip_phases;  // shaft angles (rad) within one revolution

  void validate() const;  // dip count must match the label (H:0, S:1, C/C1/C2:2)
};

// the four training states with default severities, plus the plant's cylinder fault
FaultSpec default_fault(HealthState h);
FaultSpec plant_cylinder_fault();  // severity between C1 and C2

struct FlowRippleSample {
  Signal signal;  // m^3/s
  HealthState label = HealthState::H;
  PumpGeometry geometry;
  FaultSpec fault;
};

Signal ideal_flow_ripple(const PumpGeometry& g, double sample_rate, int n_revs);
Signal inject_fault(const Signal& q, const PumpGeometry& g, const FaultSpec& f);
FlowRippleSample generate_source(const PumpGeometry& g, const FaultSpec& f, double sample_rate,
                                 int n_revs);

}  // namespace pdx

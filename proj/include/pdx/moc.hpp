#pragma once
#include <string>
#include <vector>

#include "pdx/signal.hpp"

namespace pdx {

struct PipeSegment {
  double length = 0.0;     // m
  double diameter = 0.0;   // m
  double wave_speed = 0.0; // m/s

  double area() const;
  void validate() const;
};

struct PipelineParams {
  std::vector<PipeSegment> segments;  // ordered from pump to valve
  std::vector<double> sensors;        // positions from the pump outlet, m
  double kv = 1.0541e-6;              // valve coefficient, m^3/(s*Pa^1/2)
  double p_set = 9.484e6;             // load pressure behind the valve, Pa
  double rho = 870.0;                 // kg/m^3
  double nu = 4.0e-5;                 // m^2/s

  double total_length() const;
  void validate() const;

  std::string to_json() const;  // keys: segments[], sensors[], kv, p_set, rho, nu
  static PipelineParams from_json(const std::string& text);

  // the default plant line: three segments, two sensors in segment 1
  static PipelineParams default_plant();
};

// friction pressure gradient f(Q) = 128*rho*nu*Q/(pi*D^4), Pa/m
double friction_term(double Q, const PipeSegment& seg, double rho, double nu);

// Courant-1 discretization: per segment, n_i = round(L_i/(a_i dt)) cells and
// the wave speed is nudged to a_i' = L_i/(n_i dt) (at most 2%).
struct SimulationGrid {
  double dt = 0.0;
  std::vector<int> cells;            // cells per segment
  std::vector<double> adj_speed;     // adjusted wave speeds a_i'
  std::vector<double> dx;            // cell length per segment
  std::vector<double> node_x;        // node positions, pump outlet at 0
  std::vector<int> node_seg_left;    // segment owning the interval left of node k (-1 at k=0)
  std::vector<int> node_seg_right;   // segment owning the interval right of node k (-1 at k=N)
  int n_nodes = 0;

  double travel_time() const;  // total acoustic travel time, s
};

SimulationGrid build_grid(const PipelineParams& params, double sample_rate);

enum class OutletBoundary { orifice, closed_end };

struct PressureField {
  SimulationGrid grid;
  size_t n_steps = 0;
  std::vector<double> p;  // [step * n_nodes + node], Pa
  std::vector<double> q;  // [step * n_nodes + node], m^3/s

  double pressure(size_t step, int node) const { return p[step * grid.n_nodes + node]; }
  double flow(size_t step, int node) const { return q[step * grid.n_nodes + node]; }
};

PressureField simulate(const PipelineParams& params, const Signal& inlet_flow, double duration,
                       OutletBoundary outlet = OutletBoundary::orifice);

// Streaming variant: advances the same kernel but keeps only the pressure
// histories at the requested positions (linear interpolation between nodes).
// Needed for long plant records where the full field would not fit in memory.
MultiChannelSignal simulate_sensors(const PipelineParams& params, const Signal& inlet_flow,
                                    double duration, const std::vector<double>& positions,
                                    OutletBoundary outlet = OutletBoundary::orifice);

Signal sample_sensor(const PressureField& field, double x, const SimulationGrid& grid);

}  // namespace pdx

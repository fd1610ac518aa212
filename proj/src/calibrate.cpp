#include "pdx/calibrate.hpp"

#include <cmath>
#include <limits>

#include "pdx/errors.hpp"

namespace pdx {

std::vector<double> params_to_theta(const PipelineParams& p) {
  ThetaLayout lay{p.segments.size(), p.sensors.size()};
  std::vector<double> th(lay.dim());
  for (size_t i = 0; i < lay.n_seg; ++i) {
    th[lay.a(i)] = p.segments[i].wave_speed;
    th[lay.D(i)] = p.segments[i].diameter;
    th[lay.L(i)] = p.segments[i].length;
  }
  for (size_t j = 0; j < lay.n_sens; ++j) th[lay.x(j)] = p.sensors[j];
  th[lay.kv()] = p.kv;
  th[lay.p_set()] = p.p_set;
  return th;
}

PipelineParams theta_to_params(const std::vector<double>& theta, const PipelineParams& tmpl) {
  ThetaLayout lay{tmpl.segments.size(), tmpl.sensors.size()};
  if (theta.size() != lay.dim()) throw ArgumentError("theta dimension mismatch");
  PipelineParams p = tmpl;
  for (size_t i = 0; i < lay.n_seg; ++i) {
    p.segments[i].wave_speed = theta[lay.a(i)];
    p.segments[i].diameter = theta[lay.D(i)];
    p.segments[i].length = theta[lay.L(i)];
  }
  for (size_t j = 0; j < lay.n_sens; ++j) p.sensors[j] = theta[lay.x(j)];
  p.kv = theta[lay.kv()];
  p.p_set = theta[lay.p_set()];
  return p;
}

void CalibrationProblem::validate() const {
  if (measured.empty()) throw ValidationError("CalibrationProblem: needs >= 1 measured sensor");
  inlet_flow_healthy.validate();
  ThetaLayout lay{base.segments.size(), base.sensors.size()};
  if (lo.size() != lay.dim() || hi.size() != lay.dim() || fixed_mask.size() != lay.dim())
    throw ValidationError("CalibrationProblem: bounds/mask must match the parameter layout");
  for (size_t i = 0; i < lo.size(); ++i)
    if (!fixed_mask[i] && !(lo[i] < hi[i]))
      throw ValidationError("CalibrationProblem: free parameter bounds need lo < hi");
  double fs = inlet_flow_healthy.sample_rate;
  SimulationGrid grid = build_grid(base, fs);
  size_t need = static_cast<size_t>(std::ceil(washout_travel_times * grid.travel_time() * fs)) +
                residual_samples;
  if (inlet_flow_healthy.size() < need)
    throw ValidationError("CalibrationProblem: inlet too short for washout + residual window");
  for (const auto& [idx, sig] : measured) {
    if (idx < 0 || static_cast<size_t>(idx) >= base.sensors.size())
      throw ValidationError("CalibrationProblem: sensor index out of range");
    sig.validate();
    if (std::abs(sig.sample_rate - fs) > 1e-9 * fs)
      throw ValidationError("CalibrationProblem: measured rate differs from inlet rate");
    if (sig.size() < need)
      throw ValidationError("CalibrationProblem: measured record too short");
  }
}

std::vector<double> objective(const std::vector<double>& theta, const CalibrationProblem& prob) {
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> out(prob.measured.size(), inf);
  PipelineParams params;
  try {
    params = theta_to_params(theta, prob.base);
    params.validate();
  } catch (const std::exception&) {
    return out;  // invalid geometry: infinite residual, optimizer moves on
  }

  double fs = prob.inlet_flow_healthy.sample_rate;
  try {
    SimulationGrid grid = build_grid(params, fs);
    size_t washout = static_cast<size_t>(
        std::ceil(prob.washout_travel_times * grid.travel_time() * fs));
    size_t need = washout + prob.residual_samples;
    // a candidate with longer travel time than the record covers is simply bad
    if (prob.inlet_flow_healthy.size() < need) return out;
    for (const auto& [idx, sig] : prob.measured)
      if (sig.size() < need) return out;

    std::vector<double> positions;
    for (const auto& [idx, sig] : prob.measured) positions.push_back(params.sensors[idx]);
    auto sim = simulate_sensors(params, prob.inlet_flow_healthy, need / fs, positions);

    for (size_t s = 0; s < prob.measured.size(); ++s) {
      const auto& meas = prob.measured[s].second.samples;
      const auto& simd = sim.channels[s].samples;
      double mm = 0.0, ms = 0.0;
      for (size_t i = washout; i < need; ++i) {
        mm += meas[i];
        ms += simd[i];
      }
      mm /= prob.residual_samples;
      ms /= prob.residual_samples;
      double acc = 0.0;
      for (size_t i = washout; i < need; ++i) {
        double r = (meas[i] - mm) - (simd[i] - ms);
        acc += r * r;
      }
      out[s] = acc;
    }
  } catch (const std::exception&) {
    return std::vector<double>(prob.measured.size(), inf);
  }
  return out;
}

double scalarize(const std::vector<double>& per_sensor, const std::vector<double>& weights) {
  double acc = 0.0;
  for (size_t i = 0; i < per_sensor.size(); ++i)
    acc += (i < weights.size() ? weights[i] : 1.0) * per_sensor[i];
  return acc;
}

CalibrationResult calibrate(const CalibrationProblem& prob, size_t budget, RngSeed seed) {
  prob.validate();
  if (budget < 100) throw ArgumentError("calibrate: budget must be >= 100");

  ThetaLayout lay{prob.base.segments.size(), prob.base.sensors.size()};
  std::vector<double> theta0 = params_to_theta(prob.base);
  std::vector<size_t> free_idx;
  for (size_t i = 0; i < lay.dim(); ++i)
    if (!prob.fixed_mask[i]) free_idx.push_back(i);

  CalibrationResult result;
  size_t evals = 0;
  bool any_finite = false;
  auto expand = [&](const std::vector<double>& xfree) {
    std::vector<double> th = theta0;
    for (size_t k = 0; k < free_idx.size(); ++k) th[free_idx[k]] = xfree[k];
    return th;
  };
  auto scalar_obj = [&](const std::vector<double>& xfree) {
    auto per = objective(expand(xfree), prob);
    double v = scalarize(per, prob.weights);
    ++evals;
    if (std::isfinite(v)) {
      any_finite = true;
      if (result.objective_history.empty() || v < result.objective_history.back().scalar)
        result.objective_history.push_back({evals, per, v});
    }
    return v;
  };

  if (free_idx.empty()) {
    double v = scalar_obj({});
    if (!std::isfinite(v)) throw CalibrationError("calibration failed: objective not finite");
    result.theta_star = theta_to_params(theta0, prob.base);
    result.evaluations = evals;
    result.best_scalar = v;
    return result;
  }

  Bounds box;
  for (size_t i : free_idx) {
    box.lo.push_back(prob.lo[i]);
    box.hi.push_back(prob.hi[i]);
  }

  size_t de_budget = std::max<size_t>(budget * 3 / 4, 1);
  auto de = differential_evolution(scalar_obj, box, de_budget, seed.seed);
  OptimResult best = de;
  if (evals < budget) {
    auto nm = nelder_mead(scalar_obj, de.x, box, budget - evals, 0.02);
    if (nm.fx < best.fx) best = nm;
  }

  if (!any_finite)
    throw CalibrationError("calibration failed: every candidate produced an infinite objective");

  PipelineParams p = theta_to_params(expand(best.x), prob.base);
  // canonicalize wave speeds to the Courant-adjusted values of the fitted grid
  SimulationGrid grid = build_grid(p, prob.inlet_flow_healthy.sample_rate);
  for (size_t i = 0; i < p.segments.size(); ++i) p.segments[i].wave_speed = grid.adj_speed[i];
  result.theta_star = p;
  result.evaluations = evals;
  result.best_scalar = best.fx;
  return result;
}

}  // namespace pdx

#include "pdx/pump.hpp"

#include <cmath>

#include "pdx/errors.hpp"

namespace pdx {

namespace {
constexpr double kTwoPi = 6.283185307179586476925286766559;
}

std::string to_string(HealthState h) {
  switch (h) {
    case HealthState::H: return "H";
    case HealthState::S: return "S";
    case HealthState::C1: return "C1";
    case HealthState::C2: return "C2";
    case HealthState::C: return "C";
  }
  return "?";
}

HealthState health_state_from_string(const std::string& s) {
  if (s == "H") return HealthState::H;
  if (s == "S") return HealthState::S;
  if (s == "C1") return HealthState::C1;
  if (s == "C2") return HealthState::C2;
  if (s == "C") return HealthState::C;
  throw ArgumentError("unknown health state: " + s);
}

double PumpGeometry::mean_flow() const {
  // displacement per revolution: n * A_p * stroke, stroke = 2 R tan(beta)
  double disp = n_pistons * piston_area * 2.0 * pitch_radius * std::tan(swash_angle);
  return disp * speed / 60.0;
}

void PumpGeometry::validate() const {
  if (n_pistons < 2) throw ValidationError("PumpGeometry: n_pistons >= 2 required");
  if (!(speed > 0.0)) throw ValidationError("PumpGeometry: speed must be > 0");
  if (!(piston_area > 0.0 && pitch_radius > 0.0 && swash_angle > 0.0))
    throw ValidationError("PumpGeometry: geometric quantities must be > 0");
  if (!(backflow_gain >= 0.0 && backflow_width > 0.0 && backflow_width < 1.0))
    throw ValidationError("PumpGeometry: bad backflow shape");
}

void FaultSpec::validate() const {
  size_t want = 0;
  switch (label) {
    case HealthState::H: want = 0; break;
    case HealthState::S: want = 1; break;
    default: want = 2; break;  // C, C1, C2: two interconnected chambers
  }
  if (dip_phases.size() != want)
    throw ValidationError("FaultSpec: label " + to_string(label) + " requires " +
                          std::to_string(want) + " dip phase(s), got " +
                          std::to_string(dip_phases.size()));
  if (!(dip_depth >= 0.0 && dip_depth < 1.0))
    throw ValidationError("FaultSpec: dip_depth must lie in [0,1)");
  if (want > 0 && !(dip_width > 0.0 && dip_width < 1.0))
    throw ValidationError("FaultSpec: dip_width must lie in (0,1)");
}

FaultSpec default_fault(HealthState h) {
  // dips sit at top-dead-center angles of the affected pistons (0 and 8pi/9
  // for the interconnected pair in cylinder faults)
  switch (h) {
    case HealthState::H: return {HealthState::H, 0.0, 0.0, {}};
    case HealthState::S: return {HealthState::S, 0.35, 0.06, {0.0}};
    case HealthState::C1: return {HealthState::C1, 0.15, 0.05, {0.0, 8.0 * M_PI / 9.0}};
    case HealthState::C2: return {HealthState::C2, 0.45, 0.07, {0.0, 8.0 * M_PI / 9.0}};
    case HealthState::C: return plant_cylinder_fault();
  }
  throw ArgumentError("default_fault: bad state");
}

FaultSpec plant_cylinder_fault() {
  return {HealthState::C, 0.30, 0.045, {0.0, 8.0 * M_PI / 9.0}};
}

Signal ideal_flow_ripple(const PumpGeometry& g, double sample_rate, int n_revs) {
  g.validate();
  if (!(sample_rate > 2.0 * 20.0 * g.pumping_freq()))
    throw ArgumentError("ideal_flow_ripple: sample_rate must exceed 40x the pumping frequency");
  if (n_revs < 1) throw ArgumentError("ideal_flow_ripple: n_revs >= 1 required");

  double f_shaft = g.shaft_freq();
  size_t n = 0;
  // exact sample-index phase when the revolution spans an integer sample count,
  // so tiling across revolutions is bit-identical
  double per = sample_rate / f_shaft;
  long iper = std::lround(per);
  bool exact = std::abs(per - iper) < 1e-9 * per;
  n = exact ? static_cast<size_t>(iper) * n_revs
            : static_cast<size_t>(std::llround(per * n_revs));

  double omega = kTwoPi * f_shaft;
  double amp = g.piston_area * omega * g.pitch_radius * std::tan(g.swash_angle);

  // backflow pulse geometry (in shaft-angle units)
  double a_bf = g.backflow_gain * g.mean_flow() / (g.n_pistons * g.n_pistons);
  double pump_angle = kTwoPi / g.n_pistons;            // angle of one pumping period
  double half_w = 0.5 * g.backflow_width * pump_angle; // pulse half-width, rad
  // mean of one raised-cosine pulse over a pumping period: area = a_bf*half_w
  double bf_mean = a_bf * half_w / pump_angle;

  Signal out;
  out.sample_rate = sample_rate;
  out.unit = "m3/s";
  out.channel_id = "pump_outlet_flow";
  out.samples.resize(n);
  for (size_t i = 0; i < n; ++i) {
    double turns = exact ? static_cast<double>(i % static_cast<size_t>(iper)) / iper
                         : std::fmod(f_shaft * i / sample_rate, 1.0);
    double phi = kTwoPi * turns;
    double q = 0.0;
    for (int j = 0; j < g.n_pistons; ++j) {
      double s = std::sin(phi + kTwoPi * j / g.n_pistons);
      if (s > 0.0) q += s;
    }
    q *= amp;
    // port-opening backflow: nearest pumping-period boundary
    double d = std::remainder(phi, pump_angle);
    if (std::abs(d) < half_w)
      q -= a_bf * 0.5 * (1.0 + std::cos(M_PI * d / half_w));
    q += bf_mean;
    out.samples[i] = q;
  }
  return out;
}

Signal inject_fault(const Signal& q, const PumpGeometry& g, const FaultSpec& f) {
  q.validate();
  g.validate();
  f.validate();
  if (f.label == HealthState::H || f.dip_depth == 0.0) return q;

  double f_shaft = g.shaft_freq();
  double per = q.sample_rate / f_shaft;
  long iper = std::lround(per);
  bool exact = std::abs(per - iper) < 1e-9 * per;
  double half_w = 0.5 * f.dip_width * kTwoPi;  // dip half-width in shaft angle

  Signal out = q;
  for (size_t i = 0; i < q.size(); ++i) {
    double turns = exact ? static_cast<double>(i % static_cast<size_t>(iper)) / iper
                         : std::fmod(f_shaft * i / q.sample_rate, 1.0);
    double phi = kTwoPi * turns;
    double leak = 0.0;
    for (double ph : f.dip_phases) {
      double d = std::remainder(phi - ph, kTwoPi);
      if (std::abs(d) < half_w)
        leak += f.dip_depth * 0.5 * (1.0 + std::cos(M_PI * d / half_w));
    }
    // multiplicative dip keeps the flow non-negative for any depth < 1
    out.samples[i] = q.samples[i] * (1.0 - std::min(leak, 1.0));
  }
  return out;
}

FlowRippleSample generate_source(const PumpGeometry& g, const FaultSpec& f, double sample_rate,
                                 int n_revs) {
  FlowRippleSample s;
  s.signal = inject_fault(ideal_flow_ripple(g, sample_rate, n_revs), g, f);
  s.signal.channel_id = "pump_outlet_flow_" + to_string(f.label);
  s.label = f.label;
  s.geometry = g;
  s.fault = f;
  return s;
}

}  // namespace pdx

#include "pdx/moc.hpp"

#include <cmath>

#include <json.hpp>

#include "pdx/errors.hpp"

namespace pdx {

double PipeSegment::area() const { return M_PI * diameter * diameter / 4.0; }

void PipeSegment::validate() const {
  if (!(length > 0.0 && diameter > 0.0 && wave_speed > 0.0))
    throw ValidationError("PipeSegment: length, diameter, wave_speed must be > 0");
}

double PipelineParams::total_length() const {
  double L = 0.0;
  for (const auto& s : segments) L += s.length;
  return L;
}

void PipelineParams::validate() const {
  if (segments.empty()) throw ValidationError("PipelineParams: needs >=1 segment");
  for (const auto& s : segments) s.validate();
  double L = total_length();
  for (double x : sensors)
    if (!(x >= 0.0 && x <= L))
      throw ValidationError("PipelineParams: sensor position outside pipeline");
  if (!(kv > 0.0)) throw ValidationError("PipelineParams: kv must be > 0");
  if (!(rho > 0.0)) throw ValidationError("PipelineParams: rho must be > 0");
  if (!(nu > 0.0)) throw ValidationError("PipelineParams: nu must be > 0");
}

std::string PipelineParams::to_json() const {
  nlohmann::json j;
  j["segments"] = nlohmann::json::array();
  for (const auto& s : segments)
    j["segments"].push_back({{"a", s.wave_speed}, {"D", s.diameter}, {"L", s.length}});
  j["sensors"] = sensors;
  j["kv"] = kv;
  j["p_set"] = p_set;
  j["rho"] = rho;
  j["nu"] = nu;
  return j.dump(2);
}

PipelineParams PipelineParams::from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  PipelineParams p;
  p.segments.clear();
  for (const auto& s : j.at("segments"))
    p.segments.push_back({s.at("L").get<double>(), s.at("D").get<double>(), s.at("a").get<double>()});
  p.sensors = j.at("sensors").get<std::vector<double>>();
  p.kv = j.at("kv").get<double>();
  p.p_set = j.at("p_set").get<double>();
  p.rho = j.value("rho", 870.0);
  p.nu = j.value("nu", 4.0e-5);
  p.validate();
  return p;
}

PipelineParams PipelineParams::default_plant() {
  PipelineParams p;
  p.segments = {{5.953, 0.01971, 1022.9}, {1.144, 0.02307, 982.7}, {1.675, 0.01486, 1308.4}};
  p.sensors = {0.4167, 2.5895};
  p.kv = 1.0541e-6;
  p.p_set = 9.484e6;
  p.rho = 870.0;
  p.nu = 4.0e-5;
  return p;
}

double friction_term(double Q, const PipeSegment& seg, double rho, double nu) {
  double d2 = seg.diameter * seg.diameter;
  return 128.0 * rho * nu * Q / (M_PI * d2 * d2);
}

double SimulationGrid::travel_time() const {
  double t = 0.0;
  for (size_t i = 0; i < cells.size(); ++i) t += cells[i] * dt;
  return t;
}

SimulationGrid build_grid(const PipelineParams& params, double sample_rate) {
  params.validate();
  if (!(sample_rate > 0.0)) throw ArgumentError("build_grid: sample_rate must be > 0");
  SimulationGrid g;
  g.dt = 1.0 / sample_rate;
  double x = 0.0;
  g.node_x.push_back(0.0);
  g.node_seg_left.push_back(-1);
  for (size_t i = 0; i < params.segments.size(); ++i) {
    const auto& s = params.segments[i];
    long n = std::lround(s.length / (s.wave_speed * g.dt));
    if (n < 1)
      throw DiscretizationError("build_grid: segment " + std::to_string(i) +
                                " resolves to zero cells; decrease dt");
    double a_adj = s.length / (n * g.dt);
    double rel = std::abs(a_adj - s.wave_speed) / s.wave_speed;
    if (rel > 0.02)
      throw DiscretizationError("build_grid: wave-speed adjustment " + std::to_string(rel * 100) +
                                "% on segment " + std::to_string(i) +
                                " exceeds 2%; choose a different dt");
    g.cells.push_back(static_cast<int>(n));
    g.adj_speed.push_back(a_adj);
    g.dx.push_back(a_adj * g.dt);
    for (long k = 0; k < n; ++k) {
      x += a_adj * g.dt;
      g.node_seg_right.push_back(static_cast<int>(i));
      g.node_x.push_back(x);
      g.node_seg_left.push_back(static_cast<int>(i));
    }
  }
  g.node_seg_right.push_back(-1);
  g.n_nodes = static_cast<int>(g.node_x.size());
  return g;
}

namespace {

struct StepCoeffs {
  // per-node characteristic coefficients; left = interval [k-1,k], right = [k,k+1]
  std::vector<double> BL, BR;    // rho*a'/A
  std::vector<double> RL, RR;    // friction resistance r*dx (Pa per unit Q)
  double B_first = 0.0, B_last = 0.0;
  double R_first = 0.0, R_last = 0.0;
};

StepCoeffs make_coeffs(const PipelineParams& params, const SimulationGrid& g) {
  StepCoeffs c;
  int N = g.n_nodes;
  c.BL.assign(N, 0.0);
  c.BR.assign(N, 0.0);
  c.RL.assign(N, 0.0);
  c.RR.assign(N, 0.0);
  for (int k = 0; k < N; ++k) {
    int sl = g.node_seg_left[k], sr = g.node_seg_right[k];
    if (sl >= 0) {
      const auto& seg = params.segments[sl];
      c.BL[k] = params.rho * g.adj_speed[sl] / seg.area();
      c.RL[k] = 128.0 * params.rho * params.nu / (M_PI * std::pow(seg.diameter, 4)) * g.dx[sl];
    }
    if (sr >= 0) {
      const auto& seg = params.segments[sr];
      c.BR[k] = params.rho * g.adj_speed[sr] / seg.area();
      c.RR[k] = 128.0 * params.rho * params.nu / (M_PI * std::pow(seg.diameter, 4)) * g.dx[sr];
    }
  }
  c.B_first = c.BR[0];
  c.R_first = c.RR[0];
  c.B_last = c.BL[N - 1];
  c.R_last = c.RL[N - 1];
  return c;
}

// steady pressure profile for flow Qbar: orifice sets p(L), friction accumulates upstream
std::vector<double> steady_profile(const PipelineParams& params, const SimulationGrid& g,
                                   double Qbar, OutletBoundary outlet) {
  double pL = outlet == OutletBoundary::orifice && params.kv > 0.0
                  ? params.p_set + (Qbar / params.kv) * (Qbar / params.kv)
                  : params.p_set;
  int N = g.n_nodes;
  std::vector<double> p(N, pL);
  for (int k = N - 2; k >= 0; --k) {
    int s = g.node_seg_right[k];
    p[k] = p[k + 1] + friction_term(Qbar, params.segments[s], params.rho, params.nu) * g.dx[s];
  }
  return p;
}

// Advances the MOC state over n_steps and hands each completed row to
// `record(step, p, q)`.  Row 0 is the steady initial state with the first
// inlet sample imposed at the pump node.
template <typename Recorder>
void run_moc(const PipelineParams& params, const SimulationGrid& g, const Signal& inlet,
             size_t n_steps, OutletBoundary outlet, Recorder&& record) {
  const StepCoeffs c = make_coeffs(params, g);
  const int N = g.n_nodes;
  double Qbar = mean(inlet.samples);
  std::vector<double> p = steady_profile(params, g, Qbar, outlet);
  std::vector<double> q(N, outlet == OutletBoundary::closed_end ? 0.0 : Qbar);
  std::vector<double> pn(N), qn(N);
  q[0] = inlet.samples[0];
  record(size_t{0}, p, q);

  const double kv2 = params.kv * params.kv;
  for (size_t m = 1; m < n_steps; ++m) {
    // interior + junction nodes share one update: the junction case simply has
    // different left/right coefficients, which enforces continuity exactly
    for (int k = 1; k < N - 1; ++k) {
      double CP = p[k - 1] + c.BL[k] * q[k - 1] - c.RL[k] * q[k - 1];
      double CM = p[k + 1] - c.BR[k] * q[k + 1] + c.RR[k] * q[k + 1];
      double Q = (CP - CM) / (c.BL[k] + c.BR[k]);
      qn[k] = Q;
      pn[k] = CP - c.BL[k] * Q;
    }
    {  // pump end: imposed flow
      double CM = p[1] - c.B_first * q[1] + c.R_first * q[1];
      qn[0] = inlet.samples[m];
      pn[0] = CM + c.B_first * qn[0];
    }
    {  // valve end
      double CP = p[N - 2] + c.B_last * q[N - 2] - c.R_last * q[N - 2];
      if (outlet == OutletBoundary::closed_end) {
        qn[N - 1] = 0.0;
        pn[N - 1] = CP;
      } else {
        double head = CP - params.p_set;
        if (head <= 0.0) {
          qn[N - 1] = 0.0;  // sub-load pressure: valve passes nothing
          pn[N - 1] = CP;
        } else {
          double B = c.B_last;
          double Q = 0.5 * (-kv2 * B + std::sqrt(kv2 * kv2 * B * B + 4.0 * kv2 * head));
          qn[N - 1] = Q;
          pn[N - 1] = CP - B * Q;
        }
      }
    }
    p.swap(pn);
    q.swap(qn);
    if ((m & 1023) == 0 || m + 1 == n_steps) {
      if (!std::isfinite(p[0]) || !std::isfinite(p[N - 1]) || !std::isfinite(q[N / 2]))
        throw NumericError("MOC instability: non-finite state at step " + std::to_string(m));
    }
    record(m, p, q);
  }
}

size_t checked_steps(const PipelineParams& params, const SimulationGrid& g, const Signal& inlet,
                     double duration) {
  if (inlet.sample_rate * g.dt < 0.999999 || inlet.sample_rate * g.dt > 1.000001)
    throw ArgumentError("simulate: inlet sample rate must equal 1/dt");
  if (duration < 5.0 * g.travel_time())
    throw ArgumentError("simulate: duration must cover >= 5 acoustic travel times");
  size_t n_steps = static_cast<size_t>(std::llround(duration / g.dt));
  if (n_steps > inlet.size())
    throw ArgumentError("simulate: inlet flow shorter than requested duration");
  (void)params;
  return n_steps;
}

}  // namespace

PressureField simulate(const PipelineParams& params, const Signal& inlet_flow, double duration,
                       OutletBoundary outlet) {
  inlet_flow.validate();
  SimulationGrid g = build_grid(params, inlet_flow.sample_rate);
  size_t n_steps = checked_steps(params, g, inlet_flow, duration);
  if (n_steps * static_cast<size_t>(g.n_nodes) > 60'000'000)
    throw ArgumentError("simulate: field too large to store; use simulate_sensors");
  PressureField f;
  f.grid = g;
  f.n_steps = n_steps;
  f.p.resize(n_steps * g.n_nodes);
  f.q.resize(n_steps * g.n_nodes);
  run_moc(params, g, inlet_flow, n_steps, outlet,
          [&](size_t m, const std::vector<double>& p, const std::vector<double>& q) {
            std::copy(p.begin(), p.end(), f.p.begin() + m * g.n_nodes);
            std::copy(q.begin(), q.end(), f.q.begin() + m * g.n_nodes);
          });
  return f;
}

namespace {
struct Tap {
  int k0, k1;
  double w;
};
Tap locate(const SimulationGrid& g, double x) {
  if (x < 0.0 || x > g.node_x.back() * (1.0 + 1e-12))
    throw ArgumentError("sensor position outside pipeline");
  auto it = std::lower_bound(g.node_x.begin(), g.node_x.end(), x);
  int hi = static_cast<int>(it - g.node_x.begin());
  if (hi == 0) return {0, 0, 0.0};
  if (hi >= g.n_nodes) return {g.n_nodes - 1, g.n_nodes - 1, 0.0};
  int lo = hi - 1;
  double span = g.node_x[hi] - g.node_x[lo];
  double w = (x - g.node_x[lo]) / span;
  if (w < 1e-9) return {lo, lo, 0.0};
  if (w > 1.0 - 1e-9) return {hi, hi, 0.0};
  return {lo, hi, w};
}
}  // namespace

MultiChannelSignal simulate_sensors(const PipelineParams& params, const Signal& inlet_flow,
                                    double duration, const std::vector<double>& positions,
                                    OutletBoundary outlet) {
  inlet_flow.validate();
  SimulationGrid g = build_grid(params, inlet_flow.sample_rate);
  size_t n_steps = checked_steps(params, g, inlet_flow, duration);
  std::vector<Tap> taps;
  for (double x : positions) taps.push_back(locate(g, x));
  MultiChannelSignal out;
  out.channels.resize(positions.size());
  for (size_t j = 0; j < positions.size(); ++j) {
    out.channels[j].sample_rate = inlet_flow.sample_rate;
    out.channels[j].unit = "Pa";
    out.channels[j].channel_id = "p_x" + std::to_string(positions[j]);
    out.channels[j].samples.resize(n_steps);
  }
  run_moc(params, g, inlet_flow, n_steps, outlet,
          [&](size_t m, const std::vector<double>& p, const std::vector<double>&) {
            for (size_t j = 0; j < taps.size(); ++j) {
              const Tap& t = taps[j];
              out.channels[j].samples[m] =
                  t.w == 0.0 ? p[t.k0] : (1.0 - t.w) * p[t.k0] + t.w * p[t.k1];
            }
          });
  return out;
}

Signal sample_sensor(const PressureField& field, double x, const SimulationGrid& grid) {
  Tap t = locate(grid, x);
  Signal s;
  s.sample_rate = 1.0 / grid.dt;
  s.unit = "Pa";
  s.channel_id = "p_x" + std::to_string(x);
  s.samples.resize(field.n_steps);
  for (size_t m = 0; m < field.n_steps; ++m) {
    double a = field.p[m * grid.n_nodes + t.k0];
    double b = field.p[m * grid.n_nodes + t.k1];
    s.samples[m] = t.w == 0.0 ? a : (1.0 - t.w) * a + t.w * b;
  }
  return s;
}

}  // namespace pdx

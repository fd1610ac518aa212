#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "pdx/errors.hpp"
#include "pdx/moc.hpp"
#include "pdx/pump.hpp"

using namespace pdx;

namespace {

Signal constant_flow(double q, double rate, size_t n) {
  Signal s;
  s.sample_rate = rate;
  s.unit = "m3/s";
  s.samples.assign(n, q);
  return s;
}

// acoustic energy relative to a quiescent reference, integrated over cells
double field_energy(const PressureField& f, size_t step, const PipelineParams& params,
                    double p_ref, double q_ref) {
  const auto& g = f.grid;
  double E = 0.0;
  for (int k = 0; k + 1 < g.n_nodes; ++k) {
    int seg = g.node_seg_right[k];
    double A = params.segments[seg].area();
    double a = g.adj_speed[seg];
    double rho = params.rho;
    double pm = 0.5 * (f.pressure(step, k) + f.pressure(step, k + 1)) - p_ref;
    double qm = 0.5 * (f.flow(step, k) + f.flow(step, k + 1)) - q_ref;
    E += g.dx[seg] * (A * pm * pm / (2.0 * rho * a * a) + rho * qm * qm / (2.0 * A));
  }
  return E;
}

PipelineParams frictionless(PipelineParams p) {
  p.nu = 1e-30;  // numerically indistinguishable from zero, passes validation
  return p;
}

}  // namespace

TEST_CASE("friction_term formula") {
  PipeSegment seg{1.0, 0.02, 1000.0};
  CHECK(friction_term(0.0, seg, 870.0, 4e-5) == 0.0);
  double f1 = friction_term(1e-3, seg, 870.0, 4e-5);
  CHECK(f1 == doctest::Approx(8861.8).epsilon(1e-3));  // 128*870*4e-5*1e-3/(pi*1.6e-7)
  CHECK(friction_term(2e-3, seg, 870.0, 4e-5) == doctest::Approx(2.0 * f1).epsilon(1e-12));
}

TEST_CASE("build_grid adjusts wave speeds within tolerance") {
  auto params = PipelineParams::default_plant();
  auto g = build_grid(params, 51200.0);
  REQUIRE(g.cells.size() == 3);
  CHECK(g.cells[0] == 298);
  CHECK(g.cells[1] == 60);
  CHECK(g.cells[2] == 66);
  CHECK(g.adj_speed[0] == doctest::Approx(1022.797).epsilon(1e-5));
  CHECK(std::abs(g.adj_speed[0] - 1022.9) / 1022.9 < 2e-4);
  CHECK(g.n_nodes == 298 + 60 + 66 + 1);
  CHECK(g.node_x.back() == doctest::Approx(params.total_length()).epsilon(1e-12));
  // both sensors sit inside segment 1
  for (double x : params.sensors) CHECK(x < params.segments[0].length);
}

TEST_CASE("build_grid exact division and error cases") {
  PipelineParams p;
  p.segments = {{10.0, 0.02, 1000.0}};
  p.sensors = {};
  auto g = build_grid(p, 51200.0);  // 10 / (1000/51200) = 512 exactly
  CHECK(g.cells[0] == 512);
  CHECK(g.adj_speed[0] == doctest::Approx(1000.0).epsilon(1e-14));

  PipelineParams tiny = p;
  tiny.segments[0].length = 0.004;  // shorter than one cell
  CHECK_THROWS_AS(build_grid(tiny, 51200.0), DiscretizationError);

  PipelineParams awkward = p;
  awkward.segments[0].length = 0.0275;  // ~1.41 cells -> 41% adjustment
  CHECK_THROWS_AS(build_grid(awkward, 51200.0), DiscretizationError);
}

TEST_CASE("steady state reproduces the analytic friction profile and orifice law") {
  auto params = PipelineParams::default_plant();
  double qbar = 6.667e-4;
  double dur = 0.06;
  auto inlet = constant_flow(qbar, 51200.0, static_cast<size_t>(dur * 51200) + 8);
  auto f = simulate(params, inlet, dur);
  auto& g = f.grid;
  size_t last = f.n_steps - 1;

  double pL = f.pressure(last, g.n_nodes - 1);
  CHECK(pL == doctest::Approx(params.p_set + std::pow(qbar / params.kv, 2)).epsilon(1e-3));

  // p(x) - p(L) equals the accumulated laminar drop, and pressures stay positive
  double drop = 0.0;
  for (int k = g.n_nodes - 2; k >= 0; --k) {
    int seg = g.node_seg_right[k];
    drop += friction_term(qbar, params.segments[seg], params.rho, params.nu) * g.dx[seg];
    double lhs = f.pressure(last, k) - pL;
    CHECK(lhs == doctest::Approx(drop).epsilon(1e-3));
  }
  for (int k = 0; k < g.n_nodes; ++k) CHECK(f.pressure(last, k) > 0.0);
}

TEST_CASE("impulse travel time matches the characteristic speed") {
  PipelineParams p = frictionless(PipelineParams::default_plant());
  p.segments = {{10.0, 0.02, 1000.0}};
  p.sensors = {};
  double rate = 51200.0;
  size_t n = 4096;
  auto inlet = constant_flow(0.0, rate, n);
  size_t m0 = 100;
  inlet.samples[m0] = 1e-4;  // one-sample blip
  auto f = simulate(p, inlet, n / rate, OutletBoundary::closed_end);
  int N = f.grid.n_nodes;
  size_t arrival = 0;
  for (size_t m = 0; m < f.n_steps; ++m) {
    if (std::abs(f.pressure(m, N - 1) - p.p_set) > 1.0) {
      arrival = m;
      break;
    }
  }
  // L/a' = 512 steps after injection, within one dt
  CHECK(arrival >= m0 + 512 - 1);
  CHECK(arrival <= m0 + 512 + 1);
}

TEST_CASE("closed-end frictionless pipeline conserves acoustic energy") {
  PipelineParams p = frictionless(PipelineParams::default_plant());
  double rate = 51200.0;
  auto grid = build_grid(p, rate);
  double T = grid.travel_time();
  size_t pulse_len = 256;
  size_t n = static_cast<size_t>(11.0 * T * rate) + pulse_len;
  auto inlet = constant_flow(0.0, rate, n);
  for (size_t i = 0; i < pulse_len; ++i)
    inlet.samples[i] = 1e-4 * 0.5 * (1.0 - std::cos(2.0 * M_PI * i / pulse_len));
  auto f = simulate(p, inlet, n / rate, OutletBoundary::closed_end);

  size_t start = pulse_len + 10;
  double e0 = field_energy(f, start, p, p.p_set, 0.0);
  REQUIRE(e0 > 0.0);
  size_t horizon = start + static_cast<size_t>(10.0 * T * rate);
  REQUIRE(horizon < f.n_steps);
  for (size_t m = start; m < horizon; m += 97) {
    double e = field_energy(f, m, p, p.p_set, 0.0);
    CHECK(std::abs(e - e0) / e0 < 5e-3);
  }
  double e_end = field_energy(f, horizon, p, p.p_set, 0.0);
  CHECK(std::abs(e_end - e0) / e0 < 5e-3);
}

TEST_CASE("junction nodes satisfy both compatibility equations") {
  auto params = PipelineParams::default_plant();
  PumpGeometry pump;
  auto src = ideal_flow_ripple(pump, 51200.0, 12);
  auto f = simulate(params, src, 0.06);
  auto& g = f.grid;

  // junction node indices: cumulative cell counts
  std::vector<int> junctions{g.cells[0], g.cells[0] + g.cells[1]};
  for (int k : junctions) {
    REQUIRE(g.node_seg_left[k] != g.node_seg_right[k]);
    const auto& segL = params.segments[g.node_seg_left[k]];
    const auto& segR = params.segments[g.node_seg_right[k]];
    double BL = params.rho * g.adj_speed[g.node_seg_left[k]] / segL.area();
    double BR = params.rho * g.adj_speed[g.node_seg_right[k]] / segR.area();
    double rL = friction_term(1.0, segL, params.rho, params.nu) * g.dx[g.node_seg_left[k]];
    double rR = friction_term(1.0, segR, params.rho, params.nu) * g.dx[g.node_seg_right[k]];
    for (size_t m = 1; m < f.n_steps; m += 53) {
      double CP = f.pressure(m - 1, k - 1) + BL * f.flow(m - 1, k - 1) - rL * f.flow(m - 1, k - 1);
      double CM = f.pressure(m - 1, k + 1) - BR * f.flow(m - 1, k + 1) + rR * f.flow(m - 1, k + 1);
      // the single stored (p, Q) pair satisfies both characteristic equations
      CHECK(std::abs(f.pressure(m, k) - (CP - BL * f.flow(m, k))) < 1e-6 * params.p_set);
      CHECK(std::abs(f.pressure(m, k) - (CM + BR * f.flow(m, k))) < 1e-6 * params.p_set);
    }
  }
}

TEST_CASE("doubling the duration reproduces the first half bit-identically") {
  auto params = PipelineParams::default_plant();
  PumpGeometry pump;
  auto src = ideal_flow_ripple(pump, 51200.0, 24);
  auto f1 = simulate(params, src, 0.06);
  auto f2 = simulate(params, src, 0.12);
  for (size_t m = 0; m < f1.n_steps; m += 17)
    for (int k = 0; k < f1.grid.n_nodes; k += 11) {
      CHECK(f1.pressure(m, k) == f2.pressure(m, k));
      CHECK(f1.flow(m, k) == f2.flow(m, k));
    }
}

TEST_CASE("sample_sensor interpolation") {
  auto params = PipelineParams::default_plant();
  PumpGeometry pump;
  auto src = ideal_flow_ripple(pump, 51200.0, 12);
  auto f = simulate(params, src, 0.06);
  auto& g = f.grid;

  auto exact = sample_sensor(f, g.node_x[5], g);
  for (size_t m = 0; m < f.n_steps; m += 31) CHECK(exact.samples[m] == f.pressure(m, 5));

  double mid = 0.5 * (g.node_x[7] + g.node_x[8]);
  auto interp = sample_sensor(f, mid, g);
  for (size_t m = 0; m < f.n_steps; m += 31)
    CHECK(interp.samples[m] ==
          doctest::Approx(0.5 * (f.pressure(m, 7) + f.pressure(m, 8))).epsilon(1e-12));

  CHECK_THROWS_AS(sample_sensor(f, params.total_length() + 1.0, g), ArgumentError);
}

TEST_CASE("streaming sensors match the stored field") {
  auto params = PipelineParams::default_plant();
  PumpGeometry pump;
  auto src = ideal_flow_ripple(pump, 51200.0, 12);
  auto f = simulate(params, src, 0.06);
  auto mc = simulate_sensors(params, src, 0.06, params.sensors);
  REQUIRE(mc.channels.size() == 2);
  for (size_t j = 0; j < 2; ++j) {
    auto ref = sample_sensor(f, params.sensors[j], f.grid);
    REQUIRE(ref.size() == mc.channels[j].size());
    for (size_t m = 0; m < ref.size(); ++m) CHECK(ref.samples[m] == mc.channels[j].samples[m]);
  }
}

TEST_CASE("argument validation") {
  auto params = PipelineParams::default_plant();
  auto inlet = constant_flow(1e-4, 51200.0, 512);
  // too short for the washout requirement
  CHECK_THROWS_AS(simulate(params, inlet, 512.0 / 51200.0), ArgumentError);
  PumpGeometry pump;
  auto src = ideal_flow_ripple(pump, 51200.0, 2);
  // longer than the provided inlet signal
  CHECK_THROWS_AS(simulate(params, src, 1.0), ArgumentError);
  // full-field storage guard for long runs
  auto longsrc = ideal_flow_ripple(pump, 51200.0, 170);
  CHECK_THROWS_AS(simulate(params, longsrc, 10.0), ArgumentError);
}

TEST_CASE("pipeline params JSON round trip") {
  auto p = PipelineParams::default_plant();
  auto q = PipelineParams::from_json(p.to_json());
  REQUIRE(q.segments.size() == 3);
  for (size_t i = 0; i < 3; ++i) {
    CHECK(q.segments[i].length == p.segments[i].length);
    CHECK(q.segments[i].diameter == p.segments[i].diameter);
    CHECK(q.segments[i].wave_speed == p.segments[i].wave_speed);
  }
  CHECK(q.sensors == p.sensors);
  CHECK(q.kv == p.kv);
  CHECK(q.p_set == p.p_set);

  PipelineParams bad = p;
  bad.sensors = {100.0};
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = p;
  bad.kv = 0.0;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
}

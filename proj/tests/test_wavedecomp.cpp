#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "pdx/errors.hpp"
#include "pdx/moc.hpp"
#include "pdx/pump.hpp"
#include "pdx/wavedecomp.hpp"

using namespace pdx;

namespace {

constexpr double kFs = 51200.0;

InverseProblem healthy_problem(int n_revs, double t0, double t1) {
  auto params = PipelineParams::default_plant();
  PumpGeometry g;
  auto inlet = ideal_flow_ripple(g, kFs, n_revs);
  auto meas = simulate_sensors(params, inlet, n_revs * 0.06, params.sensors);
  InverseProblem prob;
  prob.params = params;
  prob.sensor_pressures = {{params.sensors[0], meas.channels[0]},
                           {params.sensors[1], meas.channels[1]}};
  prob.t0 = t0;
  prob.t1 = t1;
  return prob;
}

// pressure at position x for a steady flow qstar: valve head plus the
// laminar friction drop accumulated between x and the line end
double steady_pressure_at(const PipelineParams& params, double x, double qstar) {
  double drop = 0.0, acc = 0.0;
  for (const auto& seg : params.segments) {
    double lo = std::max(x, acc);
    double hi = acc + seg.length;
    if (hi > lo) drop += friction_term(qstar, seg, params.rho, params.nu) * (hi - lo);
    acc = hi;
  }
  double head = qstar / params.kv;
  return params.p_set + head * head + drop;
}

Signal constant_signal(double value, size_t n) {
  Signal s;
  s.sample_rate = kFs;
  s.unit = "Pa";
  s.samples.assign(n, value);
  return s;
}

// count maximal runs (>= 3 samples) that fall more than 10% of the mean flow
// below it; healthy ripple stays within ~2.5% so only fault dips register
int count_dips(const Signal& q, double t_begin, double t_end) {
  size_t i0 = static_cast<size_t>(std::llround((t_begin - q.start_time) * q.sample_rate));
  size_t i1 = static_cast<size_t>(std::llround((t_end - q.start_time) * q.sample_rate));
  double mean = 0.0;
  for (size_t i = i0; i < i1; ++i) mean += q.samples[i];
  mean /= static_cast<double>(i1 - i0);
  double thr = 0.9 * mean;
  int dips = 0, run = 0;
  for (size_t i = i0; i < i1; ++i) {
    if (q.samples[i] < thr) {
      ++run;
    } else {
      if (run >= 3) ++dips;
      run = 0;
    }
  }
  if (run >= 3) ++dips;
  return dips;
}

double rmse_vs(const Signal& qhat, const Signal& truth) {
  size_t i0 = static_cast<size_t>(std::llround(qhat.start_time * qhat.sample_rate));
  double se = 0.0;
  for (size_t i = 0; i < qhat.size(); ++i) {
    double d = qhat.samples[i] - truth.samples[i0 + i];
    se += d * d;
  }
  return std::sqrt(se / static_cast<double>(qhat.size()));
}

double peak_to_peak(const Signal& s, size_t i0, size_t n) {
  double mn = s.samples[i0], mx = s.samples[i0];
  for (size_t i = i0; i < i0 + n; ++i) {
    mn = std::min(mn, s.samples[i]);
    mx = std::max(mx, s.samples[i]);
  }
  return mx - mn;
}

}  // namespace

TEST_CASE("inverse problem validation") {
  auto prob = healthy_problem(2, 0.02, 0.1);

  auto bad = prob;
  bad.sensor_pressures.clear();
  CHECK_THROWS_AS(bad.validate(), ValidationError);

  bad = prob;
  bad.sensor_pressures[0].first = 9.5;  // line is 8.772 m long
  CHECK_THROWS_AS(bad.validate(), ValidationError);

  bad = prob;
  bad.sensor_pressures[1].second.sample_rate = 48000.0;
  CHECK_THROWS_AS(bad.validate(), ValidationError);

  bad = prob;
  bad.t1 = 1.0;  // record ends at 0.12 s
  CHECK_THROWS_AS(bad.validate(), ValidationError);

  bad = prob;
  bad.t1 = bad.t0;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
}

TEST_CASE("steady flow from constant sensor pressures") {
  auto params = PipelineParams::default_plant();
  const double qstar = 6.6e-4;
  const size_t n = 4096;

  InverseProblem prob;
  prob.params = params;
  prob.sensor_pressures = {
      {params.sensors[0], constant_signal(steady_pressure_at(params, params.sensors[0], qstar), n)},
      {params.sensors[1], constant_signal(steady_pressure_at(params, params.sensors[1], qstar), n)}};
  prob.t0 = 0.0;
  prob.t1 = static_cast<double>(n) / kFs;

  double qbar = steady_flow_from_means(prob);
  CHECK(qbar == doctest::Approx(qstar).epsilon(1e-6));

  // the full estimator returns a flat trace at the same level
  auto qhat = estimate_flow_wave_decomposition(prob);
  CHECK(qhat.unit == "m3/s");
  for (double v : qhat.samples) CHECK(std::abs(v - qstar) < 1e-9 * qstar);

  // pressures below the relief setting leave no head to push flow through
  auto dead = prob;
  for (auto& sp : dead.sensor_pressures)
    for (double& v : sp.second.samples) v = 9.0e6;  // p_set is 9.484e6
  CHECK_THROWS_AS(steady_flow_from_means(dead), IllPosedError);
}

TEST_CASE("healthy round trip recovers the inlet flow") {
  // 12 revolutions; the first six serve as washout for the start-up transient
  // (the valve reflects ~0.42 of each arrival, so 0.36 s leaves ~6e-9 of it)
  auto prob = healthy_problem(12, 0.36, 0.60);
  auto qhat = estimate_flow_wave_decomposition(prob);

  PumpGeometry g;
  auto inlet = ideal_flow_ripple(g, kFs, 12);

  size_t n = static_cast<size_t>(std::llround((prob.t1 - prob.t0) * kFs));
  size_t i0 = static_cast<size_t>(std::llround(qhat.start_time * kFs));
  CHECK(qhat.sample_rate == kFs);
  CHECK(qhat.channel_id == "q_hat_wave");
  // causal margin: one transit pump -> far sensor (2.5895 m at 1022.9 m/s)
  // is 130 samples at 51.2 kHz, plus one for rounding
  CHECK(qhat.size() == n - 2 * 131);
  CHECK(qhat.start_time == doctest::Approx(0.36 + 131.0 / kFs).epsilon(1e-12));

  double p2p = peak_to_peak(inlet, i0, qhat.size());
  CHECK(p2p == doctest::Approx(3.158e-5).epsilon(0.01));  // ~4.7% of the 6.67e-4 mean
  double err = rmse_vs(qhat, inlet);
  // measured 0.243% of peak-to-peak; the requirement is 2%
  CHECK(err < 0.02 * p2p);
  CHECK(err < 0.004 * p2p);  // guard against silent regressions

  // mean flow must match the steady operating point
  double hm = 0.0;
  for (double v : qhat.samples) hm += v;
  hm /= static_cast<double>(qhat.size());
  double qbar = steady_flow_from_means(prob);
  CHECK(std::abs(hm - qbar) < 0.01 * qbar);
}

TEST_CASE("estimator is linear in the ripple") {
  auto prob = healthy_problem(12, 0.36, 0.60);
  auto q1 = estimate_flow_wave_decomposition(prob);

  auto scaled = prob;
  for (auto& sp : scaled.sensor_pressures) {
    double m = 0.0;
    for (double v : sp.second.samples) m += v;
    m /= static_cast<double>(sp.second.size());
    for (double& v : sp.second.samples) v = m + 2.0 * (v - m);
  }
  auto q2 = estimate_flow_wave_decomposition(scaled);

  REQUIRE(q2.size() == q1.size());
  double m1 = 0.0, m2 = 0.0;
  for (double v : q1.samples) m1 += v;
  for (double v : q2.samples) m2 += v;
  m1 /= static_cast<double>(q1.size());
  m2 /= static_cast<double>(q2.size());
  double ac_peak = 0.0, worst = 0.0;
  for (size_t i = 0; i < q1.size(); ++i) {
    double a = q1.samples[i] - m1;
    double b = q2.samples[i] - m2;
    ac_peak = std::max(ac_peak, std::abs(a));
    worst = std::max(worst, std::abs(b - 2.0 * a));
  }
  CHECK(worst < 1e-9 * ac_peak);  // doubling the ripple doubles the estimate
}

TEST_CASE("fault dips survive the round trip") {
  auto params = PipelineParams::default_plant();
  PumpGeometry g;

  struct Case {
    HealthState h;
    int dips_in_three_revs;
  };
  // dips per revolution: H none, S one, C two; counted over [0.39, 0.57),
  // three whole revolutions clear of the causal margins
  for (auto c : {Case{HealthState::H, 0}, Case{HealthState::S, 3}, Case{HealthState::C, 6}}) {
    CAPTURE(to_string(c.h));
    auto src = generate_source(g, default_fault(c.h), kFs, 12);
    auto meas = simulate_sensors(params, src.signal, 12 * 0.06, params.sensors);
    InverseProblem prob;
    prob.params = params;
    prob.sensor_pressures = {{params.sensors[0], meas.channels[0]},
                             {params.sensors[1], meas.channels[1]}};
    prob.t0 = 0.36;
    prob.t1 = 0.60;
    auto qhat = estimate_flow_wave_decomposition(prob);
    CHECK(count_dips(qhat, 0.39, 0.57) == c.dips_in_three_revs);

    // the faulted waveforms also reconstruct well: measured 0.63% (S) and
    // 0.82% (C) of their own peak-to-peak
    size_t i0 = static_cast<size_t>(std::llround(qhat.start_time * kFs));
    double p2p = peak_to_peak(src.signal, i0, qhat.size());
    CHECK(rmse_vs(qhat, src.signal) < 0.02 * p2p);
  }
}

TEST_CASE("wave decomposition rejects unusable sensor layouts") {
  auto prob = healthy_problem(2, 0.02, 0.1);

  auto one = prob;
  one.sensor_pressures.resize(1);
  CHECK_THROWS_AS(estimate_flow_wave_decomposition(one), ArgumentError);

  // second sensor moved past the first junction (segment 0 ends at 5.953 m)
  auto far = prob;
  far.sensor_pressures[1].first = 6.5;
  CHECK_THROWS_AS(estimate_flow_wave_decomposition(far), IllPosedError);

  // sensors under two grid cells apart cannot separate the two directions
  auto close = prob;
  close.sensor_pressures[1].first = close.sensor_pressures[0].first + 0.02;
  CHECK_THROWS_AS(estimate_flow_wave_decomposition(close), IllPosedError);

  // window shorter than twice the causal margin (131 samples a side)
  auto brief = prob;
  brief.t0 = 0.02;
  brief.t1 = 0.02 + 250.0 / kFs;
  CHECK_THROWS_AS(estimate_flow_wave_decomposition(brief), IllPosedError);
}

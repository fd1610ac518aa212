#include "pdx/wavedecomp.hpp"

#include <algorithm>
#include <cmath>
#include <complex>

#include "pdx/errors.hpp"
#include "pdx/fft.hpp"

namespace pdx {

void InverseProblem::validate() const {
  params.validate();
  if (sensor_pressures.empty()) throw ValidationError("inverse problem: no sensor pressures");
  double L = params.total_length();
  double fs = sensor_pressures.front().second.sample_rate;
  for (const auto& [x, s] : sensor_pressures) {
    s.validate();
    if (x <= 0.0 || x >= L)
      throw ValidationError("inverse problem: sensor position outside the line");
    if (s.sample_rate != fs)
      throw ValidationError("inverse problem: sensors disagree on sample rate");
    if (t0 < s.start_time - 1e-12 ||
        t1 > s.start_time + s.duration() + 1e-12)
      throw ValidationError("inverse problem: estimation window outside the record");
  }
  if (!(t1 > t0)) throw ValidationError("inverse problem: empty estimation window");
}

namespace {

std::vector<double> window_samples(const Signal& s, double t0, size_t n) {
  size_t i0 = static_cast<size_t>(std::llround((t0 - s.start_time) * s.sample_rate));
  return {s.samples.begin() + static_cast<long>(i0),
          s.samples.begin() + static_cast<long>(i0 + n)};
}

}  // namespace

double steady_flow_from_means(const InverseProblem& prob) {
  prob.validate();
  // downstream-most sensor carries the shortest friction path to the valve
  const auto* best = &prob.sensor_pressures.front();
  for (const auto& sp : prob.sensor_pressures)
    if (sp.first > best->first) best = &sp;
  double fs = best->second.sample_rate;
  size_t n = static_cast<size_t>(std::llround((prob.t1 - prob.t0) * fs));
  auto w = window_samples(best->second, prob.t0, n);
  double pbar = 0.0;
  for (double v : w) pbar += v;
  pbar /= static_cast<double>(w.size());

  // friction path lengths from the sensor to the valve, per segment
  const auto& segs = prob.params.segments;
  std::vector<double> path(segs.size(), 0.0);
  double x = best->first;
  double acc = 0.0;
  for (size_t s = 0; s < segs.size(); ++s) {
    double lo = acc, hi = acc + segs[s].length;
    path[s] = std::max(0.0, hi - std::max(lo, x));
    acc = hi;
  }

  double head = pbar - prob.params.p_set;
  if (head <= 0.0) throw IllPosedError("mean sensor pressure does not exceed the valve setting");
  double Q = prob.params.kv * std::sqrt(head);
  for (int iter = 0; iter < 50; ++iter) {
    double drop = 0.0, ddrop = 0.0;
    for (size_t s = 0; s < segs.size(); ++s) {
      drop += friction_term(Q, segs[s], prob.params.rho, prob.params.nu) * path[s];
      ddrop += friction_term(1.0, segs[s], prob.params.rho, prob.params.nu) * path[s];
    }
    double arg = head - drop;
    if (arg <= 0.0) throw IllPosedError("friction drop exceeds the available head");
    double g = Q - prob.params.kv * std::sqrt(arg);
    double gp = 1.0 + prob.params.kv * ddrop / (2.0 * std::sqrt(arg));
    double Qn = Q - g / gp;
    if (std::abs(Qn - Q) <= 1e-16 * std::max(1e-6, std::abs(Q))) {
      Q = Qn;
      break;
    }
    Q = Qn;
  }
  return Q;
}

Signal estimate_flow_wave_decomposition(const InverseProblem& prob) {
  prob.validate();
  if (prob.sensor_pressures.size() < 2)
    throw ArgumentError("wave decomposition needs two sensors");

  // two sensors, ordered by position
  auto sensors = prob.sensor_pressures;
  std::sort(sensors.begin(), sensors.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  double x1 = sensors[0].first, x2 = sensors[1].first;
  const Signal& s1 = sensors[0].second;
  const Signal& s2 = sensors[1].second;
  double fs = s1.sample_rate;

  double L0 = prob.params.segments.front().length;
  if (x1 >= L0 || x2 >= L0)
    throw IllPosedError("wave decomposition: both sensors must sit in the pump-side segment");

  auto grid = build_grid(prob.params, fs);
  if (x2 - x1 < 2.0 * grid.dx[0])
    throw IllPosedError("wave decomposition: sensors are co-located (under two grid cells apart)");

  size_t n = static_cast<size_t>(std::llround((prob.t1 - prob.t0) * fs));
  auto w1 = window_samples(s1, prob.t0, n);
  auto w2 = window_samples(s2, prob.t0, n);
  auto P1 = rfft(w1);
  auto P2 = rfft(w2);

  // Invert the discretized line, not the continuum: on the Courant lattice the
  // kernel propagates p_k = F mu^k + G mu^-k with q = (F mu^k - G mu^-k)/Zd,
  // where z = e^{i w dt} and, from the two characteristic updates,
  //   Zd^2 = (B^2 z^2 - (B-R)^2) / (z^2 - 1),   mu = (Zd + B - R)/(z (Zd + B)),
  // B = rho a'/A and R the per-cell friction resistance.  This reproduces the
  // solver's own dispersion exactly, so the round trip is limited only by the
  // window, not by the scheme.
  const auto& seg = prob.params.segments.front();
  double A = seg.area();
  double a = grid.adj_speed[0];
  double B = prob.params.rho * a / A;
  double R = 128.0 * prob.params.rho * prob.params.nu /
             (M_PI * std::pow(seg.diameter, 4)) * grid.dx[0];
  double dt = 1.0 / fs;

  // sensors sampled by linear interpolation between lattice nodes
  double u1 = x1 / grid.dx[0], u2 = x2 / grid.dx[0];
  double k1 = std::floor(u1), k2 = std::floor(u2);
  double f1 = u1 - k1, f2 = u2 - k2;

  std::vector<std::complex<double>> Q(P1.size(), 0.0);
  for (size_t k = 1; k < Q.size(); ++k) {
    double w = 2.0 * M_PI * static_cast<double>(k) * fs / static_cast<double>(n);
    std::complex<double> z = std::exp(std::complex<double>(0.0, w * dt));
    std::complex<double> z2 = z * z;
    if (std::abs(z2 - 1.0) < 1e-9) continue;  // Nyquist bin
    std::complex<double> zd = std::sqrt((B * B * z2 - (B - R) * (B - R)) / (z2 - 1.0));
    std::complex<double> mu = (zd + B - R) / (z * (zd + B));
    if (std::abs(mu) > 1.0) {  // keep the decaying branch forward
      zd = -zd;
      mu = (zd + B - R) / (z * (zd + B));
    }
    std::complex<double> mu_k1 = std::pow(mu, k1), mu_k2 = std::pow(mu, k2);
    std::complex<double> w1p = (1.0 - f1) + f1 * mu, w1m = (1.0 - f1) + f1 / mu;
    std::complex<double> w2p = (1.0 - f2) + f2 * mu, w2m = (1.0 - f2) + f2 / mu;
    std::complex<double> m11 = mu_k1 * w1p, m12 = w1m / mu_k1;
    std::complex<double> m21 = mu_k2 * w2p, m22 = w2m / mu_k2;
    std::complex<double> det = m11 * m22 - m12 * m21;  // ~ -2 sinh(gamma (x2-x1))
    // half-wave resonances of the sensor span make the split ill-conditioned;
    // those bins sit off the pump harmonics, so dropping them loses ~nothing
    if (std::abs(det) < 0.05) continue;
    std::complex<double> F = (P1[k] * m22 - P2[k] * m12) / det;
    std::complex<double> G = (P2[k] * m11 - P1[k] * m21) / det;
    Q[k] = (F - G) / zd;  // at the pump node mu^0 = 1
  }
  auto qt = irfft(Q, n);

  double qbar = steady_flow_from_means(prob);
  // the circular spectrum cannot be causal near the window edges: drop one
  // acoustic transit between the pump and the far sensor on each side
  size_t margin = static_cast<size_t>(std::ceil(x2 / a * fs)) + 1;
  if (2 * margin >= n) throw IllPosedError("estimation window shorter than the causal margin");

  Signal out;
  out.sample_rate = fs;
  out.start_time = prob.t0 + static_cast<double>(margin) / fs;
  out.unit = "m3/s";
  out.channel_id = "q_hat_wave";
  out.samples.assign(qt.begin() + static_cast<long>(margin),
                     qt.end() - static_cast<long>(margin));
  for (double& v : out.samples) v += qbar;
  return out;
}

}  // namespace pdx

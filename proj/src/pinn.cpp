#include "pdx/pinn.hpp"

#include <cblas.h>
#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <string>
#include <utility>
#include <vector>

#include "pdx/errors.hpp"
#include "pdx/moc.hpp"
#include "pdx/rng.hpp"

extern "C" void dposv_(const char* uplo, const int* n, const int* nrhs, double* a, const int* lda,
                       double* b, const int* ldb, int* info);

namespace pdx {

void PinnConfig::validate() const {
  if (hidden.empty()) throw ArgumentError("pinn: at least one hidden layer");
  for (int h : hidden)
    if (h <= 0) throw ArgumentError("pinn: hidden widths must be positive");
  if (n_interior <= 0 || n_boundary <= 0 || n_data <= 0)
    throw ArgumentError("pinn: collocation counts must be positive");
  if (!(w_data > 0.0 && w_pde > 0.0 && w_bc > 0.0))
    throw ArgumentError("pinn: loss weights must be positive");
  if (iterations <= 0) throw ArgumentError("pinn: training budget must be positive");
  if (!(learning_rate > 0.0)) throw ArgumentError("pinn: learning rate must be positive");
  if (fd_dx < 0.0 || fd_dt < 0.0) throw ArgumentError("pinn: stencil steps must not be negative");
  if (!(freq_scale_t > 0.0 && freq_scale_x > 0.0))
    throw ArgumentError("pinn: frequency premultipliers must be positive");
}

namespace {

// Plain fully connected net in double precision, sine activations on the
// hidden layers (the fields are band-limited oscillations, and sines let the
// first layer act as a bank of traveling-wave features).
struct SineMlp {
  std::vector<int> dims;  // {2, hidden..., 2}
  std::vector<std::vector<double>> W, b, gW, gb;        // row-major (out x in)
  std::vector<std::vector<double>> mW, vW, mb, vb;      // Adam moments

  // workspace: activations A[0..L] and pre-activations Z[1..L]
  std::vector<std::vector<double>> A, Z, dA;
  int cap = 0;

  explicit SineMlp(const std::vector<int>& hidden, Rng& rng) {
    dims.push_back(2);
    for (int h : hidden) dims.push_back(h);
    dims.push_back(2);
    size_t L = dims.size() - 1;
    W.resize(L); b.resize(L); gW.resize(L); gb.resize(L);
    mW.resize(L); vW.resize(L); mb.resize(L); vb.resize(L);
    for (size_t l = 0; l < L; ++l) {
      int nin = dims[l], nout = dims[l + 1];
      double bound = std::sqrt(6.0 / nin);
      W[l].resize(static_cast<size_t>(nout) * nin);
      for (double& w : W[l]) w = rng.uniform(-bound, bound);
      b[l].assign(nout, 0.0);
      gW[l].assign(W[l].size(), 0.0); gb[l].assign(nout, 0.0);
      mW[l].assign(W[l].size(), 0.0); vW[l].assign(W[l].size(), 0.0);
      mb[l].assign(nout, 0.0); vb[l].assign(nout, 0.0);
    }
    A.resize(L + 1); Z.resize(L + 1); dA.resize(L + 1);
  }

  void reserve(int n) {
    if (n <= cap) return;
    cap = n;
    for (size_t l = 0; l < dims.size(); ++l) {
      A[l].resize(static_cast<size_t>(n) * dims[l]);
      Z[l].resize(static_cast<size_t>(n) * dims[l]);
      dA[l].resize(static_cast<size_t>(n) * dims[l]);
    }
  }

  // X is n rows of (scaled x, scaled t); leaves activations in place
  void forward(const double* X, int n) {
    reserve(n);
    std::copy(X, X + static_cast<size_t>(n) * 2, A[0].begin());
    size_t L = dims.size() - 1;
    for (size_t l = 0; l < L; ++l) {
      int nin = dims[l], nout = dims[l + 1];
      cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasTrans, n, nout, nin, 1.0, A[l].data(), nin,
                  W[l].data(), nin, 0.0, Z[l + 1].data(), nout);
      double* z = Z[l + 1].data();
      const double* bias = b[l].data();
      for (int r = 0; r < n; ++r)
        for (int c = 0; c < nout; ++c) z[static_cast<size_t>(r) * nout + c] += bias[c];
      double* a = A[l + 1].data();
      size_t total = static_cast<size_t>(n) * nout;
      if (l + 1 < L) {
        for (size_t i = 0; i < total; ++i) a[i] = std::sin(z[i]);
      } else {
        std::copy(z, z + total, a);
      }
    }
  }

  const double* out() const { return A.back().data(); }
  const double* features() const { return A[dims.size() - 2].data(); }

  // dOut is n x 2; accumulates into gW/gb (cleared here first)
  void backward(const double* dOut, int n) {
    size_t L = dims.size() - 1;
    for (size_t l = 0; l < L; ++l) {
      std::fill(gW[l].begin(), gW[l].end(), 0.0);
      std::fill(gb[l].begin(), gb[l].end(), 0.0);
    }
    std::copy(dOut, dOut + static_cast<size_t>(n) * 2, dA[L].begin());
    for (size_t l = L; l-- > 0;) {
      int nin = dims[l], nout = dims[l + 1];
      double* dz = dA[l + 1].data();  // becomes dZ in place
      if (l + 1 < L) {
        const double* z = Z[l + 1].data();
        size_t total = static_cast<size_t>(n) * nout;
        for (size_t i = 0; i < total; ++i) dz[i] *= std::cos(z[i]);
      }
      cblas_dgemm(CblasRowMajor, CblasTrans, CblasNoTrans, nout, nin, n, 1.0, dz, nout,
                  A[l].data(), nin, 0.0, gW[l].data(), nin);
      for (int r = 0; r < n; ++r)
        for (int c = 0; c < nout; ++c) gb[l][c] += dz[static_cast<size_t>(r) * nout + c];
      if (l > 0)
        cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, n, nin, nout, 1.0, dz, nout,
                    W[l].data(), nin, 0.0, dA[l].data(), nin);
    }
  }

  // first_lr_mult: the first layer holds the feature frequencies; a full-rate
  // Adam step shifts them by whole radians across the window and wrecks the
  // spectral seeding, so that layer moves on a much shorter leash.
  void adam_step(double lr, int t, double first_lr_mult) {
    const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    double bc1 = 1.0 - std::pow(b1, t), bc2 = 1.0 - std::pow(b2, t);
    auto update = [&](std::vector<double>& p, std::vector<double>& g, std::vector<double>& m,
                      std::vector<double>& v, double rate) {
      for (size_t i = 0; i < p.size(); ++i) {
        m[i] = b1 * m[i] + (1.0 - b1) * g[i];
        v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
        p[i] -= rate * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps);
      }
    };
    for (size_t l = 0; l < W.size(); ++l) {
      double rate = (l == 0) ? lr * first_lr_mult : lr;
      update(W[l], gW[l], mW[l], vW[l], rate);
      update(b[l], gb[l], mb[l], vb[l], rate);
    }
  }
};

struct SegmentLookup {
  std::vector<double> cum;  // cumulative end positions
  const PipelineParams* params;
  const SimulationGrid* grid;

  int seg_at(double x) const {
    for (size_t s = 0; s + 1 < cum.size(); ++s)
      if (x <= cum[s]) return static_cast<int>(s);
    return static_cast<int>(cum.size()) - 1;
  }
};

// (part, row) address of one collocation sample inside the per-segment nets
struct Loc {
  int part;
  int row;
};

}  // namespace

PinnResult estimate_flow_pinn_detailed(const InverseProblem& prob, const PinnConfig& cfg,
                                       RngSeed seed) {
  prob.validate();
  cfg.validate();

  const auto& params = prob.params;
  const double fs = prob.sensor_pressures.front().second.sample_rate;
  const double Ltot = params.total_length();
  const double t0 = prob.t0, t1 = prob.t1, Twin = t1 - t0;
  const int n_win = static_cast<int>(std::llround(Twin * fs));
  if (n_win < 2) throw ArgumentError("pinn: estimation window too short");

  const double fdx = cfg.fd_dx > 0.0 ? cfg.fd_dx : Ltot / 2000.0;
  const double fdt = cfg.fd_dt > 0.0 ? cfg.fd_dt : 1.0 / (4.0 * fs);
  if (2.0 * fdx >= Ltot) throw ArgumentError("pinn: fd_dx too large for the line");
  if (2.0 * fdt >= Twin) throw ArgumentError("pinn: fd_dt too large for the window");

  auto grid = build_grid(params, fs);
  SegmentLookup lk;
  lk.params = &params;
  lk.grid = &grid;
  double acc = 0.0;
  for (const auto& s : params.segments) lk.cum.push_back(acc += s.length);
  const int S = static_cast<int>(params.segments.size());

  // The network represents the perturbation around the steady operating
  // point: p = p_steady(x) + p_scale*u1, Q = q_ref + q_scale*u2.  The steady
  // part carries the friction slope and the mean flow, which would otherwise
  // sit two orders below the waves in the residuals and be learned last, if
  // ever; subtracting it analytically cancels those stiff terms exactly.
  const double q_ref = steady_flow_from_means(prob);
  const double head0 = (q_ref / params.kv) * (q_ref / params.kv);
  auto p_steady = [&](double x) {
    double p = params.p_set + head0, pos = 0.0;
    for (const auto& seg : params.segments) {
      double hi = pos + seg.length;
      if (hi > x) p += friction_term(q_ref, seg, params.rho, params.nu) * (hi - std::max(x, pos));
      pos = hi;
    }
    return p;
  };

  double p_scale = 0.0;
  std::vector<std::vector<double>> windows;
  for (const auto& [x, sig] : prob.sensor_pressures) {
    size_t i0 = static_cast<size_t>(std::llround((t0 - sig.start_time) * fs));
    std::vector<double> w(sig.samples.begin() + static_cast<long>(i0),
                          sig.samples.begin() + static_cast<long>(i0) + n_win);
    double mn = w[0], mx = w[0];
    for (double v : w) { mn = std::min(mn, v); mx = std::max(mx, v); }
    p_scale = std::max(p_scale, 0.5 * (mx - mn));
    windows.push_back(std::move(w));
  }
  p_scale = std::max(p_scale, 1e3);
  // matching flow scale through the line impedance rho*a/A of the pump-side
  // segment, so unit-sized u1 and u2 describe waves of equal strength
  const double imp0 = params.rho * grid.adj_speed[0] / params.segments.front().area();
  const double q_scale = std::max(p_scale / imp0, 1e-9);

  // residual scales: one characteristic acoustic cycle of the whole line
  const double omega_c = 2.0 * M_PI / grid.travel_time();
  const double r1s = p_scale * omega_c;
  const double r2s = q_scale * omega_c;

  const int ni = cfg.n_interior, nb = cfg.n_boundary, nd = cfg.n_data;
  const int nsens = static_cast<int>(windows.size());

  // The acoustic coefficients jump at the junctions, so the field is carried
  // by one subnet per segment in local coordinates; a single global sine
  // cannot track three wavenumbers at once.  The subnets are tied together
  // by pressure and flow continuity residuals at each junction, counted as
  // part of the boundary loss alongside the orifice law.
  std::vector<double> seg_x0(S), seg_len(S);
  for (int p = 0; p < S; ++p) {
    seg_x0[p] = (p == 0) ? 0.0 : lk.cum[p - 1];
    seg_len[p] = params.segments[p].length;
  }
  auto sx_local = [&](int p, double x) {
    return cfg.freq_scale_x * (2.0 * (x - seg_x0[p]) / seg_len[p] - 1.0);
  };
  auto st = [&](double t) { return cfg.freq_scale_t * (2.0 * (t - t0) / Twin - 1.0); };

  // collocation points; stencils must not straddle a junction, where the
  // coefficients jump
  Rng colloc(derive_seed(seed.seed, "pinn-colloc"));
  std::vector<double> cx(ni), ct(ni);
  std::vector<double> c1(ni), c2(ni), rf(ni);
  for (int i = 0; i < ni; ++i) {
    double x;
    bool clear;
    do {
      x = colloc.uniform(fdx, Ltot - fdx);
      clear = true;
      for (size_t j = 0; j + 1 < lk.cum.size(); ++j)
        if (std::abs(x - lk.cum[j]) <= fdx) clear = false;
    } while (!clear);
    cx[i] = x;
    ct[i] = colloc.uniform(t0 + fdt, t1 - fdt);
    int s = lk.seg_at(x);
    const auto& seg = params.segments[s];
    double a = grid.adj_speed[s];
    c1[i] = params.rho * a * a / seg.area();
    c2[i] = seg.area() / params.rho;
    rf[i] = 32.0 * params.nu / (seg.diameter * seg.diameter);
  }
  std::vector<double> bt(nb);
  for (int i = 0; i < nb; ++i) bt[i] = colloc.uniform(t0, t1);

  // fitted sensor samples: evenly strided through each window
  std::vector<double> dx_pos(nd), dt_pos(nd), dtarget(nd);
  {
    int k = 0;
    for (int j = 0; j < nsens; ++j) {
      int mj = (j + 1 < nsens) ? nd / nsens : nd - (nd / nsens) * (nsens - 1);
      for (int r = 0; r < mj; ++r, ++k) {
        long idx = (mj > 1) ? std::lround(static_cast<double>(r) * (n_win - 1) / (mj - 1)) : 0;
        dx_pos[k] = prob.sensor_pressures[j].first;
        dt_pos[k] = t0 + static_cast<double>(idx) / fs;
        dtarget[k] = (windows[j][static_cast<size_t>(idx)] - p_steady(dx_pos[k])) / p_scale;
      }
    }
  }
  // junction continuity samples, n_boundary per junction
  std::vector<double> jt(static_cast<size_t>(std::max(S - 1, 0)) * nb);
  for (double& t : jt) t = colloc.uniform(t0, t1);

  // per-part input batches and the (part, row) registry of every residual
  std::vector<std::vector<double>> Xp(S);
  std::vector<int> nrows(S, 0);
  auto add_row = [&](int p, double x, double t) {
    Xp[p].push_back(sx_local(p, x));
    Xp[p].push_back(st(t));
    return Loc{p, nrows[p]++};
  };
  std::vector<Loc> Ic(ni), Ixp(ni), Ixm(ni), Itp(ni), Itm(ni);
  for (int i = 0; i < ni; ++i) {
    int p = lk.seg_at(cx[i]);
    Ic[i] = add_row(p, cx[i], ct[i]);
    Ixp[i] = add_row(p, cx[i] + fdx, ct[i]);
    Ixm[i] = add_row(p, cx[i] - fdx, ct[i]);
    Itp[i] = add_row(p, cx[i], ct[i] + fdt);
    Itm[i] = add_row(p, cx[i], ct[i] - fdt);
  }
  std::vector<Loc> Ib(nb);
  for (int i = 0; i < nb; ++i) Ib[i] = add_row(S - 1, Ltot, bt[i]);
  std::vector<Loc> Id(nd);
  for (int k = 0; k < nd; ++k) Id[k] = add_row(lk.seg_at(dx_pos[k]), dx_pos[k], dt_pos[k]);
  std::vector<Loc> IjL(jt.size()), IjR(jt.size());
  for (int j = 0; j + 1 < S; ++j)
    for (int i = 0; i < nb; ++i) {
      size_t m = static_cast<size_t>(j) * nb + i;
      IjL[m] = add_row(j, lk.cum[j], jt[m]);
      IjR[m] = add_row(j + 1, lk.cum[j], jt[m]);
    }
  const int nbc = nb + 2 * (S - 1) * nb;  // orifice rows plus both continuity residuals

  Rng init(derive_seed(seed.seed, "pinn-init"));
  std::vector<SineMlp> parts;
  parts.reserve(S);
  for (int p = 0; p < S; ++p) parts.emplace_back(cfg.hidden, init);

  // Sine nets learn new frequencies slowly, so the first layer of every
  // subnet is seeded with traveling-wave pairs read off the sensor spectrum:
  // for each prominent line at angular frequency w, neurons at (k, w) with
  // k = +-w/a for the local wave speed, in two phase quadratures.  Seeding is
  // deterministic and purely data-driven; Adam is still free to move the
  // seeded weights, and the remaining neurons keep their random draw.
  {
    std::vector<double> amp(static_cast<size_t>(n_win) / 2 + 1, 0.0);
    std::vector<double> buf(n_win);
    std::vector<std::complex<double>> spec(static_cast<size_t>(n_win) / 2 + 1);
    for (int j = 0; j < nsens; ++j) {
      double mean = 0.0;
      for (double v : windows[j]) mean += v;
      mean /= n_win;
      for (int i = 0; i < n_win; ++i) buf[i] = windows[j][static_cast<size_t>(i)] - mean;
      fftw_plan pl = fftw_plan_dft_r2c_1d(n_win, buf.data(),
                                          reinterpret_cast<fftw_complex*>(spec.data()),
                                          FFTW_ESTIMATE);
      fftw_execute(pl);
      fftw_destroy_plan(pl);
      for (size_t k = 1; k < amp.size(); ++k)
        amp[k] = std::max(amp[k], std::abs(spec[k]) * 2.0 / n_win);
    }
    std::vector<std::pair<double, int>> lines;
    double amax = *std::max_element(amp.begin(), amp.end());
    for (size_t k = 1; k < amp.size(); ++k)
      if (amp[k] >= 2e-3 * amax) lines.push_back({amp[k], static_cast<int>(k)});
    std::sort(lines.rbegin(), lines.rend());

    for (int p = 0; p < S; ++p) {
      const int nf0 = parts[p].dims[1];
      const int cap_seed = 3 * nf0 / 4;
      int row = 0;
      for (const auto& ln : lines) {
        if (row >= cap_seed) break;
        double w = 2.0 * M_PI * ln.second * fs / n_win;
        double kx = w / grid.adj_speed[p];
        for (int dir : {+1, -1}) {
          for (double phase : {0.0, 0.5 * M_PI}) {
            if (row >= cap_seed) break;
            // neuron computes sin(Wx*sx + Wt*st + b) = sin(dir*k*x + w*t + phase)
            parts[p].W[0][static_cast<size_t>(row) * 2] =
                dir * kx * seg_len[p] / (2.0 * cfg.freq_scale_x);
            parts[p].W[0][static_cast<size_t>(row) * 2 + 1] = w * Twin / (2.0 * cfg.freq_scale_t);
            parts[p].b[0][row] =
                phase + dir * kx * (seg_x0[p] + seg_len[p] / 2.0) + w * (Twin / 2.0 + t0);
            ++row;
          }
        }
      }
    }
  }

  auto forward_all = [&] {
    for (int p = 0; p < S; ++p) parts[p].forward(Xp[p].data(), nrows[p]);
  };
  auto u1 = [&](Loc l) { return parts[l.part].out()[static_cast<size_t>(l.row) * 2]; };
  auto u2 = [&](Loc l) { return parts[l.part].out()[static_cast<size_t>(l.row) * 2 + 1]; };

  std::vector<std::vector<double>> dOutp(S);
  for (int p = 0; p < S; ++p) dOutp[p].assign(static_cast<size_t>(nrows[p]) * 2, 0.0);

  PinnResult result;
  result.log.reserve(cfg.iterations + 2);

  auto losses = [&](bool want_grad) {
    if (want_grad)
      for (auto& d : dOutp) std::fill(d.begin(), d.end(), 0.0);
    auto add = [&](Loc l, int comp, double g) {
      dOutp[l.part][static_cast<size_t>(l.row) * 2 + comp] += g;
    };

    double Lp = 0.0;
    for (int i = 0; i < ni; ++i) {
      double p_t = p_scale * (u1(Itp[i]) - u1(Itm[i])) / (2.0 * fdt);
      double q_t = q_scale * (u2(Itp[i]) - u2(Itm[i])) / (2.0 * fdt);
      double p_x = p_scale * (u1(Ixp[i]) - u1(Ixm[i])) / (2.0 * fdx);
      double q_x = q_scale * (u2(Ixp[i]) - u2(Ixm[i])) / (2.0 * fdx);
      double s1 = (p_t + c1[i] * q_x) / r1s;
      double s2 = (q_t + c2[i] * p_x + rf[i] * q_scale * u2(Ic[i])) / r2s;
      Lp += s1 * s1 + s2 * s2;
      if (want_grad) {
        double g1 = 2.0 * s1 / (ni * r1s) * cfg.w_pde;
        double g2 = 2.0 * s2 / (ni * r2s) * cfg.w_pde;
        add(Itp[i], 0, g1 * p_scale / (2.0 * fdt));
        add(Itm[i], 0, -g1 * p_scale / (2.0 * fdt));
        add(Ixp[i], 1, g1 * c1[i] * q_scale / (2.0 * fdx));
        add(Ixm[i], 1, -g1 * c1[i] * q_scale / (2.0 * fdx));
        add(Itp[i], 1, g2 * q_scale / (2.0 * fdt));
        add(Itm[i], 1, -g2 * q_scale / (2.0 * fdt));
        add(Ixp[i], 0, g2 * c2[i] * p_scale / (2.0 * fdx));
        add(Ixm[i], 0, -g2 * c2[i] * p_scale / (2.0 * fdx));
        add(Ic[i], 1, g2 * rf[i] * q_scale);
      }
    }
    Lp /= ni;

    double Lb = 0.0;
    for (int i = 0; i < nb; ++i) {  // orifice law at the far end
      double QL = q_ref + q_scale * u2(Ib[i]);
      double h = head0 + p_scale * u1(Ib[i]);
      double f = h > 0.0 ? params.kv * std::sqrt(h) : 0.0;
      double res = (QL - f) / q_scale;
      Lb += res * res;
      if (want_grad) {
        double gb = 2.0 * res / nbc * cfg.w_bc;
        add(Ib[i], 1, gb);
        if (h > 0.0) add(Ib[i], 0, -gb * params.kv / (2.0 * std::sqrt(std::max(h, 1.0))) *
                                       p_scale / q_scale);
      }
    }
    for (size_t m = 0; m < jt.size(); ++m) {  // continuity across each junction
      double rp = u1(IjL[m]) - u1(IjR[m]);
      double rq = u2(IjL[m]) - u2(IjR[m]);
      Lb += rp * rp + rq * rq;
      if (want_grad) {
        double gp = 2.0 * rp / nbc * cfg.w_bc;
        double gq = 2.0 * rq / nbc * cfg.w_bc;
        add(IjL[m], 0, gp);
        add(IjR[m], 0, -gp);
        add(IjL[m], 1, gq);
        add(IjR[m], 1, -gq);
      }
    }
    Lb /= nbc;

    double Ld = 0.0;
    for (int k = 0; k < nd; ++k) {
      double res = u1(Id[k]) - dtarget[k];
      Ld += res * res;
      if (want_grad) add(Id[k], 0, 2.0 * res / nd * cfg.w_data);
    }
    Ld /= nd;

    PinnLossRecord rec;
    rec.data = Ld;
    rec.pde = Lp;
    rec.bc = Lb;
    rec.total = cfg.w_data * Ld + cfg.w_pde * Lp + cfg.w_bc * Lb;
    return rec;
  };

  // Every loss term is linear in the output layers except the orifice law,
  // which is nearly so.  A few damped Gauss-Newton solves of those layers
  // (jointly across the subnets) reach the least-squares optimum for the
  // current features, far below where first-order steps stall.  The solve
  // runs on denser, independently drawn point sets so an exact fit cannot
  // exploit gaps between the training collocations; normal equations are
  // accumulated chunk by chunk to keep memory flat.  It runs twice: once
  // before Adam, so training starts from the best linear readout of the
  // seeded features, and once at the end.
  const int nf = parts[0].dims[parts[0].dims.size() - 2];  // feature width
  const int bw = 2 * (nf + 1);                             // [W_p, b_p, W_q, b_q] per part
  const int np_tot = S * bw;

  const int ni2 = std::min(3 * ni, 6144);
  const int nb2 = std::min(3 * nb, 768);
  const int per_sensor = std::min(n_win, std::max(2, 8192 / nsens));
  const int nd2 = per_sensor * nsens;
  const int nbc2 = nb2 + 2 * (S - 1) * nb2;

  std::vector<double> cx2(ni2), ct2(ni2), c1_2(ni2), c2_2(ni2), rf2(ni2);
  std::vector<int> part2(ni2);
  for (int i = 0; i < ni2; ++i) {
    double x;
    bool clear;
    do {
      x = colloc.uniform(fdx, Ltot - fdx);
      clear = true;
      for (size_t j = 0; j + 1 < lk.cum.size(); ++j)
        if (std::abs(x - lk.cum[j]) <= fdx) clear = false;
    } while (!clear);
    cx2[i] = x;
    ct2[i] = colloc.uniform(t0 + fdt, t1 - fdt);
    int s = lk.seg_at(x);
    part2[i] = s;
    const auto& seg = params.segments[s];
    double a = grid.adj_speed[s];
    c1_2[i] = params.rho * a * a / seg.area();
    c2_2[i] = seg.area() / params.rho;
    rf2[i] = 32.0 * params.nu / (seg.diameter * seg.diameter);
  }
  std::vector<double> bt2(nb2);
  for (int i = 0; i < nb2; ++i) bt2[i] = colloc.uniform(t0, t1);
  std::vector<double> dx2(nd2), dt2(nd2), dtar2(nd2);
  for (int j = 0, k = 0; j < nsens; ++j)
    for (int r = 0; r < per_sensor; ++r, ++k) {
      long idx = (per_sensor > 1)
                     ? std::lround(static_cast<double>(r) * (n_win - 1) / (per_sensor - 1))
                     : 0;
      dx2[k] = prob.sensor_pressures[j].first;
      dt2[k] = t0 + static_cast<double>(idx) / fs;
      dtar2[k] = (windows[j][static_cast<size_t>(idx)] - p_steady(dx2[k])) / p_scale;
    }
  std::vector<double> jt2(static_cast<size_t>(std::max(S - 1, 0)) * nb2);
  for (double& t : jt2) t = colloc.uniform(t0, t1);

  // refit interior points grouped by part so the forwards stay chunked
  std::vector<std::vector<int>> ridx(S);
  for (int i = 0; i < ni2; ++i) ridx[part2[i]].push_back(i);

  const double sp = std::sqrt(cfg.w_pde / ni2);
  const double sbc = std::sqrt(cfg.w_bc / nbc2);
  const double sd = std::sqrt(cfg.w_data / nd2);

  const int chunk = 512;
  std::vector<double> Xc(static_cast<size_t>(5 * chunk) * 2);
  std::vector<double> Jc(static_cast<size_t>(2 * chunk) * 2 * bw), yc(2 * chunk);
  std::vector<double> phiL(static_cast<size_t>(chunk) * nf);
  std::vector<double> JtJ(static_cast<size_t>(np_tot) * np_tot), Jty(np_tot);

  // JtJ[off:off+width, off:off+width] += Jrows^T Jrows; a row never touches
  // columns outside one part block (or two adjacent blocks for junction
  // rows), so the update stays on a contiguous diagonal window.
  auto accumulate = [&](const double* Jrows, const double* yrows, int rows, int width, int off) {
    cblas_dgemm(CblasRowMajor, CblasTrans, CblasNoTrans, width, width, rows, 1.0, Jrows, width,
                Jrows, width, 1.0, JtJ.data() + static_cast<size_t>(off) * np_tot + off, np_tot);
    cblas_dgemv(CblasRowMajor, CblasTrans, rows, width, 1.0, Jrows, width, yrows, 1, 1.0,
                Jty.data() + off, 1);
  };

  auto run_refit = [&] {
    for (int gn = 0; gn < 3; ++gn) {
      std::fill(JtJ.begin(), JtJ.end(), 0.0);
      std::fill(Jty.begin(), Jty.end(), 0.0);

      for (int p = 0; p < S; ++p) {
        const auto& mine = ridx[p];
        for (size_t base = 0; base < mine.size(); base += chunk) {
          int m = static_cast<int>(std::min<size_t>(chunk, mine.size() - base));
          for (int i = 0; i < m; ++i) {
            int gi = mine[base + i];
            double x = cx2[gi], t = ct2[gi];
            auto putc = [&](int row, double xx, double tt) {
              Xc[static_cast<size_t>(row) * 2] = sx_local(p, xx);
              Xc[static_cast<size_t>(row) * 2 + 1] = st(tt);
            };
            putc(i, x, t);
            putc(m + i, x + fdx, t);
            putc(2 * m + i, x - fdx, t);
            putc(3 * m + i, x, t + fdt);
            putc(4 * m + i, x, t - fdt);
          }
          parts[p].forward(Xc.data(), 5 * m);
          const double* F = parts[p].features();
          auto feat = [&](int row) { return F + static_cast<size_t>(row) * nf; };
          std::fill(Jc.begin(), Jc.begin() + static_cast<size_t>(2 * m) * bw, 0.0);
          for (int i = 0; i < m; ++i) {
            int gi = mine[base + i];
            const double *ce = feat(i), *xp = feat(m + i), *xm = feat(2 * m + i);
            const double *tp = feat(3 * m + i), *tm = feat(4 * m + i);
            double* r1row = Jc.data() + static_cast<size_t>(2 * i) * bw;
            double* r2row = r1row + bw;
            double cp1 = sp * p_scale / (2.0 * fdt * r1s);
            double cq1 = sp * c1_2[gi] * q_scale / (2.0 * fdx * r1s);
            double cq2 = sp * q_scale / (2.0 * fdt * r2s);
            double cp2 = sp * c2_2[gi] * p_scale / (2.0 * fdx * r2s);
            double cf2 = sp * rf2[gi] * q_scale / r2s;
            for (int k = 0; k < nf; ++k) {
              r1row[k] = cp1 * (tp[k] - tm[k]);
              r1row[nf + 1 + k] = cq1 * (xp[k] - xm[k]);
              r2row[k] = cp2 * (xp[k] - xm[k]);
              r2row[nf + 1 + k] = cq2 * (tp[k] - tm[k]) + cf2 * ce[k];
            }
            r2row[2 * nf + 1] = cf2;
            yc[2 * i] = 0.0;
            yc[2 * i + 1] = 0.0;
          }
          accumulate(Jc.data(), yc.data(), 2 * m, bw, p * bw);
        }
      }

      for (int base = 0; base < nb2; base += chunk) {  // orifice rows
        int m = std::min(chunk, nb2 - base);
        for (int i = 0; i < m; ++i) {
          Xc[static_cast<size_t>(i) * 2] = sx_local(S - 1, Ltot);
          Xc[static_cast<size_t>(i) * 2 + 1] = st(bt2[base + i]);
        }
        parts[S - 1].forward(Xc.data(), m);
        const double* F = parts[S - 1].features();
        const double* Y = parts[S - 1].out();
        std::fill(Jc.begin(), Jc.begin() + static_cast<size_t>(m) * bw, 0.0);
        for (int i = 0; i < m; ++i) {
          double u1b = Y[static_cast<size_t>(i) * 2];
          double h = head0 + p_scale * u1b;
          double f = h > 0.0 ? params.kv * std::sqrt(h) : 0.0;
          double fp = h > 0.0 ? params.kv / (2.0 * std::sqrt(std::max(h, 1.0))) : 0.0;
          const double* ph = F + static_cast<size_t>(i) * nf;
          double* row = Jc.data() + static_cast<size_t>(i) * bw;
          double cu1 = -sbc * fp * p_scale / q_scale;
          for (int k = 0; k < nf; ++k) {
            row[k] = cu1 * ph[k];
            row[nf + 1 + k] = sbc * ph[k];
          }
          row[nf] = cu1;
          row[2 * nf + 1] = sbc;
          yc[i] = -sbc * (q_ref - f + fp * p_scale * u1b) / q_scale;
        }
        accumulate(Jc.data(), yc.data(), m, bw, (S - 1) * bw);
      }

      for (int j = 0; j + 1 < S; ++j) {  // junction continuity rows
        for (int base = 0; base < nb2; base += chunk) {
          int m = std::min(chunk, nb2 - base);
          for (int i = 0; i < m; ++i) {
            Xc[static_cast<size_t>(i) * 2] = sx_local(j, lk.cum[j]);
            Xc[static_cast<size_t>(i) * 2 + 1] =
                st(jt2[static_cast<size_t>(j) * nb2 + base + i]);
          }
          parts[j].forward(Xc.data(), m);
          std::copy(parts[j].features(), parts[j].features() + static_cast<size_t>(m) * nf,
                    phiL.begin());
          for (int i = 0; i < m; ++i) Xc[static_cast<size_t>(i) * 2] = sx_local(j + 1, lk.cum[j]);
          parts[j + 1].forward(Xc.data(), m);
          const double* FR = parts[j + 1].features();
          std::fill(Jc.begin(), Jc.begin() + static_cast<size_t>(2 * m) * 2 * bw, 0.0);
          for (int i = 0; i < m; ++i) {
            const double* phl = phiL.data() + static_cast<size_t>(i) * nf;
            const double* phr = FR + static_cast<size_t>(i) * nf;
            double* rprow = Jc.data() + static_cast<size_t>(2 * i) * 2 * bw;
            double* rqrow = rprow + 2 * bw;
            for (int k = 0; k < nf; ++k) {
              rprow[k] = sbc * phl[k];
              rprow[bw + k] = -sbc * phr[k];
              rqrow[nf + 1 + k] = sbc * phl[k];
              rqrow[bw + nf + 1 + k] = -sbc * phr[k];
            }
            rprow[nf] = sbc;
            rprow[bw + nf] = -sbc;
            rqrow[2 * nf + 1] = sbc;
            rqrow[bw + 2 * nf + 1] = -sbc;
            yc[2 * i] = 0.0;
            yc[2 * i + 1] = 0.0;
          }
          accumulate(Jc.data(), yc.data(), 2 * m, 2 * bw, j * bw);
        }
      }

      for (int base = 0; base < nd2; base += chunk) {  // sensor pressure rows
        int m = std::min(chunk, nd2 - base);
        int p = lk.seg_at(dx2[base]);  // refit data rows are laid out sensor-by-sensor
        for (int i = 0; i < m; ++i) {
          Xc[static_cast<size_t>(i) * 2] = sx_local(p, dx2[base + i]);
          Xc[static_cast<size_t>(i) * 2 + 1] = st(dt2[base + i]);
        }
        parts[p].forward(Xc.data(), m);
        const double* F = parts[p].features();
        std::fill(Jc.begin(), Jc.begin() + static_cast<size_t>(m) * bw, 0.0);
        for (int i = 0; i < m; ++i) {
          const double* ph = F + static_cast<size_t>(i) * nf;
          double* row = Jc.data() + static_cast<size_t>(i) * bw;
          for (int k = 0; k < nf; ++k) row[k] = sd * ph[k];
          row[nf] = sd;
          yc[i] = sd * dtar2[base + i];
        }
        accumulate(Jc.data(), yc.data(), m, bw, p * bw);
      }

      // damped normal equations
      double diag_max = 0.0;
      for (int k = 0; k < np_tot; ++k)
        diag_max = std::max(diag_max, JtJ[static_cast<size_t>(k) * np_tot + k]);
      double ridge = 1e-12 * std::max(diag_max, 1.0);
      int info = 1;
      for (int attempt = 0; attempt < 6 && info != 0; ++attempt, ridge *= 100.0) {
        std::vector<double> Asys(JtJ);
        for (int k = 0; k < np_tot; ++k) Asys[static_cast<size_t>(k) * np_tot + k] += ridge;
        std::vector<double> rhs(Jty);
        int n_ = np_tot, one = 1;
        dposv_("L", &n_, &one, Asys.data(), &n_, rhs.data(), &n_, &info);
        if (info == 0) {
          for (int p = 0; p < S; ++p) {
            auto& Wl = parts[p].W.back();
            auto& bl = parts[p].b.back();
            const double* rp = rhs.data() + static_cast<size_t>(p) * bw;
            for (int k = 0; k < nf; ++k) {
              Wl[k] = rp[k];
              Wl[nf + k] = rp[nf + 1 + k];
            }
            bl[0] = rp[nf];
            bl[1] = rp[2 * nf + 1];
          }
        }
      }
      forward_all();
    }
  };

  forward_all();
  {
    PinnLossRecord rec0 = losses(false);
    rec0.iteration = 0;
    result.log.push_back(rec0);
  }
  run_refit();

  for (int it = 1; it <= cfg.iterations; ++it) {
    PinnLossRecord rec = losses(true);
    if (!std::isfinite(rec.total))
      throw TrainingError("pinn training diverged at iteration " + std::to_string(it));
    for (int p = 0; p < S; ++p) parts[p].backward(dOutp[p].data(), nrows[p]);
    // cosine decay to a tenth of the base rate polishes the late iterations
    double frac = cfg.iterations > 1 ? static_cast<double>(it - 1) / (cfg.iterations - 1) : 0.0;
    double lr = cfg.learning_rate * (0.1 + 0.45 * (1.0 + std::cos(M_PI * frac)));
    for (int p = 0; p < S; ++p) parts[p].adam_step(lr, it, 0.05);
    forward_all();
    rec = losses(false);
    rec.iteration = it;
    result.log.push_back(rec);
    if (!std::isfinite(rec.total))
      throw TrainingError("pinn training diverged at iteration " + std::to_string(it));
  }

  run_refit();
  {
    PinnLossRecord rec = losses(false);
    if (!std::isfinite(rec.total))
      throw TrainingError("pinn training diverged in the output-layer refit");
    rec.iteration = cfg.iterations + 1;
    result.log.push_back(rec);
  }

  // readout: the estimated inlet flow at the pump flange, x = 0
  std::vector<double> Xq(static_cast<size_t>(n_win) * 2);
  for (int m = 0; m < n_win; ++m) {
    Xq[static_cast<size_t>(m) * 2] = sx_local(0, 0.0);
    Xq[static_cast<size_t>(m) * 2 + 1] = st(t0 + m / fs);
  }
  parts[0].forward(Xq.data(), n_win);
  result.q_hat.sample_rate = fs;
  result.q_hat.start_time = t0;
  result.q_hat.unit = "m3/s";
  result.q_hat.channel_id = "q_hat_pinn";
  result.q_hat.samples.resize(n_win);
  for (int m = 0; m < n_win; ++m)
    result.q_hat.samples[m] = q_ref + q_scale * parts[0].out()[static_cast<size_t>(m) * 2 + 1];
  return result;
}

Signal estimate_flow_pinn(const InverseProblem& prob, const PinnConfig& cfg, RngSeed seed) {
  return estimate_flow_pinn_detailed(prob, cfg, seed).q_hat;
}

void write_pinn_log_csv(const std::vector<PinnLossRecord>& log, const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw IoError("cannot open " + path);
  std::fprintf(f, "iteration,data,pde,bc,total\n");
  for (const auto& r : log)
    std::fprintf(f, "%d,%.17g,%.17g,%.17g,%.17g\n", r.iteration, r.data, r.pde, r.bc, r.total);
  std::fclose(f);
}

}  // namespace pdx

#include "pdx/tfr.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <numbers>

#include "pdx/errors.hpp"
#include "pdx/fft.hpp"

namespace pdx {

namespace {

constexpr double kMorletOmega0 = 6.0;  // center frequency 6/(2*pi) cycles

// peak-normalized frequency response of the mother wavelet at angular
// frequency w (rad, for unit scale)
double mother_hat(const SSTConfig& cfg, double w) {
  if (w <= 0.0) return 0.0;
  if (cfg.wavelet == Wavelet::analytic_morlet) {
    double d = w - kMorletOmega0;
    return std::exp(-0.5 * d * d);
  }
  double b = cfg.morse_beta, g = cfg.morse_gamma;
  double wp = std::pow(b / g, 1.0 / g);  // peak angular frequency
  double r = w / wp;
  // (w/wp)^b * exp(b/g - w^g / ... ) written in log form to avoid overflow
  double lg = b * std::log(r) + (b / g) * (1.0 - std::pow(r, g));
  return std::exp(lg);
}

double peak_omega(const SSTConfig& cfg) {
  if (cfg.wavelet == Wavelet::analytic_morlet) return kMorletOmega0;
  return std::pow(cfg.morse_beta / cfg.morse_gamma, 1.0 / cfg.morse_gamma);
}

}  // namespace

void SSTConfig::validate(double sample_rate) const {
  if (!(freq_min > 0.0) || !(freq_min < freq_max))
    throw ArgumentError("SSTConfig: need 0 < freq_min < freq_max");
  if (freq_max > sample_rate / 2.0 + 1e-9)
    throw ArgumentError("SSTConfig: freq_max beyond Nyquist");
  if (voices_per_octave < 8) throw ArgumentError("SSTConfig: voices_per_octave must be >= 8");
  if (!(epsilon > 0.0)) throw ArgumentError("SSTConfig: epsilon must be positive");
  if (wavelet == Wavelet::morse && (!(morse_beta > 0.0) || !(morse_gamma > 0.0)))
    throw ArgumentError("SSTConfig: Morse parameters must be positive");
}

double SSTConfig::support_seconds(double f) const {
  // envelope standard deviation: scale for the Morlet, sqrt(beta*gamma)/w for
  // the Morse family (duration parameter over the peak frequency)
  if (wavelet == Wavelet::analytic_morlet) return kMorletOmega0 / (2.0 * std::numbers::pi * f);
  return std::sqrt(morse_beta * morse_gamma) / (2.0 * std::numbers::pi * f);
}

std::vector<double> SSTConfig::frequencies() const {
  std::vector<double> out;
  int k_max = static_cast<int>(
      std::floor(voices_per_octave * std::log2(freq_max / freq_min) + 1e-9));
  for (int k = 0; k <= k_max; ++k)
    out.push_back(freq_min * std::exp2(static_cast<double>(k) / voices_per_octave));
  return out;
}

CwtGrid cwt(const Signal& s, const SSTConfig& cfg) {
  s.validate();
  cfg.validate(s.sample_rate);
  size_t n = s.size();
  double longest = cfg.support_seconds(cfg.freq_min);
  if (static_cast<double>(n) / s.sample_rate < 2.0 * longest)
    throw ArgumentError("cwt: signal shorter than twice the longest wavelet support");

  CwtGrid g;
  g.freqs = cfg.frequencies();
  g.sample_rate = s.sample_rate;
  g.start_time = s.start_time;
  g.n_times = n;
  g.w.resize(g.freqs.size() * n);
  g.dw.resize(g.freqs.size() * n);

  std::vector<std::complex<double>> x(n);
  for (size_t i = 0; i < n; ++i) x[i] = s.samples[i];
  auto X = fft(x);

  double wp = peak_omega(cfg);
  double dw_bin = 2.0 * std::numbers::pi * s.sample_rate / static_cast<double>(n);
  std::vector<std::complex<double>> Y(n), Yd(n);
  for (size_t si = 0; si < g.freqs.size(); ++si) {
    double scale = wp / (2.0 * std::numbers::pi * g.freqs[si]);
    std::fill(Y.begin(), Y.end(), std::complex<double>(0.0));
    std::fill(Yd.begin(), Yd.end(), std::complex<double>(0.0));
    for (size_t k = 1; k <= n / 2; ++k) {  // analytic: positive frequencies only
      double omega = dw_bin * static_cast<double>(k);
      double h = mother_hat(cfg, scale * omega);
      Y[k] = X[k] * h;
      Yd[k] = Y[k] * std::complex<double>(0.0, omega);
    }
    auto row = ifft(Y);
    auto drow = ifft(Yd);
    std::copy(row.begin(), row.end(), g.w.begin() + si * n);
    std::copy(drow.begin(), drow.end(), g.dw.begin() + si * n);
  }
  return g;
}

Spectrogram synchrosqueeze(const CwtGrid& grid, const SSTConfig& cfg) {
  if (grid.freqs.empty() || grid.n_times == 0 || grid.w.size() != grid.freqs.size() * grid.n_times)
    throw ArgumentError("synchrosqueeze: malformed coefficient grid");
  cfg.validate(grid.sample_rate);

  Spectrogram sg;
  sg.freq_axis = grid.freqs;
  sg.time_axis.resize(grid.n_times);
  for (size_t t = 0; t < grid.n_times; ++t)
    sg.time_axis[t] = grid.start_time + static_cast<double>(t) / grid.sample_rate;
  sg.magnitudes.assign(sg.freq_bins() * sg.time_bins(), 0.0);

  double v = cfg.voices_per_octave;
  int last = static_cast<int>(grid.freqs.size()) - 1;
  for (size_t si = 0; si < grid.freqs.size(); ++si) {
    for (size_t t = 0; t < grid.n_times; ++t) {
      auto wv = grid.w[si * grid.n_times + t];
      double mag = std::abs(wv);
      if (mag <= cfg.epsilon) continue;
      // instantaneous frequency Re(dW / (2*pi*i*W)), Hz
      auto ratio = grid.dw[si * grid.n_times + t] / wv;
      double f_inst = ratio.imag() / (2.0 * std::numbers::pi);
      if (!std::isfinite(f_inst) || f_inst <= 0.0) continue;
      int bin = static_cast<int>(std::lround(v * std::log2(f_inst / cfg.freq_min)));
      bin = std::clamp(bin, 0, last);
      sg.magnitudes[static_cast<size_t>(bin) * grid.n_times + t] += mag;
    }
  }
  return sg;
}

void Spectrogram::validate() const {
  if (freq_axis.empty() || time_axis.empty() || magnitudes.size() != freq_bins() * time_bins())
    throw ValidationError("Spectrogram: inconsistent shape");
  for (size_t i = 1; i < freq_axis.size(); ++i)
    if (!(freq_axis[i] > freq_axis[i - 1]))
      throw ValidationError("Spectrogram: frequency axis must increase");
  for (size_t i = 1; i < time_axis.size(); ++i)
    if (!(time_axis[i] > time_axis[i - 1]))
      throw ValidationError("Spectrogram: time axis must increase");
  for (double m : magnitudes)
    if (!std::isfinite(m) || m < 0.0)
      throw ValidationError("Spectrogram: magnitudes must be finite and non-negative");
}

void SpectroImage::validate() const {
  if (width != 256 || height != 256) throw ValidationError("SpectroImage: shape must be 256x256");
  if (channels == 0 || pixels.size() != static_cast<size_t>(width) * height * channels)
    throw ValidationError("SpectroImage: pixel buffer size mismatch");
  for (float p : pixels)
    if (!std::isfinite(p)) throw ValidationError("SpectroImage: non-finite pixel");
}

namespace {

// piecewise-linear sample of column values y(axis) at query q, clamped ends
double interp_axis(const std::vector<double>& axis, const std::vector<double>& y, double q) {
  if (q <= axis.front()) return y.front();
  if (q >= axis.back()) return y.back();
  auto it = std::upper_bound(axis.begin(), axis.end(), q);
  size_t hi = static_cast<size_t>(it - axis.begin());
  size_t lo = hi - 1;
  double u = (q - axis[lo]) / (axis[hi] - axis[lo]);
  return y[lo] + u * (y[hi] - y[lo]);
}

}  // namespace

SpectroImage postprocess_spectrogram(const Spectrogram& sg, double pump_freq, double scale_k) {
  sg.validate();
  if (!(pump_freq > 0.0)) throw ArgumentError("postprocess_spectrogram: pump_freq must be > 0");
  double f_cut = 10.0 * pump_freq;
  if (sg.freq_axis.back() < f_cut - 1e-9)
    throw ArgumentError("postprocess_spectrogram: spectrogram does not cover 10x pump frequency");

  size_t keep = 0;
  while (keep < sg.freq_bins() && sg.freq_axis[keep] <= f_cut * (1.0 + 1e-12)) ++keep;
  if (keep < 2) throw ArgumentError("postprocess_spectrogram: fewer than two bins below the cut");

  size_t T = sg.time_bins();
  // steps 2+3: exponential transform of the scaled magnitudes
  std::vector<double> e(keep * T);
  for (size_t f = 0; f < keep; ++f)
    for (size_t t = 0; t < T; ++t) e[f * T + t] = std::exp(scale_k * sg.at(f, t));

  // step 4: resample rows onto 256 log-spaced frequencies over the kept band
  std::vector<double> logf(keep);
  for (size_t f = 0; f < keep; ++f) logf[f] = std::log(sg.freq_axis[f]);
  double l0 = logf.front(), l1 = logf.back();
  std::vector<double> colv(keep), mid(256ull * T);
  for (size_t t = 0; t < T; ++t) {
    for (size_t f = 0; f < keep; ++f) colv[f] = e[f * T + t];
    for (size_t r = 0; r < 256; ++r) {
      double q = l0 + (l1 - l0) * static_cast<double>(r) / 255.0;
      mid[r * T + t] = interp_axis(logf, colv, q);
    }
  }

  // step 5: linear resize of the time axis to 256 columns
  SpectroImage img;
  img.pixels.resize(256ull * 256ull);
  std::vector<double> rowv(T);
  for (size_t r = 0; r < 256; ++r) {
    for (size_t t = 0; t < T; ++t) rowv[t] = mid[r * T + t];
    for (size_t c = 0; c < 256; ++c) {
      double pos = (T == 1) ? 0.0 : static_cast<double>(c) * (T - 1) / 255.0;
      size_t lo = static_cast<size_t>(pos);
      size_t hi = std::min(lo + 1, T - 1);
      double u = pos - static_cast<double>(lo);
      img.pixels[r * 256 + c] = static_cast<float>(rowv[lo] + u * (rowv[hi] - rowv[lo]));
    }
  }
  img.validate();
  return img;
}

double suggest_scale_k(const std::vector<const Spectrogram*>& refs) {
  std::vector<double> all;
  for (const auto* sg : refs)
    all.insert(all.end(), sg->magnitudes.begin(), sg->magnitudes.end());
  if (all.empty()) throw ArgumentError("suggest_scale_k: no reference spectrograms");
  size_t idx = static_cast<size_t>(0.99 * (all.size() - 1));
  std::nth_element(all.begin(), all.begin() + idx, all.end());
  double p99 = all[idx];
  return p99 > 0.0 ? 1.0 / p99 : 1.0;
}

SpectroImage stack_images(const std::vector<SpectroImage>& singles) {
  if (singles.empty()) throw ArgumentError("stack_images: empty input");
  SpectroImage out;
  out.channels = 0;
  for (const auto& s : singles) {
    s.validate();
    out.channels += s.channels;
    out.pixels.insert(out.pixels.end(), s.pixels.begin(), s.pixels.end());
  }
  out.validate();
  return out;
}

void write_spectro_image(const std::string& path, const SpectroImage& img) {
  img.validate();
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw IoError("cannot open for writing: " + path);
  auto put_u32 = [&](uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    std::fwrite(b, 1, 4, f);
  };
  std::fwrite("SPEC", 1, 4, f);
  put_u32(img.width);
  put_u32(img.height);
  put_u32(img.channels);
  for (float p : img.pixels) {
    uint32_t bits;
    std::memcpy(&bits, &p, 4);
    put_u32(bits);
  }
  if (std::fclose(f) != 0) throw IoError("write failed: " + path);
}

SpectroImage read_spectro_image(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw IoError("cannot open: " + path);
  auto get_u32 = [&](uint32_t& v) {
    unsigned char b[4];
    if (std::fread(b, 1, 4, f) != 4) {
      std::fclose(f);
      throw IoError("truncated image file: " + path);
    }
    v = static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
        (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
  };
  char magic[4];
  if (std::fread(magic, 1, 4, f) != 4 || std::memcmp(magic, "SPEC", 4) != 0) {
    std::fclose(f);
    throw IoError("not a SPEC image: " + path);
  }
  SpectroImage img;
  get_u32(img.width);
  get_u32(img.height);
  get_u32(img.channels);
  if (img.width != 256 || img.height != 256 || img.channels == 0 || img.channels > 64) {
    std::fclose(f);
    throw IoError("unsupported SPEC geometry: " + path);
  }
  img.pixels.resize(static_cast<size_t>(img.width) * img.height * img.channels);
  for (float& p : img.pixels) {
    uint32_t bits;
    get_u32(bits);
    std::memcpy(&p, &bits, 4);
  }
  std::fclose(f);
  img.validate();
  return img;
}

void write_pgm(const std::string& path, const SpectroImage& img, uint32_t channel) {
  img.validate();
  if (channel >= img.channels) throw ArgumentError("write_pgm: channel out of range");
  const float* base = img.pixels.data() + static_cast<size_t>(channel) * img.height * img.width;
  float lo = base[0], hi = base[0];
  for (size_t i = 0; i < static_cast<size_t>(img.height) * img.width; ++i) {
    lo = std::min(lo, base[i]);
    hi = std::max(hi, base[i]);
  }
  double span = (hi > lo) ? hi - lo : 1.0;
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw IoError("cannot open for writing: " + path);
  std::fprintf(f, "P5\n%u %u\n255\n", img.width, img.height);
  // flip vertically so low frequencies sit at the bottom of the rendering
  for (int r = static_cast<int>(img.height) - 1; r >= 0; --r)
    for (uint32_t c = 0; c < img.width; ++c) {
      double v = (base[static_cast<size_t>(r) * img.width + c] - lo) / span;
      unsigned char b = static_cast<unsigned char>(std::lround(255.0 * v));
      std::fwrite(&b, 1, 1, f);
    }
  if (std::fclose(f) != 0) throw IoError("write failed: " + path);
}

}  // namespace pdx

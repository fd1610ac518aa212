#include "pdx/signal.hpp"

#include <cmath>

#include "pdx/errors.hpp"

namespace pdx {

void Signal::validate() const {
  if (!(sample_rate > 0.0)) throw ValidationError("Signal: sample_rate must be > 0");
  if (samples.empty()) throw ValidationError("Signal: samples must be non-empty");
  for (double v : samples)
    if (!std::isfinite(v)) throw ValidationError("Signal: non-finite sample");
}

void MultiChannelSignal::validate() const {
  if (channels.empty()) throw ValidationError("MultiChannelSignal: needs >=1 channel");
  for (const auto& c : channels) c.validate();
  for (const auto& c : channels) {
    if (c.size() != channels.front().size() || c.sample_rate != channels.front().sample_rate)
      throw ValidationError("MultiChannelSignal: channels must share length and rate");
  }
}

double mean(const std::vector<double>& v) {
  double acc = 0.0;
  for (double x : v) acc += x;
  return v.empty() ? 0.0 : acc / v.size();
}

double rms(const std::vector<double>& v) {
  double acc = 0.0;
  for (double x : v) acc += x * x;
  return v.empty() ? 0.0 : std::sqrt(acc / v.size());
}

double peak_to_peak(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double lo = v[0], hi = v[0];
  for (double x : v) {
    lo = std::min(lo, x);
    hi = std::max(hi, x);
  }
  return hi - lo;
}

Signal remove_mean(const Signal& s) {
  s.validate();
  Signal out = s;
  double m = mean(s.samples);
  for (double& x : out.samples) x -= m;
  return out;
}

Signal cyclic_shift(const Signal& s, size_t k) {
  s.validate();
  if (k >= s.size()) throw RangeError("cyclic_shift: k must satisfy 0 <= k < len");
  Signal out = s;
  size_t n = s.size();
  for (size_t i = 0; i < n; ++i) out.samples[i] = s.samples[(i + k) % n];
  return out;
}

Signal add_gaussian_noise(const Signal& s, double sigma, RngSeed seed) {
  s.validate();
  if (sigma < 0.0) throw ArgumentError("add_gaussian_noise: sigma must be >= 0");
  Signal out = s;
  if (sigma == 0.0) return out;
  Rng rng(seed.seed);
  for (double& x : out.samples) x += sigma * rng.normal();
  return out;
}

std::vector<Signal> segment_windows(const Signal& s, size_t window_len, size_t hop) {
  s.validate();
  if (window_len == 0 || window_len > s.size())
    throw ArgumentError("segment_windows: window_len must be in [1, len]");
  if (hop == 0) throw ArgumentError("segment_windows: hop must be >= 1");
  size_t count = (s.size() - window_len) / hop + 1;
  std::vector<Signal> out;
  out.reserve(count);
  for (size_t w = 0; w < count; ++w) {
    Signal win;
    win.sample_rate = s.sample_rate;
    win.start_time = s.start_time + static_cast<double>(w * hop) / s.sample_rate;
    win.channel_id = s.channel_id;
    win.unit = s.unit;
    win.samples.assign(s.samples.begin() + w * hop, s.samples.begin() + w * hop + window_len);
    out.push_back(std::move(win));
  }
  return out;
}

Signal linear_resample(const Signal& s, size_t new_len) {
  s.validate();
  if (new_len < 2) throw ArgumentError("linear_resample: new_len must be >= 2");
  Signal out = s;
  size_t n = s.size();
  out.samples.assign(new_len, 0.0);
  if (n == 1) {
    for (double& x : out.samples) x = s.samples[0];
  } else {
    double scale = static_cast<double>(n - 1) / static_cast<double>(new_len - 1);
    for (size_t i = 0; i < new_len; ++i) {
      double pos = i * scale;
      size_t i0 = static_cast<size_t>(pos);
      if (i0 >= n - 1) i0 = n - 2;
      double frac = pos - i0;
      out.samples[i] = s.samples[i0] * (1.0 - frac) + s.samples[i0 + 1] * frac;
    }
  }
  out.sample_rate = s.sample_rate * (static_cast<double>(new_len - 1) / (n - 1));
  return out;
}

}  // namespace pdx

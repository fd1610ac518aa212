#pragma once
#include <complex>
#include <cstdint>
#include <string>
#include <vector>

#include "pdx/signal.hpp"

namespace pdx {

enum class Wavelet { analytic_morlet, morse };

struct SSTConfig {
  Wavelet wavelet = Wavelet::analytic_morlet;
  double morse_beta = 30.0;
  double morse_gamma = 3.0;
  int voices_per_octave = 12;
  double freq_min = 16.0;    // Hz
  double freq_max = 1600.0;  // Hz
  double epsilon = 1e-9;     // reassignment magnitude threshold

  void validate(double sample_rate) const;
  // time-domain envelope standard deviation at frequency f, seconds
  double support_seconds(double f) const;
  // log-spaced analysis frequencies, ascending, freq_min * 2^(k/voices)
  std::vector<double> frequencies() const;
};

// CWT coefficients plus the spectral time derivative needed for reassignment.
struct CwtGrid {
  std::vector<std::complex<double>> w;   // [scale * n_times + t]
  std::vector<std::complex<double>> dw;  // d/dt of w, same layout
  std::vector<double> freqs;             // Hz per scale row
  double sample_rate = 0.0;
  double start_time = 0.0;
  size_t n_times = 0;

  std::complex<double> at(size_t s, size_t t) const { return w[s * n_times + t]; }
};

struct Spectrogram {
  std::vector<double> magnitudes;  // [freq_bin * time_bins + t], >= 0
  std::vector<double> freq_axis;   // Hz, strictly increasing
  std::vector<double> time_axis;   // s, strictly increasing

  size_t freq_bins() const { return freq_axis.size(); }
  size_t time_bins() const { return time_axis.size(); }
  double& at(size_t f, size_t t) { return magnitudes[f * time_bins() + t]; }
  double at(size_t f, size_t t) const { return magnitudes[f * time_bins() + t]; }
  void validate() const;
};

struct SpectroImage {
  uint32_t width = 256, height = 256, channels = 1;
  std::vector<float> pixels;  // [channel][row][col] row-major, row 0 = lowest frequency

  float at(uint32_t c, uint32_t r, uint32_t col) const {
    return pixels[(static_cast<size_t>(c) * height + r) * width + col];
  }
  void validate() const;
};

CwtGrid cwt(const Signal& s, const SSTConfig& cfg);

Spectrogram synchrosqueeze(const CwtGrid& grid, const SSTConfig& cfg);

// crop to <= 10*pump_freq, exp(scale_k * S), log-spaced frequency resample,
// bilinear resize to 256x256
SpectroImage postprocess_spectrogram(const Spectrogram& sg, double pump_freq, double scale_k);

// scale factor mapping the 99th-percentile magnitude to exp-argument 1
double suggest_scale_k(const std::vector<const Spectrogram*>& refs);

SpectroImage stack_images(const std::vector<SpectroImage>& singles);

void write_spectro_image(const std::string& path, const SpectroImage& img);
SpectroImage read_spectro_image(const std::string& path);
void write_pgm(const std::string& path, const SpectroImage& img, uint32_t channel = 0);

}  // namespace pdx

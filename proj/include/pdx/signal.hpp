#pragma once
#include <cstdint>
#include <string>
#include <vector>

#include "pdx/rng.hpp"

namespace pdx {

// Uniformly sampled real-valued time series.  Samples are double precision
// end to end; only the NN stack narrows to float.
struct Signal {
  std::vector<double> samples;
  double sample_rate = 0.0;  // Hz
  double start_time = 0.0;   // s
  std::string channel_id;
  std::string unit;  // "Pa" or "m3/s"

  size_t size() const { return samples.size(); }
  double duration() const { return samples.size() / sample_rate; }
  void validate() const;  // throws ValidationError on broken invariants
};

struct MultiChannelSignal {
  std::vector<Signal> channels;
  void validate() const;  // >=1 channel, equal lengths and rates
  size_t size() const { return channels.empty() ? 0 : channels.front().size(); }
};

struct RngSeed {
  uint64_t seed = 0;
};

double mean(const std::vector<double>& v);
double rms(const std::vector<double>& v);
double peak_to_peak(const std::vector<double>& v);

Signal remove_mean(const Signal& s);
Signal cyclic_shift(const Signal& s, size_t k);
Signal add_gaussian_noise(const Signal& s, double sigma, RngSeed seed);
std::vector<Signal> segment_windows(const Signal& s, size_t window_len, size_t hop);
Signal linear_resample(const Signal& s, size_t new_len);

}  // namespace pdx

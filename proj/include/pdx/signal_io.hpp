#pragma once
#include <string>

#include "pdx/signal.hpp"

namespace pdx {

// Signal file format: CSV `time_s,value` plus a JSON sidecar (<path>.meta.json)
// carrying sample_rate, unit, channel_id.  Values are printed with 17
// significant digits so the round trip is bit-exact for doubles.
void write_signal_csv(const Signal& s, const std::string& path);
Signal read_signal_csv(const std::string& path);

std::string format_g17(double v);

}  // namespace pdx

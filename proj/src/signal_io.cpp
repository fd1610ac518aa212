#include "pdx/signal_io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "pdx/errors.hpp"

namespace pdx {

std::string format_g17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return std::string(buf);
}

void write_signal_csv(const Signal& s, const std::string& path) {
  s.validate();
  std::ofstream f(path);
  if (!f) throw IoError("cannot open for write: " + path);
  f << "time_s,value\n";
  for (size_t i = 0; i < s.size(); ++i) {
    double t = s.start_time + static_cast<double>(i) / s.sample_rate;
    f << format_g17(t) << ',' << format_g17(s.samples[i]) << '\n';
  }
  if (!f) throw IoError("write failed: " + path);

  nlohmann::json meta{{"sample_rate", s.sample_rate},
                      {"unit", s.unit},
                      {"channel_id", s.channel_id},
                      {"start_time", s.start_time}};
  std::ofstream mf(path + ".meta.json");
  if (!mf) throw IoError("cannot open for write: " + path + ".meta.json");
  mf << meta.dump(2) << '\n';
}

Signal read_signal_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open for read: " + path);
  Signal s;
  std::string line;
  if (!std::getline(f, line) || line.rfind("time_s,value", 0) != 0)
    throw IoError("bad CSV header in " + path);
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    auto comma = line.find(',');
    if (comma == std::string::npos) throw IoError("malformed CSV row in " + path);
    s.samples.push_back(std::stod(line.substr(comma + 1)));
  }

  std::ifstream mf(path + ".meta.json");
  if (!mf) throw IoError("missing sidecar: " + path + ".meta.json");
  nlohmann::json meta = nlohmann::json::parse(mf, nullptr, true);
  s.sample_rate = meta.at("sample_rate").get<double>();
  s.unit = meta.value("unit", "");
  s.channel_id = meta.value("channel_id", "");
  s.start_time = meta.value("start_time", 0.0);
  s.validate();
  return s;
}

}  // namespace pdx

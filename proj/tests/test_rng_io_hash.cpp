#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "pdx/errors.hpp"
#include "pdx/hash.hpp"
#include "pdx/rng.hpp"
#include "pdx/signal_io.hpp"

using namespace pdx;

TEST_CASE("rng streams are pure functions of seed") {
  Rng a(123), b(123), c(124);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  bool any_diff = false;
  Rng a2(123);
  for (int i = 0; i < 100; ++i) any_diff |= (a2.next_u64() != c.next_u64());
  CHECK(any_diff);
}

TEST_CASE("rng uniform range and normal moments") {
  Rng r(9);
  double lo = 1.0, hi = 0.0, acc = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    double u = r.uniform();
    lo = std::min(lo, u);
    hi = std::max(hi, u);
    acc += u;
  }
  CHECK(lo >= 0.0);
  CHECK(hi < 1.0);
  CHECK(acc / n == doctest::Approx(0.5).epsilon(0.01));

  double m = 0.0, m2 = 0.0, m4 = 0.0;
  for (int i = 0; i < n; ++i) {
    double z = r.normal();
    m += z;
    m2 += z * z;
    m4 += z * z * z * z;
  }
  m /= n;
  m2 /= n;
  m4 /= n;
  CHECK(std::abs(m) < 0.02);
  CHECK(m2 == doctest::Approx(1.0).epsilon(0.02));
  CHECK(m4 == doctest::Approx(3.0).epsilon(0.06));  // Gaussian kurtosis
}

TEST_CASE("derive_seed separates streams") {
  CHECK(derive_seed(1, "init") != derive_seed(1, "shuffle"));
  CHECK(derive_seed(1, "init") != derive_seed(2, "init"));
  CHECK(derive_seed(5, uint64_t{0}) != derive_seed(5, uint64_t{1}));
  CHECK(derive_seed(7, "x") == derive_seed(7, "x"));
}

TEST_CASE("fnv-1a 64 known vectors") {
  // reference digests of the standard FNV-1a 64 test strings
  CHECK(fnv64("", 0) == 0xcbf29ce484222325ull);
  CHECK(fnv64("a", 1) == 0xaf63dc4c8601ec8cull);
  CHECK(fnv64("foobar", 6) == 0x85944171f73967e8ull);
  CHECK(hex64(0xcbf29ce484222325ull) == "cbf29ce484222325");

  Fnv64 h;
  h.update_str("abc").update_pod<uint32_t>(7);
  Fnv64 h2;
  h2.update_str("abc").update_pod<uint32_t>(7);
  CHECK(h.digest() == h2.digest());
}

TEST_CASE("signal CSV round trip is bit exact") {
  Signal s;
  s.sample_rate = 51200.0;
  s.start_time = 0.125;
  s.unit = "Pa";
  s.channel_id = "sensor_1";
  Rng rng(77);
  for (int i = 0; i < 500; ++i) s.samples.push_back(9.48e6 + 1e5 * rng.normal());
  s.samples.push_back(1.0 / 3.0);
  s.samples.push_back(1e-300);
  s.samples.push_back(-2.2250738585072014e-308);

  auto dir = std::filesystem::temp_directory_path() / "pdx_io_test";
  std::filesystem::create_directories(dir);
  auto path = (dir / "sig.csv").string();
  write_signal_csv(s, path);
  Signal r = read_signal_csv(path);
  REQUIRE(r.size() == s.size());
  for (size_t i = 0; i < s.size(); ++i) CHECK(r.samples[i] == s.samples[i]);
  CHECK(r.sample_rate == s.sample_rate);
  CHECK(r.start_time == s.start_time);
  CHECK(r.unit == "Pa");
  CHECK(r.channel_id == "sensor_1");
}

TEST_CASE("signal CSV error paths") {
  CHECK_THROWS_AS(read_signal_csv("/nonexistent/nope.csv"), IoError);
  auto dir = std::filesystem::temp_directory_path() / "pdx_io_test";
  std::filesystem::create_directories(dir);
  auto path = (dir / "bad.csv").string();
  {
    FILE* f = std::fopen(path.c_str(), "w");
    std::fputs("wrong,header\n1,2\n", f);
    std::fclose(f);
  }
  CHECK_THROWS_AS(read_signal_csv(path), IoError);
}

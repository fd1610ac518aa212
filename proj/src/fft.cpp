#include "pdx/fft.hpp"

#include <fftw3.h>

#include <cstring>
#include <map>
#include <mutex>

#include "pdx/errors.hpp"

namespace pdx {
namespace {

// FFTW plan creation is not thread-safe; executions on distinct buffers are.
std::mutex g_plan_mutex;

struct PlanCache {
  std::map<size_t, fftw_plan> r2c, c2r, fwd, bwd;
};
PlanCache& cache() {
  static PlanCache c;
  return c;
}

fftw_plan get_plan_r2c(size_t n, double* in, fftw_complex* out) {
  std::lock_guard<std::mutex> lk(g_plan_mutex);
  auto it = cache().r2c.find(n);
  if (it != cache().r2c.end()) return it->second;
  fftw_plan p = fftw_plan_dft_r2c_1d(static_cast<int>(n), in, out, FFTW_ESTIMATE);
  cache().r2c[n] = p;
  return p;
}
fftw_plan get_plan_c2r(size_t n, fftw_complex* in, double* out) {
  std::lock_guard<std::mutex> lk(g_plan_mutex);
  auto it = cache().c2r.find(n);
  if (it != cache().c2r.end()) return it->second;
  fftw_plan p = fftw_plan_dft_c2r_1d(static_cast<int>(n), in, out, FFTW_ESTIMATE);
  cache().c2r[n] = p;
  return p;
}
fftw_plan get_plan_c2c(size_t n, fftw_complex* in, fftw_complex* out, int sign) {
  std::lock_guard<std::mutex> lk(g_plan_mutex);
  auto& m = sign == FFTW_FORWARD ? cache().fwd : cache().bwd;
  auto it = m.find(n);
  if (it != m.end()) return it->second;
  fftw_plan p = fftw_plan_dft_1d(static_cast<int>(n), in, out, sign, FFTW_ESTIMATE);
  m[n] = p;
  return p;
}

struct FftwBuf {
  fftw_complex* p;
  explicit FftwBuf(size_t n) : p(fftw_alloc_complex(n)) {}
  ~FftwBuf() { fftw_free(p); }
};
struct FftwRealBuf {
  double* p;
  explicit FftwRealBuf(size_t n) : p(fftw_alloc_real(n)) {}
  ~FftwRealBuf() { fftw_free(p); }
};

}  // namespace

std::vector<std::complex<double>> rfft(const std::vector<double>& x) {
  if (x.empty()) throw ArgumentError("rfft: empty input");
  size_t n = x.size(), nb = n / 2 + 1;
  FftwRealBuf in(n);
  FftwBuf out(nb);
  std::memcpy(in.p, x.data(), n * sizeof(double));
  fftw_plan p = get_plan_r2c(n, in.p, out.p);
  fftw_execute_dft_r2c(p, in.p, out.p);
  std::vector<std::complex<double>> X(nb);
  std::memcpy(X.data(), out.p, nb * sizeof(fftw_complex));
  return X;
}

std::vector<double> irfft(const std::vector<std::complex<double>>& X, size_t n) {
  if (X.size() != n / 2 + 1) throw ArgumentError("irfft: bin count must be n/2+1");
  size_t nb = X.size();
  FftwBuf in(nb);
  FftwRealBuf out(n);
  std::memcpy(in.p, X.data(), nb * sizeof(fftw_complex));
  fftw_plan p = get_plan_c2r(n, in.p, out.p);
  fftw_execute_dft_c2r(p, in.p, out.p);
  std::vector<double> x(n);
  for (size_t i = 0; i < n; ++i) x[i] = out.p[i] / n;
  return x;
}

std::vector<std::complex<double>> fft(const std::vector<std::complex<double>>& x) {
  if (x.empty()) throw ArgumentError("fft: empty input");
  size_t n = x.size();
  FftwBuf in(n), out(n);
  std::memcpy(in.p, x.data(), n * sizeof(fftw_complex));
  fftw_plan p = get_plan_c2c(n, in.p, out.p, FFTW_FORWARD);
  fftw_execute_dft(p, in.p, out.p);
  std::vector<std::complex<double>> X(n);
  std::memcpy(X.data(), out.p, n * sizeof(fftw_complex));
  return X;
}

std::vector<std::complex<double>> ifft(const std::vector<std::complex<double>>& X) {
  if (X.empty()) throw ArgumentError("ifft: empty input");
  size_t n = X.size();
  FftwBuf in(n), out(n);
  std::memcpy(in.p, X.data(), n * sizeof(fftw_complex));
  fftw_plan p = get_plan_c2c(n, in.p, out.p, FFTW_BACKWARD);
  fftw_execute_dft(p, in.p, out.p);
  std::vector<std::complex<double>> x(n);
  for (size_t i = 0; i < n; ++i)
    x[i] = std::complex<double>(out.p[i][0] / n, out.p[i][1] / n);
  return x;
}

}  // namespace pdx

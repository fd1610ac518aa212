#pragma once
#include <complex>
#include <vector>

namespace pdx {

// Thin FFTW (double) wrapper.  Plans are created with FFTW_ESTIMATE so results
// are bit-reproducible across runs (no timing-dependent plan selection), and
// cached per length behind a mutex.

// forward DFT of a real sequence; returns n/2+1 non-negative-frequency bins
std::vector<std::complex<double>> rfft(const std::vector<double>& x);

// inverse of rfft (length n must be given; normalized so irfft(rfft(x)) == x)
std::vector<double> irfft(const std::vector<std::complex<double>>& X, size_t n);

// complex-to-complex transforms, normalized the same way (inverse divides by n)
std::vector<std::complex<double>> fft(const std::vector<std::complex<double>>& x);
std::vector<std::complex<double>> ifft(const std::vector<std::complex<double>>& X);

}  // namespace pdx

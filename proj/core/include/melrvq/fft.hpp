#pragma once

#include <complex>
#include <cstddef>
#include <vector>

namespace melrvq {

// In-place radix-2 decimation-in-time FFT. data.size() must be a power of two.
void fft_inplace(std::vector<std::complex<double>>& data, bool inverse = false);

// Power spectrum |X_k|^2 of a real frame zero-padded to n_fft (power of two).
// Returns n_fft/2 + 1 bins.
std::vector<double> power_spectrum(const std::vector<double>& frame, size_t n_fft);

// Frequency (Hz) of the strongest magnitude bin, excluding DC. The signal is
// zero-padded to the next power of two at least min_fft_size.
double dominant_frequency_hz(const std::vector<float>& samples, double sample_rate_hz,
                             size_t min_fft_size = 1 << 16);

}  // namespace melrvq

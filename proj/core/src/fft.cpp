#include "melrvq/fft.hpp"

#include <cmath>

#include "melrvq/errors.hpp"

namespace melrvq {

namespace {

bool is_pow2(size_t n) { return n != 0 && (n & (n - 1)) == 0; }

}  // namespace

void fft_inplace(std::vector<std::complex<double>>& data, bool inverse) {
    const size_t n = data.size();
    if (!is_pow2(n)) throw DomainError("fft size must be a power of two");
    if (n == 1) return;

    // Bit-reversal permutation.
    for (size_t i = 1, j = 0; i < n; ++i) {
        size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(data[i], data[j]);
    }

    for (size_t len = 2; len <= n; len <<= 1) {
        const double ang = (inverse ? 2.0 : -2.0) * M_PI / static_cast<double>(len);
        const std::complex<double> wlen(std::cos(ang), std::sin(ang));
        for (size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (size_t k = 0; k < len / 2; ++k) {
                const std::complex<double> u = data[i + k];
                const std::complex<double> v = data[i + k + len / 2] * w;
                data[i + k] = u + v;
                data[i + k + len / 2] = u - v;
                w *= wlen;
            }
        }
    }

    if (inverse) {
        const double inv_n = 1.0 / static_cast<double>(n);
        for (auto& x : data) x *= inv_n;
    }
}

std::vector<double> power_spectrum(const std::vector<double>& frame, size_t n_fft) {
    if (frame.size() > n_fft) throw DomainError("frame longer than fft size");
    std::vector<std::complex<double>> buf(n_fft, {0.0, 0.0});
    for (size_t i = 0; i < frame.size(); ++i) buf[i] = frame[i];
    fft_inplace(buf);
    std::vector<double> power(n_fft / 2 + 1);
    for (size_t k = 0; k < power.size(); ++k) power[k] = std::norm(buf[k]);
    return power;
}

double dominant_frequency_hz(const std::vector<float>& samples, double sample_rate_hz,
                             size_t min_fft_size) {
    if (samples.empty()) throw DomainError("dominant_frequency_hz: empty signal");
    size_t n = min_fft_size;
    while (n < samples.size()) n <<= 1;
    std::vector<std::complex<double>> buf(n, {0.0, 0.0});
    for (size_t i = 0; i < samples.size(); ++i) buf[i] = static_cast<double>(samples[i]);
    fft_inplace(buf);
    size_t best = 1;
    double best_mag = 0.0;
    for (size_t k = 1; k <= n / 2; ++k) {
        const double mag = std::norm(buf[k]);
        if (mag > best_mag) {
            best_mag = mag;
            best = k;
        }
    }
    return static_cast<double>(best) * sample_rate_hz / static_cast<double>(n);
}

}  // namespace melrvq

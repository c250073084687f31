#include "milasc/fft.hpp"

#include <cmath>
#include <cstdint>

#include "milasc/errors.hpp"

namespace milasc::fft {

namespace {

constexpr double kPi = 3.141592653589793238462643383279502884;

bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

std::size_t next_pow2(std::size_t n) {
    std::size_t p = 1;
    while (p < n) p <<= 1;
    return p;
}

} // namespace

void fft_pow2(std::vector<std::complex<double>>& a, bool inverse) {
    const std::size_t n = a.size();
    if (!is_pow2(n)) throw ValidationError("fft_pow2: size must be a power of two");
    if (n == 1) return;

    // bit-reversal permutation
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }

    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = (inverse ? 2.0 : -2.0) * kPi / static_cast<double>(len);
        const std::complex<double> wlen(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (std::size_t k = 0; k < len / 2; ++k) {
                const std::complex<double> u = a[i + k];
                const std::complex<double> v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wlen;
            }
        }
    }
    if (inverse) {
        const double scale = 1.0 / static_cast<double>(n);
        for (auto& v : a) v *= scale;
    }
}

std::vector<std::complex<double>> dft(std::vector<std::complex<double>> x, bool inverse) {
    const std::size_t n = x.size();
    if (n == 0) throw ValidationError("dft: empty input");
    if (is_pow2(n)) {
        fft_pow2(x, inverse);
        return x;
    }

    // Bluestein: nk = (n^2 + k^2 - (k - n)^2) / 2 turns the DFT into a
    // convolution with the chirp w_m = e^{-i pi m^2 / N}. The quadratic phase
    // is reduced mod 2N in exact integer arithmetic before evaluating
    // sin/cos, keeping the chirp accurate for large n.
    const double sign = inverse ? 1.0 : -1.0;
    std::vector<std::complex<double>> chirp(n);
    for (std::size_t m = 0; m < n; ++m) {
        const std::uint64_t m2 = (static_cast<std::uint64_t>(m) * m) % (2 * n);
        const double ang = sign * kPi * static_cast<double>(m2) / static_cast<double>(n);
        chirp[m] = std::complex<double>(std::cos(ang), std::sin(ang));
    }

    const std::size_t m = next_pow2(2 * n - 1);
    std::vector<std::complex<double>> a(m), b(m);
    for (std::size_t i = 0; i < n; ++i) a[i] = x[i] * chirp[i];
    for (std::size_t i = 0; i < n; ++i) {
        b[i] = std::conj(chirp[i]);
        if (i != 0) b[m - i] = std::conj(chirp[i]);
    }
    fft_pow2(a, false);
    fft_pow2(b, false);
    for (std::size_t i = 0; i < m; ++i) a[i] *= b[i];
    fft_pow2(a, true);

    std::vector<std::complex<double>> out(n);
    for (std::size_t k = 0; k < n; ++k) out[k] = a[k] * chirp[k];
    if (inverse) {
        const double scale = 1.0 / static_cast<double>(n);
        for (auto& v : out) v *= scale;
    }
    return out;
}

std::vector<double> power_spectrum(const std::vector<double>& frame) {
    const std::size_t n = frame.size();
    std::vector<std::complex<double>> x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = std::complex<double>(frame[i], 0.0);
    const auto spectrum = dft(std::move(x), false);
    std::vector<double> power(n / 2 + 1);
    for (std::size_t k = 0; k < power.size(); ++k) power[k] = std::norm(spectrum[k]);
    return power;
}

} // namespace milasc::fft

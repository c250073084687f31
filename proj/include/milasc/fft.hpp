#pragma once

#include <complex>
#include <vector>

namespace milasc::fft {

/// In-place iterative radix-2 FFT; size must be a power of two.
void fft_pow2(std::vector<std::complex<double>>& a, bool inverse);

/// DFT of arbitrary length via Bluestein's chirp-z transform (power-of-two
/// sizes dispatch straight to fft_pow2). Forward: X_k = sum_n x_n e^{-2pi i nk/N}.
std::vector<std::complex<double>> dft(std::vector<std::complex<double>> x, bool inverse = false);

/// Squared-magnitude spectrum of a real frame: |X_k|^2 for k = 0..N/2.
std::vector<double> power_spectrum(const std::vector<double>& frame);

} // namespace milasc::fft

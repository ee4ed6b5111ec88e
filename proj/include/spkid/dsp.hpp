#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <vector>

#include "spkid/error.hpp"

namespace spkid::dsp {

inline constexpr double kPi = 3.14159265358979323846;

inline bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

/// In-place iterative radix-2 FFT. Size must be a power of two.
/// The inverse transform includes the 1/n factor.
inline void fft(std::vector<std::complex<double>>& a, bool inverse = false) {
  const std::size_t n = a.size();
  require(is_power_of_two(n), "ConfigInvalid", "FFT size must be a power of two");

  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }

  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = 2.0 * kPi / static_cast<double>(len) * (inverse ? 1.0 : -1.0);
    const std::complex<double> wlen(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t j = 0; j < len / 2; ++j) {
        const std::complex<double> u = a[i + j];
        const std::complex<double> v = a[i + j + len / 2] * w;
        a[i + j] = u + v;
        a[i + j + len / 2] = u - v;
        w *= wlen;
      }
    }
  }

  if (inverse) {
    for (auto& x : a) x /= static_cast<double>(n);
  }
}

/// FFT of a real signal zero-padded to n_fft. Signal must not exceed n_fft.
inline std::vector<std::complex<double>> fft_real(const std::vector<double>& x, std::size_t n_fft) {
  require(x.size() <= n_fft, "ConfigInvalid", "signal longer than FFT size");
  std::vector<std::complex<double>> a(n_fft, {0.0, 0.0});
  for (std::size_t i = 0; i < x.size(); ++i) a[i] = {x[i], 0.0};
  fft(a);
  return a;
}

/// One-sided power spectrum |X_k|^2 for k = 0..n_fft/2.
inline std::vector<double> power_spectrum(const std::vector<double>& frame, std::size_t n_fft) {
  const auto spec = fft_real(frame, n_fft);
  std::vector<double> power(n_fft / 2 + 1);
  for (std::size_t k = 0; k < power.size(); ++k) power[k] = std::norm(spec[k]);
  return power;
}

/// Orthonormal DCT-II of x, truncated to the first n_out coefficients.
inline std::vector<double> dct2(const std::vector<double>& x, std::size_t n_out) {
  const std::size_t m = x.size();
  require(m > 0, "ConfigInvalid", "DCT input is empty");
  require(n_out <= m, "ConfigInvalid", "DCT output longer than input");
  std::vector<double> y(n_out, 0.0);
  const double scale0 = std::sqrt(1.0 / static_cast<double>(m));
  const double scale = std::sqrt(2.0 / static_cast<double>(m));
  for (std::size_t u = 0; u < n_out; ++u) {
    double acc = 0.0;
    for (std::size_t t = 0; t < m; ++t) {
      acc += x[t] * std::cos(kPi * static_cast<double>(u) * (2.0 * static_cast<double>(t) + 1.0) /
                             (2.0 * static_cast<double>(m)));
    }
    y[u] = acc * (u == 0 ? scale0 : scale);
  }
  return y;
}

}  // namespace spkid::dsp

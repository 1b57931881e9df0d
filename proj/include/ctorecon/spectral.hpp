#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace ctorecon::spectral {

using Complex = std::complex<double>;

std::size_t next_pow2(std::size_t n);

/// In-place unnormalised DFT of `rows` contiguous rows of length n.
void fft_rows(std::span<Complex> data, std::size_t rows, std::size_t n, bool inverse);

/// In-place unnormalised 2D DFT of a row-major rows x cols array.
void fft2d(std::span<Complex> data, std::size_t rows, std::size_t cols, bool inverse);

/// DFT on a symmetric grid: both sample and frequency indices are measured
/// from the centre c = (n-1)/2,
///   X[k] = sum_m x[m] exp(-2 pi i (k-c)(m-c) / n).
/// Reversing the input reverses the output, so a detector flip r -> -r is a
/// frequency flip. The forward transform is unnormalised; the inverse carries 1/n.
class CenteredDft {
 public:
  explicit CenteredDft(std::size_t n);

  std::size_t size() const { return n_; }

  /// Real rows -> (re, im) planes, each rows x n.
  void forward(std::span<const double> in, std::size_t rows, std::span<double> re, std::span<double> im) const;
  /// (re, im) planes -> real part of the inverse transform.
  void inverse_real(std::span<const double> re, std::span<const double> im, std::size_t rows, std::span<double> out) const;

  /// Transposes of the two maps above (for reverse-mode).
  void forward_transpose(std::span<const double> gre, std::span<const double> gim, std::size_t rows, std::span<double> out) const;
  void inverse_real_transpose(std::span<const double> g, std::size_t rows, std::span<double> gre, std::span<double> gim) const;

 private:
  std::size_t n_;
  std::vector<double> cos_;  // n x n phase tables
  std::vector<double> sin_;
};

/// Ramp (|nu|) filtering of sinogram rows by zero-padded FFT.
///
/// nu is in cycles per unit length, so for a row p(r) the output approximates
/// the continuous convolution (p * h)(r) with h^ = |nu|. The operator is
/// symmetric, so it is its own transpose.
class RampFilter {
 public:
  RampFilter(std::size_t detCount, double detSpacing, std::size_t padFactor);

  std::size_t padded_length() const { return padded_; }
  double response(std::size_t bin) const { return response_[bin]; }

  void apply(std::span<const double> in, std::size_t rows, std::span<double> out) const;

 private:
  std::size_t detCount_;
  std::size_t padded_;
  std::vector<double> response_;
};

}  // namespace ctorecon::spectral

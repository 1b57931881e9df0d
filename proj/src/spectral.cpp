#include "ctorecon/spectral.hpp"

#include <fftw3.h>

#include <cmath>
#include <mutex>
#include <numbers>
#include <stdexcept>

namespace ctorecon::spectral {

namespace {

// The FFTW planner is not re-entrant.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

void execute_many(std::span<Complex> data, int rank, const int* dims, int howmany, int dist, bool inverse) {
  auto* ptr = reinterpret_cast<fftw_complex*>(data.data());
  fftw_plan plan;
  {
    std::lock_guard lock(planner_mutex());
    plan = fftw_plan_many_dft(rank, dims, howmany, ptr, nullptr, 1, dist, ptr, nullptr, 1, dist,
                              inverse ? FFTW_BACKWARD : FFTW_FORWARD, FFTW_ESTIMATE);
  }
  if (plan == nullptr) throw std::runtime_error("FFTW planning failed");
  fftw_execute(plan);
  std::lock_guard lock(planner_mutex());
  fftw_destroy_plan(plan);
}

}  // namespace

std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

void fft_rows(std::span<Complex> data, std::size_t rows, std::size_t n, bool inverse) {
  if (data.size() != rows * n) throw std::invalid_argument("fft_rows: size mismatch");
  if (rows == 0 || n == 0) return;
  const int dims[1] = {static_cast<int>(n)};
  execute_many(data, 1, dims, static_cast<int>(rows), static_cast<int>(n), inverse);
}

void fft2d(std::span<Complex> data, std::size_t rows, std::size_t cols, bool inverse) {
  if (data.size() != rows * cols) throw std::invalid_argument("fft2d: size mismatch");
  if (rows == 0 || cols == 0) return;
  const int dims[2] = {static_cast<int>(rows), static_cast<int>(cols)};
  execute_many(data, 2, dims, 1, static_cast<int>(rows * cols), inverse);
}

CenteredDft::CenteredDft(std::size_t n) : n_(n), cos_(n * n), sin_(n * n) {
  if (n == 0) throw std::invalid_argument("CenteredDft: n must be > 0");
  // Phase index (2k-n+1)(2m-n+1) mod 4n; tables built with exact
  // odd/even symmetry so that index reversal is bit-exact.
  const std::size_t period = 4 * n;
  std::vector<double> c(period), s(period);
  for (std::size_t q = 0; q <= period / 2; ++q) {
    const double a = 2.0 * std::numbers::pi * static_cast<double>(q) / static_cast<double>(period);
    c[q] = std::cos(a);
    s[q] = std::sin(a);
    if (q > 0 && q < period / 2) {
      c[period - q] = c[q];
      s[period - q] = -s[q];
    }
  }
  s[0] = 0.0;
  s[period / 2] = 0.0;
  const auto ln = static_cast<long long>(n);
  const auto lp = static_cast<long long>(period);
  for (long long k = 0; k < ln; ++k) {
    for (long long m = 0; m < ln; ++m) {
      long long q = ((2 * k - ln + 1) * (2 * m - ln + 1)) % lp;
      if (q < 0) q += lp;
      cos_[static_cast<std::size_t>(k * ln + m)] = c[static_cast<std::size_t>(q)];
      sin_[static_cast<std::size_t>(k * ln + m)] = s[static_cast<std::size_t>(q)];
    }
  }
}

void CenteredDft::forward(std::span<const double> in, std::size_t rows, std::span<double> re, std::span<double> im) const {
  const std::size_t n = n_;
  for (std::size_t row = 0; row < rows; ++row) {
    const double* x = in.data() + row * n;
    for (std::size_t k = 0; k < n; ++k) {
      const double* ck = cos_.data() + k * n;
      const double* sk = sin_.data() + k * n;
      double sr = 0.0, si = 0.0;
      for (std::size_t m = 0; m < n; ++m) {
        sr += x[m] * ck[m];
        si -= x[m] * sk[m];
      }
      re[row * n + k] = sr;
      im[row * n + k] = si;
    }
  }
}

void CenteredDft::inverse_real(std::span<const double> re, std::span<const double> im, std::size_t rows,
                               std::span<double> out) const {
  const std::size_t n = n_;
  const double scale = 1.0 / static_cast<double>(n);
  // The tables are symmetric in (k, m), so row m of the table serves as column m.
  for (std::size_t row = 0; row < rows; ++row) {
    const double* zr = re.data() + row * n;
    const double* zi = im.data() + row * n;
    for (std::size_t m = 0; m < n; ++m) {
      const double* cm = cos_.data() + m * n;
      const double* sm = sin_.data() + m * n;
      double acc = 0.0;
      for (std::size_t k = 0; k < n; ++k) acc += zr[k] * cm[k] - zi[k] * sm[k];
      out[row * n + m] = acc * scale;
    }
  }
}

void CenteredDft::forward_transpose(std::span<const double> gre, std::span<const double> gim, std::size_t rows,
                                    std::span<double> out) const {
  const std::size_t n = n_;
  for (std::size_t row = 0; row < rows; ++row) {
    const double* gr = gre.data() + row * n;
    const double* gi = gim.data() + row * n;
    for (std::size_t m = 0; m < n; ++m) {
      const double* cm = cos_.data() + m * n;
      const double* sm = sin_.data() + m * n;
      double acc = 0.0;
      for (std::size_t k = 0; k < n; ++k) acc += gr[k] * cm[k] - gi[k] * sm[k];
      out[row * n + m] = acc;
    }
  }
}

void CenteredDft::inverse_real_transpose(std::span<const double> g, std::size_t rows, std::span<double> gre,
                                         std::span<double> gim) const {
  forward(g, rows, gre, gim);
  const double scale = 1.0 / static_cast<double>(n_);
  for (std::size_t i = 0; i < rows * n_; ++i) {
    gre[i] *= scale;
    gim[i] *= scale;
  }
}

RampFilter::RampFilter(std::size_t detCount, double detSpacing, std::size_t padFactor)
    : detCount_(detCount), padded_(next_pow2(padFactor * detCount)), response_(padded_) {
  if (padFactor < 2) throw std::invalid_argument("RampFilter: padFactor must be >= 2");
  if (detCount == 0 || !(detSpacing > 0.0)) throw std::invalid_argument("RampFilter: bad detector grid");
  const double dnu = 1.0 / (static_cast<double>(padded_) * detSpacing);
  for (std::size_t k = 0; k < padded_; ++k) {
    const double bin = k <= padded_ / 2 ? static_cast<double>(k) : static_cast<double>(padded_ - k);
    response_[k] = bin * dnu;
  }
}

void RampFilter::apply(std::span<const double> in, std::size_t rows, std::span<double> out) const {
  const std::size_t n = padded_;
  std::vector<Complex> buf(rows * n, Complex(0.0, 0.0));
  for (std::size_t row = 0; row < rows; ++row)
    for (std::size_t d = 0; d < detCount_; ++d) buf[row * n + d] = Complex(in[row * detCount_ + d], 0.0);
  fft_rows(buf, rows, n, false);
  for (std::size_t row = 0; row < rows; ++row)
    for (std::size_t k = 0; k < n; ++k) buf[row * n + k] *= response_[k];
  fft_rows(buf, rows, n, true);
  const double scale = 1.0 / static_cast<double>(n);
  for (std::size_t row = 0; row < rows; ++row)
    for (std::size_t d = 0; d < detCount_; ++d) out[row * detCount_ + d] = buf[row * n + d].real() * scale;
}

}  // namespace ctorecon::spectral

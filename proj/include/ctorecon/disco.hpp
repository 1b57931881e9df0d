#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "ctorecon/tensor.hpp"

namespace ctorecon {

/// Boundary extension along one grid axis.
///
/// FlippedCircularTheta is only valid on axis 0 of a (theta, r) tensor: rows
/// wrap around in theta and every wrapped row is reversed along axis 1, which
/// realises p(theta + pi, r) = p(theta, -r).
enum class PaddingMode { Zero, Reflect, Circular, FlippedCircularTheta };

struct KernelBasisConfig {
  double cutoff = 0.02;  // support radius in normalised domain units
  std::size_t rings = 5;
  std::size_t perRing = 7;
};

/// Piecewise-linear basis on the disk of radius `cutoff`.
///
/// Basis 0 is an isotropic radial hat (peak 1 at the origin, zero at
/// cutoff/rings). Basis (k, m), k = 1..rings, m = 0..perRing-1, is a radial
/// hat centred at k*cutoff/rings with half-width cutoff/rings times a periodic
/// angular hat centred at 2*pi*m/perRing with half-width 2*pi/perRing. The
/// polar angle of an offset (d0, d1) is atan2(d1, d0), so negating the axis-1
/// offset maps slot m to slot perRing - m. All functions are zero outside the
/// cutoff disk; the outermost ring peaks on the cutoff circle and is cut there.
class KernelBasis {
 public:
  explicit KernelBasis(KernelBasisConfig cfg);

  const KernelBasisConfig& config() const { return cfg_; }
  double cutoff() const { return cfg_.cutoff; }
  std::size_t size() const { return 1 + cfg_.rings * cfg_.perRing; }
  std::size_t index(std::size_t ring, std::size_t slot) const { return 1 + (ring - 1) * cfg_.perRing + slot; }

  double evaluate(std::size_t basis, double d0, double d1) const;

  /// visit(basisIndex, value) for every basis function that is non-zero at (d0, d1).
  template <typename Visit>
  void for_each_nonzero(double d0, double d1, Visit&& visit) const;

 private:
  KernelBasisConfig cfg_;
  double ringWidth_;
};

/// Input grid of a DISCO layer: uniform samples at (i + 0.5) * pitch on each
/// axis of the normalised domain, with a boundary extension per axis.
struct DiscoGrid {
  std::size_t rows = 0;
  std::size_t cols = 0;
  double pitch0 = 0.0;
  double pitch1 = 0.0;
  PaddingMode pad0 = PaddingMode::Zero;
  PaddingMode pad1 = PaddingMode::Zero;

  std::size_t size() const { return rows * cols; }
  /// Unit-square grid: pitch = 1 / count on each axis.
  static DiscoGrid unit(std::size_t rows, std::size_t cols, PaddingMode pad0, PaddingMode pad1);
};

/// Maps a virtual (possibly out-of-range) index pair to stored data under the
/// grid's padding. Returns nullopt where the extension is zero. Throws
/// invalid_argument when reflect padding would need more than rows-1 samples.
std::optional<std::pair<std::size_t, std::size_t>> map_padded_index(const DiscoGrid& grid, long long i, long long j);

/// Explicit padding (same index rule as the DISCO quadrature uses).
Tensor pad(const Tensor& t, PaddingMode mode0, std::size_t margin0, PaddingMode mode1, std::size_t margin1);

/// Quadrature table of every basis function between an input and an output
/// grid: row i lists (input j, basis l, kappa_l(u_j - v_i) * q_j).
class BasisOperator {
 public:
  struct Entry {
    std::uint32_t index;
    std::uint32_t basis;
    double weight;
  };

  BasisOperator(const KernelBasis& basis, const DiscoGrid& in, std::size_t outRows, std::size_t outCols,
                double outPitch0, double outPitch1);
  /// Output grid equal to the input grid.
  BasisOperator(const KernelBasis& basis, const DiscoGrid& in);

  std::size_t in_size() const { return inSize_; }
  std::size_t out_size() const { return outSize_; }
  std::size_t out_rows() const { return outRows_; }
  std::size_t out_cols() const { return outCols_; }
  std::size_t basis_count() const { return basisCount_; }
  std::span<const Entry> row(std::size_t out) const {
    return {entries_.data() + rowStart_[out], rowStart_[out + 1] - rowStart_[out]};
  }
  std::size_t nonzeros() const { return entries_.size(); }

  /// z[(l * channels + c) * outSize + o] = sum_j w(o, j, l) * x[c * inSize + j]
  void expand(std::span<const double> x, std::size_t channels, std::span<double> z) const;
  /// Transpose of `expand`.
  void expand_transpose(std::span<const double> gz, std::size_t channels, std::span<double> gx) const;

  /// out[k * outSize + o] = sum_{c,l} coeffs[(k * channels + c) * L + l] * z[(l * channels + c) * outSize + o]
  void mix(std::span<const double> coeffs, std::size_t outChannels, std::size_t channels, std::span<const double> z,
           std::span<double> out) const;
  /// Gradient of `mix` with respect to the coefficients (same layout as coeffs).
  void mix_grad_coeffs(std::span<const double> gout, std::size_t outChannels, std::size_t channels,
                       std::span<const double> z, std::span<double> gcoeffs) const;
  /// Gradient of `mix` with respect to z (same layout as z).
  void mix_grad_z(std::span<const double> coeffs, std::size_t outChannels, std::size_t channels,
                  std::span<const double> gout, std::span<double> gz) const;

 private:
  std::size_t inSize_ = 0;
  std::size_t outSize_ = 0;
  std::size_t outRows_ = 0;
  std::size_t outCols_ = 0;
  std::size_t basisCount_ = 0;
  std::vector<std::size_t> rowStart_;
  std::vector<Entry> entries_;

  // Same input and output grid: the table is a fixed stencil over a padded
  // copy of the input, which runs as contiguous row sweeps.
  struct Tap {
    long long d0;
    long long d1;
    double weight;
  };
  bool stencil_ = false;
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::size_t margin0_ = 0;
  std::size_t margin1_ = 0;
  std::vector<long long> padSource_;  // padded position -> input index, -1 for zero
  std::vector<std::size_t> tapStart_;  // taps grouped by basis
  std::vector<Tap> taps_;

  void expand_stencil(std::span<const double> x, std::size_t channels, std::span<double> z) const;
  void expand_stencil_transpose(std::span<const double> gz, std::size_t channels, std::span<double> gx) const;
};

/// Function-space kernel: basis plus one coefficient vector per channel pair,
/// laid out coeffs[(out * inChannels + in) * basisSize + l].
struct DiscoKernel {
  KernelBasis basis;
  std::size_t inChannels = 1;
  std::size_t outChannels = 1;
  std::vector<double> coeffs;

  DiscoKernel(KernelBasis basis, std::size_t inChannels, std::size_t outChannels);
  double& coeff(std::size_t out, std::size_t in, std::size_t l) { return coeffs[(out * inChannels + in) * basis.size() + l]; }
};

/// A kernel bound to a particular pair of grids.
struct DiscreteOperator {
  std::shared_ptr<const BasisOperator> table;
  std::vector<double> coeffs;
  std::size_t inChannels = 1;
  std::size_t outChannels = 1;
};

DiscreteOperator discretize(const DiscoKernel& kernel, const DiscoGrid& in);
DiscreteOperator discretize(const DiscoKernel& kernel, const DiscoGrid& in, std::size_t outRows, std::size_t outCols,
                            double outPitch0, double outPitch1);

/// out[k][i] = sum_c sum_j w_kc(i, j) in[c][j], accumulated in a fixed order.
Tensor apply(const DiscreteOperator& op, const Tensor& input);

namespace testing {
/// Mutation hook: when set, FlippedCircularTheta wraps without reversing r.
/// Exists so the equivariance suite can be shown to detect a broken rule.
void set_flip_disabled(bool disabled);
bool flip_disabled();
}  // namespace testing

// ---------------------------------------------------------------------------

template <typename Visit>
void KernelBasis::for_each_nonzero(double d0, double d1, Visit&& visit) const {
  const double rho = std::hypot(d0, d1);
  if (rho > cfg_.cutoff) return;
  const double u = rho / ringWidth_;
  if (u < 1.0) visit(std::size_t{0}, 1.0 - u);
  if (cfg_.rings == 0) return;

  const double slots = static_cast<double>(cfg_.perRing);
  double t = std::atan2(d1, d0) / (2.0 * 3.14159265358979323846) * slots;
  if (t < 0.0) t += slots;
  double tf = std::floor(t);
  double frac = t - tf;
  auto m0 = static_cast<std::size_t>(tf);
  if (m0 >= cfg_.perRing) m0 = 0;
  const std::size_t m1 = (m0 + 1) % cfg_.perRing;

  const auto kLow = static_cast<std::size_t>(std::floor(u));
  for (std::size_t k = kLow; k <= kLow + 1; ++k) {
    if (k < 1 || k > cfg_.rings) continue;
    const double radial = 1.0 - std::abs(u - static_cast<double>(k));
    if (radial <= 0.0) continue;
    if (cfg_.perRing == 1) {
      visit(index(k, 0), radial);
      continue;
    }
    if (1.0 - frac > 0.0) visit(index(k, m0), radial * (1.0 - frac));
    if (frac > 0.0) visit(index(k, m1), radial * frac);
  }
}

}  // namespace ctorecon

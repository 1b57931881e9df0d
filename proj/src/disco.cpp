#include "ctorecon/disco.hpp"

#include <atomic>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <algorithm>

#include "ctorecon/linalg.hpp"
#include "ctorecon/parallel.hpp"

namespace ctorecon {

namespace {

std::atomic<bool> g_flipDisabled{false};

/// Single-axis index map. Returns -1 for zero extension.
long long map_axis(PaddingMode mode, long long i, long long n) {
  if (i >= 0 && i < n) return i;
  switch (mode) {
    case PaddingMode::Zero:
      return -1;
    case PaddingMode::Reflect: {
      const long long m = i < 0 ? -i : 2 * (n - 1) - i;
      if (m < 0 || m >= n) throw std::invalid_argument("reflect padding margin exceeds dimension - 1");
      return m;
    }
    case PaddingMode::Circular:
    case PaddingMode::FlippedCircularTheta:
      return ((i % n) + n) % n;
  }
  return -1;
}

}  // namespace

namespace testing {
void set_flip_disabled(bool disabled) { g_flipDisabled.store(disabled); }
bool flip_disabled() { return g_flipDisabled.load(); }
}  // namespace testing

KernelBasis::KernelBasis(KernelBasisConfig cfg) : cfg_(cfg) {
  if (!(cfg_.cutoff > 0.0)) throw std::invalid_argument("KernelBasis: cutoff must be > 0");
  if (cfg_.rings > 0 && cfg_.perRing == 0) throw std::invalid_argument("KernelBasis: perRing must be > 0");
  ringWidth_ = cfg_.rings > 0 ? cfg_.cutoff / static_cast<double>(cfg_.rings) : cfg_.cutoff;
}

double KernelBasis::evaluate(std::size_t basis, double d0, double d1) const {
  double value = 0.0;
  for_each_nonzero(d0, d1, [&](std::size_t l, double v) {
    if (l == basis) value += v;
  });
  return value;
}

DiscoGrid DiscoGrid::unit(std::size_t rows, std::size_t cols, PaddingMode pad0, PaddingMode pad1) {
  return DiscoGrid{rows, cols, 1.0 / static_cast<double>(rows), 1.0 / static_cast<double>(cols), pad0, pad1};
}

std::optional<std::pair<std::size_t, std::size_t>> map_padded_index(const DiscoGrid& grid, long long i, long long j) {
  if (grid.pad1 == PaddingMode::FlippedCircularTheta)
    throw std::invalid_argument("flippedCircularTheta padding is only valid on the theta (row) axis");
  const auto n0 = static_cast<long long>(grid.rows);
  const auto n1 = static_cast<long long>(grid.cols);
  const long long mi = map_axis(grid.pad0, i, n0);
  if (mi < 0) return std::nullopt;
  long long mj = map_axis(grid.pad1, j, n1);
  if (mj < 0) return std::nullopt;
  if (grid.pad0 == PaddingMode::FlippedCircularTheta && !testing::flip_disabled()) {
    // Each full wrap in theta is a half turn, which negates r.
    const long long wraps = i >= 0 ? i / n0 : -((-i + n0 - 1) / n0);
    if (wraps % 2 != 0) mj = n1 - 1 - mj;
  }
  return std::pair{static_cast<std::size_t>(mi), static_cast<std::size_t>(mj)};
}

Tensor pad(const Tensor& t, PaddingMode mode0, std::size_t margin0, PaddingMode mode1, std::size_t margin1) {
  if (margin0 > t.rows || margin1 > t.cols) throw std::invalid_argument("pad: margin larger than tensor dimension");
  const DiscoGrid grid{t.rows, t.cols, 1.0, 1.0, mode0, mode1};
  Tensor out(t.channels, t.rows + 2 * margin0, t.cols + 2 * margin1);
  for (std::size_t c = 0; c < t.channels; ++c) {
    for (std::size_t i = 0; i < out.rows; ++i) {
      for (std::size_t j = 0; j < out.cols; ++j) {
        const auto src = map_padded_index(grid, static_cast<long long>(i) - static_cast<long long>(margin0),
                                          static_cast<long long>(j) - static_cast<long long>(margin1));
        out.at(c, i, j) = src ? t.at(c, src->first, src->second) : 0.0;
      }
    }
  }
  return out;
}

BasisOperator::BasisOperator(const KernelBasis& basis, const DiscoGrid& in)
    : BasisOperator(basis, in, in.rows, in.cols, in.pitch0, in.pitch1) {}

BasisOperator::BasisOperator(const KernelBasis& basis, const DiscoGrid& in, std::size_t outRows, std::size_t outCols,
                             double outPitch0, double outPitch1)
    : inSize_(in.size()), outSize_(outRows * outCols), outRows_(outRows), outCols_(outCols), basisCount_(basis.size()) {
  if (in.rows == 0 || in.cols == 0 || outRows == 0 || outCols == 0) throw std::invalid_argument("BasisOperator: empty grid");
  if (!(in.pitch0 > 0.0 && in.pitch1 > 0.0 && outPitch0 > 0.0 && outPitch1 > 0.0))
    throw std::invalid_argument("BasisOperator: pitches must be > 0");
  if (inSize_ > std::numeric_limits<std::uint32_t>::max() || outSize_ > std::numeric_limits<std::uint32_t>::max())
    throw std::invalid_argument("BasisOperator: grid too large");

  const double cutoff = basis.cutoff();
  const double q = in.pitch0 * in.pitch1;
  // On a shared grid the offsets are exact integer multiples of the pitch,
  // which keeps the table exactly translation invariant.
  const bool sameAxis0 = in.pitch0 == outPitch0;
  const bool sameAxis1 = in.pitch1 == outPitch1;

  rowStart_.assign(outSize_ + 1, 0);
  for (std::size_t o0 = 0; o0 < outRows; ++o0) {
    const double v0 = (static_cast<double>(o0) + 0.5) * outPitch0;
    const auto i0lo = static_cast<long long>(std::ceil((v0 - cutoff) / in.pitch0 - 0.5)) - 1;
    const auto i0hi = static_cast<long long>(std::floor((v0 + cutoff) / in.pitch0 - 0.5)) + 1;
    for (std::size_t o1 = 0; o1 < outCols; ++o1) {
      const double v1 = (static_cast<double>(o1) + 0.5) * outPitch1;
      const auto i1lo = static_cast<long long>(std::ceil((v1 - cutoff) / in.pitch1 - 0.5)) - 1;
      const auto i1hi = static_cast<long long>(std::floor((v1 + cutoff) / in.pitch1 - 0.5)) + 1;
      for (long long i0 = i0lo; i0 <= i0hi; ++i0) {
        const double d0 = sameAxis0 ? static_cast<double>(i0 - static_cast<long long>(o0)) * in.pitch0
                                    : (static_cast<double>(i0) + 0.5) * in.pitch0 - v0;
        if (std::abs(d0) > cutoff) continue;
        for (long long i1 = i1lo; i1 <= i1hi; ++i1) {
          const double d1 = sameAxis1 ? static_cast<double>(i1 - static_cast<long long>(o1)) * in.pitch1
                                      : (static_cast<double>(i1) + 0.5) * in.pitch1 - v1;
          if (d0 * d0 + d1 * d1 > cutoff * cutoff * (1.0 + 1e-12)) continue;
          bool any = false;
          basis.for_each_nonzero(d0, d1, [&](std::size_t, double) { any = true; });
          if (!any) continue;
          const auto src = map_padded_index(in, i0, i1);
          if (!src) continue;
          const auto j = static_cast<std::uint32_t>(src->first * in.cols + src->second);
          basis.for_each_nonzero(d0, d1, [&](std::size_t l, double v) {
            entries_.push_back(Entry{j, static_cast<std::uint32_t>(l), v * q});
          });
        }
      }
      rowStart_[o0 * outCols + o1 + 1] = entries_.size();
    }
  }

  if (in.rows != outRows || in.cols != outCols || !sameAxis0 || !sameAxis1) return;

  // Stencil form: collect the taps of an unclipped output point.
  stencil_ = true;
  rows_ = in.rows;
  cols_ = in.cols;
  std::vector<std::vector<Tap>> byBasis(basisCount_);
  const auto reach0 = static_cast<long long>(std::floor(cutoff / in.pitch0)) + 1;
  const auto reach1 = static_cast<long long>(std::floor(cutoff / in.pitch1)) + 1;
  for (long long d0i = -reach0; d0i <= reach0; ++d0i) {
    const double d0 = static_cast<double>(d0i) * in.pitch0;
    for (long long d1i = -reach1; d1i <= reach1; ++d1i) {
      const double d1 = static_cast<double>(d1i) * in.pitch1;
      if (d0 * d0 + d1 * d1 > cutoff * cutoff * (1.0 + 1e-12)) continue;
      basis.for_each_nonzero(d0, d1, [&](std::size_t l, double v) {
        byBasis[l].push_back(Tap{d0i, d1i, v * q});
        margin0_ = std::max<std::size_t>(margin0_, static_cast<std::size_t>(std::llabs(d0i)));
        margin1_ = std::max<std::size_t>(margin1_, static_cast<std::size_t>(std::llabs(d1i)));
      });
    }
  }
  tapStart_.assign(basisCount_ + 1, 0);
  for (std::size_t l = 0; l < basisCount_; ++l) {
    taps_.insert(taps_.end(), byBasis[l].begin(), byBasis[l].end());
    tapStart_[l + 1] = taps_.size();
  }
  const std::size_t prows = rows_ + 2 * margin0_;
  const std::size_t pcols = cols_ + 2 * margin1_;
  padSource_.assign(prows * pcols, -1);
  for (std::size_t i = 0; i < prows; ++i)
    for (std::size_t j = 0; j < pcols; ++j) {
      const auto src = map_padded_index(in, static_cast<long long>(i) - static_cast<long long>(margin0_),
                                        static_cast<long long>(j) - static_cast<long long>(margin1_));
      if (src) padSource_[i * pcols + j] = static_cast<long long>(src->first * cols_ + src->second);
    }
}

namespace {

// [k][c][l] <-> [k][l][c]
std::vector<double> coeffs_to_basis_major(std::span<const double> coeffs, std::size_t outChannels, std::size_t channels,
                                          std::size_t L) {
  std::vector<double> out(coeffs.size());
  for (std::size_t k = 0; k < outChannels; ++k)
    for (std::size_t c = 0; c < channels; ++c)
      for (std::size_t l = 0; l < L; ++l) out[(k * L + l) * channels + c] = coeffs[(k * channels + c) * L + l];
  return out;
}

}  // namespace

void BasisOperator::expand_stencil(std::span<const double> x, std::size_t channels, std::span<double> z) const {
  const std::size_t pcols = cols_ + 2 * margin1_;
  const std::size_t psize = padSource_.size();
  const std::size_t L = basisCount_;
  std::vector<double> xp(channels * psize);
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t p = 0; p < psize; ++p)
      xp[c * psize + p] = padSource_[p] < 0 ? 0.0 : x[c * inSize_ + static_cast<std::size_t>(padSource_[p])];
  parallel_for(channels * L, [&](std::size_t begin, std::size_t end) {
    for (std::size_t lc = begin; lc < end; ++lc) {
      const std::size_t l = lc / channels;
      const std::size_t c = lc % channels;
      double* zp = z.data() + lc * outSize_;
      std::fill(zp, zp + outSize_, 0.0);
      const double* src = xp.data() + c * psize;
      for (std::size_t t = tapStart_[l]; t < tapStart_[l + 1]; ++t) {
        const Tap& tap = taps_[t];
        const double w = tap.weight;
        const std::size_t off = static_cast<std::size_t>(static_cast<long long>(margin0_) + tap.d0) * pcols +
                                static_cast<std::size_t>(static_cast<long long>(margin1_) + tap.d1);
        for (std::size_t i = 0; i < rows_; ++i) {
          const double* s = src + off + i * pcols;
          double* d = zp + i * cols_;
          for (std::size_t j = 0; j < cols_; ++j) d[j] += w * s[j];
        }
      }
    }
  });
}

void BasisOperator::expand_stencil_transpose(std::span<const double> gz, std::size_t channels,
                                             std::span<double> gx) const {
  const std::size_t pcols = cols_ + 2 * margin1_;
  const std::size_t psize = padSource_.size();
  const std::size_t L = basisCount_;
  parallel_for(channels, [&](std::size_t begin, std::size_t end) {
    std::vector<double> gp(psize);
    for (std::size_t c = begin; c < end; ++c) {
      std::fill(gp.begin(), gp.end(), 0.0);
      for (std::size_t l = 0; l < L; ++l) {
        const double* g = gz.data() + (l * channels + c) * outSize_;
        for (std::size_t t = tapStart_[l]; t < tapStart_[l + 1]; ++t) {
          const Tap& tap = taps_[t];
          const double w = tap.weight;
          const std::size_t off = static_cast<std::size_t>(static_cast<long long>(margin0_) + tap.d0) * pcols +
                                  static_cast<std::size_t>(static_cast<long long>(margin1_) + tap.d1);
          for (std::size_t i = 0; i < rows_; ++i) {
            double* d = gp.data() + off + i * pcols;
            const double* s = g + i * cols_;
            for (std::size_t j = 0; j < cols_; ++j) d[j] += w * s[j];
          }
        }
      }
      // Fold the padded gradient back onto the stored samples.
      double* out = gx.data() + c * inSize_;
      std::fill(out, out + inSize_, 0.0);
      for (std::size_t p = 0; p < psize; ++p)
        if (padSource_[p] >= 0) out[static_cast<std::size_t>(padSource_[p])] += gp[p];
    }
  });
}

void BasisOperator::expand(std::span<const double> x, std::size_t channels, std::span<double> z) const {
  const std::size_t L = basisCount_;
  if (x.size() != channels * inSize_ || z.size() != outSize_ * channels * L)
    throw std::invalid_argument("BasisOperator::expand: size mismatch");
  if (stencil_) {
    expand_stencil(x, channels, z);
    return;
  }
  std::fill(z.begin(), z.end(), 0.0);
  parallel_for(outSize_, [&](std::size_t begin, std::size_t end) {
    for (std::size_t o = begin; o < end; ++o)
      for (const Entry& e : row(o))
        for (std::size_t c = 0; c < channels; ++c)
          z[(e.basis * channels + c) * outSize_ + o] += e.weight * x[c * inSize_ + e.index];
  });
}

void BasisOperator::expand_transpose(std::span<const double> gz, std::size_t channels, std::span<double> gx) const {
  const std::size_t L = basisCount_;
  if (gx.size() != channels * inSize_ || gz.size() != outSize_ * channels * L)
    throw std::invalid_argument("BasisOperator::expand_transpose: size mismatch");
  if (stencil_) {
    expand_stencil_transpose(gz, channels, gx);
    return;
  }
  std::fill(gx.begin(), gx.end(), 0.0);
  parallel_for(channels, [&](std::size_t begin, std::size_t end) {
    for (std::size_t c = begin; c < end; ++c)
      for (std::size_t o = 0; o < outSize_; ++o)
        for (const Entry& e : row(o))
          gx[c * inSize_ + e.index] += e.weight * gz[(e.basis * channels + c) * outSize_ + o];
  });
}

void BasisOperator::mix(std::span<const double> coeffs, std::size_t outChannels, std::size_t channels,
                        std::span<const double> z, std::span<double> out) const {
  const std::size_t L = basisCount_;
  const std::size_t width = channels * L;
  if (coeffs.size() != outChannels * width || z.size() != outSize_ * width || out.size() != outChannels * outSize_)
    throw std::invalid_argument("BasisOperator::mix: size mismatch");
  const auto cb = coeffs_to_basis_major(coeffs, outChannels, channels, L);
  // out (O x P) = C (O x W) * z (W x P)
  linalg::gemm(false, false, outChannels, outSize_, width, cb.data(), width, z.data(), outSize_, out.data(), outSize_);
}

void BasisOperator::mix_grad_coeffs(std::span<const double> gout, std::size_t outChannels, std::size_t channels,
                                    std::span<const double> z, std::span<double> gcoeffs) const {
  const std::size_t L = basisCount_;
  const std::size_t width = channels * L;
  if (gcoeffs.size() != outChannels * width || z.size() != outSize_ * width || gout.size() != outChannels * outSize_)
    throw std::invalid_argument("BasisOperator::mix_grad_coeffs: size mismatch");
  std::vector<double> gb(outChannels * width);
  // gC (O x W) = gout (O x P) * z^T
  linalg::gemm(false, true, outChannels, width, outSize_, gout.data(), outSize_, z.data(), outSize_, gb.data(), width);
  for (std::size_t k = 0; k < outChannels; ++k)
    for (std::size_t c = 0; c < channels; ++c)
      for (std::size_t l = 0; l < L; ++l) gcoeffs[(k * channels + c) * L + l] = gb[(k * L + l) * channels + c];
}

void BasisOperator::mix_grad_z(std::span<const double> coeffs, std::size_t outChannels, std::size_t channels,
                               std::span<const double> gout, std::span<double> gz) const {
  const std::size_t L = basisCount_;
  const std::size_t width = channels * L;
  if (coeffs.size() != outChannels * width || gz.size() != outSize_ * width || gout.size() != outChannels * outSize_)
    throw std::invalid_argument("BasisOperator::mix_grad_z: size mismatch");
  const auto cb = coeffs_to_basis_major(coeffs, outChannels, channels, L);
  // gz (W x P) = C^T (W x O) * gout (O x P)
  linalg::gemm(true, false, width, outSize_, outChannels, cb.data(), width, gout.data(), outSize_, gz.data(), outSize_);
}

DiscoKernel::DiscoKernel(KernelBasis b, std::size_t in, std::size_t out)
    : basis(std::move(b)), inChannels(in), outChannels(out), coeffs(in * out * basis.size(), 0.0) {}

DiscreteOperator discretize(const DiscoKernel& kernel, const DiscoGrid& in) {
  return discretize(kernel, in, in.rows, in.cols, in.pitch0, in.pitch1);
}

DiscreteOperator discretize(const DiscoKernel& kernel, const DiscoGrid& in, std::size_t outRows, std::size_t outCols,
                            double outPitch0, double outPitch1) {
  for (double c : kernel.coeffs)
    if (!std::isfinite(c)) throw std::invalid_argument("discretize: non-finite coefficient");
  if (kernel.coeffs.size() != kernel.inChannels * kernel.outChannels * kernel.basis.size())
    throw std::invalid_argument("discretize: coefficient count mismatch");
  DiscreteOperator op;
  op.table = std::make_shared<BasisOperator>(kernel.basis, in, outRows, outCols, outPitch0, outPitch1);
  op.coeffs = kernel.coeffs;
  op.inChannels = kernel.inChannels;
  op.outChannels = kernel.outChannels;
  return op;
}

Tensor apply(const DiscreteOperator& op, const Tensor& input) {
  const BasisOperator& t = *op.table;
  if (input.channels != op.inChannels || input.plane() != t.in_size())
    throw std::invalid_argument("apply: input shape does not match operator");
  std::vector<double> z(t.out_size() * op.inChannels * t.basis_count());
  t.expand(input.data, op.inChannels, z);
  Tensor out(op.outChannels, t.out_rows(), t.out_cols());
  t.mix(op.coeffs, op.outChannels, op.inChannels, z, out.data);
  return out;
}

}  // namespace ctorecon

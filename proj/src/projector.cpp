#include "ctorecon/projector.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "ctorecon/parallel.hpp"
#include "ctorecon/spectral.hpp"

namespace ctorecon {

namespace {

/// Per-view ray geometry in pixel-index units.
struct ViewGeometry {
  double cosT, sinT;
  double step;      // physical step
  long long half;   // samples k in [-half, half]
};

ViewGeometry view_geometry(const ProjectorConfig& cfg, std::size_t view) {
  const double theta = cfg.angles.angles[view];
  ViewGeometry g{std::cos(theta), std::sin(theta), cfg.stepFraction * cfg.spacing, 0};
  // Bilinear support extends one pixel beyond the outer pixel centres.
  const double hx = 0.5 * static_cast<double>(cfg.width + 1) * cfg.spacing;
  const double hy = 0.5 * static_cast<double>(cfg.height + 1) * cfg.spacing;
  g.half = static_cast<long long>(std::ceil(std::sqrt(hx * hx + hy * hy) / g.step));
  return g;
}

/// Calls visit(pixelIndex, weight) for every bilinear tap of every sample on
/// ray (view, det); weights include the step length. The visiting order is
/// fixed, so gather and scatter use identical coefficients.
template <typename Visit>
void walk_ray(const ProjectorConfig& cfg, const ViewGeometry& g, std::size_t det, Visit&& visit) {
  const double r = (static_cast<double>(det) - 0.5 * static_cast<double>(cfg.detCount - 1)) * cfg.detSpacing;
  const double cx = 0.5 * static_cast<double>(cfg.width - 1);
  const double cy = 0.5 * static_cast<double>(cfg.height - 1);
  const double inv = 1.0 / cfg.spacing;
  // Point at sample k, in fractional pixel indices: base + k * delta.
  const double baseX = r * g.cosT * inv + cx;
  const double baseY = r * g.sinT * inv + cy;
  const double deltaX = -g.sinT * g.step * inv;
  const double deltaY = g.cosT * g.step * inv;

  // Restrict k to the open box (-1, W) x (-1, H) where taps can be non-zero.
  double kLo = -static_cast<double>(g.half);
  double kHi = static_cast<double>(g.half);
  auto clip = [&](double base, double delta, double lo, double hi) {
    if (std::abs(delta) < 1e-15) {
      if (base <= lo || base >= hi) {
        kLo = 1.0;
        kHi = 0.0;
      }
      return;
    }
    double a = (lo - base) / delta;
    double b = (hi - base) / delta;
    if (a > b) std::swap(a, b);
    kLo = std::max(kLo, a);
    kHi = std::min(kHi, b);
  };
  clip(baseX, deltaX, -1.0, static_cast<double>(cfg.width));
  clip(baseY, deltaY, -1.0, static_cast<double>(cfg.height));
  if (kLo > kHi) return;
  const auto k0 = static_cast<long long>(std::floor(kLo));
  const auto k1 = static_cast<long long>(std::ceil(kHi));
  const long long w = static_cast<long long>(cfg.width);
  const long long h = static_cast<long long>(cfg.height);

  for (long long k = std::max(k0, -g.half); k <= std::min(k1, g.half); ++k) {
    const double fx = baseX + static_cast<double>(k) * deltaX;
    const double fy = baseY + static_cast<double>(k) * deltaY;
    const double flx = std::floor(fx);
    const double fly = std::floor(fy);
    const auto ix = static_cast<long long>(flx);
    const auto iy = static_cast<long long>(fly);
    if (ix < -1 || ix >= w || iy < -1 || iy >= h) continue;
    const double wx = fx - flx;
    const double wy = fy - fly;
    const bool x0ok = ix >= 0;
    const bool x1ok = ix + 1 < w;
    const bool y0ok = iy >= 0;
    const bool y1ok = iy + 1 < h;
    if (y0ok) {
      const std::size_t row = static_cast<std::size_t>(iy * w);
      if (x0ok) visit(row + static_cast<std::size_t>(ix), g.step * (1.0 - wx) * (1.0 - wy));
      if (x1ok) visit(row + static_cast<std::size_t>(ix + 1), g.step * wx * (1.0 - wy));
    }
    if (y1ok) {
      const std::size_t row = static_cast<std::size_t>((iy + 1) * w);
      if (x0ok) visit(row + static_cast<std::size_t>(ix), g.step * (1.0 - wx) * wy);
      if (x1ok) visit(row + static_cast<std::size_t>(ix + 1), g.step * wx * wy);
    }
  }
}

void check_sizes(const ProjectorConfig& cfg, std::size_t imageSize, std::size_t sinoSize) {
  if (imageSize != cfg.image_size()) throw std::invalid_argument("projector: image size does not match config");
  if (sinoSize != cfg.sinogram_size()) throw std::invalid_argument("projector: sinogram size does not match config");
}

}  // namespace

ProjectorConfig ProjectorConfig::for_image(const Image& img, AngleSet angles, std::size_t detCount, double detSpacing,
                                           double stepFraction) {
  ProjectorConfig cfg;
  cfg.width = img.width;
  cfg.height = img.height;
  cfg.spacing = img.spacing;
  cfg.detCount = detCount;
  cfg.detSpacing = detSpacing;
  cfg.angles = std::move(angles);
  cfg.stepFraction = stepFraction;
  cfg.validate();
  return cfg;
}

void ProjectorConfig::validate() const {
  if (width == 0 || height == 0) throw std::invalid_argument("projector: zero image dimension");
  if (!(spacing > 0.0)) throw std::invalid_argument("projector: spacing must be > 0");
  if (detCount == 0 || !(detSpacing > 0.0)) throw std::invalid_argument("projector: bad detector grid");
  if (angles.size() == 0) throw std::invalid_argument("projector: no views");
  if (!(stepFraction > 0.0 && stepFraction <= 1.0)) throw std::invalid_argument("projector: stepFraction must be in (0, 1]");
}

std::size_t ProjectorConfig::covering_detector_count(std::size_t width, std::size_t height, double spacing,
                                                     double detSpacing) {
  const double diag = std::hypot(static_cast<double>(width), static_cast<double>(height)) * spacing;
  return static_cast<std::size_t>(std::ceil(diag / detSpacing));
}

void forward_view(const ProjectorConfig& cfg, std::size_t view, std::span<const double> image, std::span<double> row) {
  const ViewGeometry g = view_geometry(cfg, view);
  for (std::size_t d = 0; d < cfg.detCount; ++d) {
    double acc = 0.0;
    walk_ray(cfg, g, d, [&](std::size_t idx, double wgt) { acc += wgt * image[idx]; });
    row[d] = acc;
  }
}

void adjoint_view(const ProjectorConfig& cfg, std::size_t view, std::span<const double> row, std::span<double> image) {
  const ViewGeometry g = view_geometry(cfg, view);
  for (std::size_t d = 0; d < cfg.detCount; ++d) {
    const double y = row[d];
    if (y == 0.0) continue;
    walk_ray(cfg, g, d, [&](std::size_t idx, double wgt) { image[idx] += wgt * y; });
  }
}

void forward_values(const ProjectorConfig& cfg, std::span<const double> image, std::span<double> sino) {
  cfg.validate();
  check_sizes(cfg, image.size(), sino.size());
  parallel_for(cfg.angles.size(), [&](std::size_t begin, std::size_t end) {
    for (std::size_t v = begin; v < end; ++v) forward_view(cfg, v, image, sino.subspan(v * cfg.detCount, cfg.detCount));
  });
}

void adjoint_values(const ProjectorConfig& cfg, std::span<const double> sino, std::span<double> image) {
  cfg.validate();
  check_sizes(cfg, image.size(), sino.size());
  std::fill(image.begin(), image.end(), 0.0);
  const std::size_t views = cfg.angles.size();
  if (thread_count() <= 1) {
    for (std::size_t v = 0; v < views; ++v) adjoint_view(cfg, v, sino.subspan(v * cfg.detCount, cfg.detCount), image);
    return;
  }
  // Fixed partition into chunks, reduced in chunk order.
  const std::size_t chunks = std::min<std::size_t>(views, 16);
  std::vector<std::vector<double>> partial(chunks, std::vector<double>(image.size(), 0.0));
  parallel_for(chunks, [&](std::size_t begin, std::size_t end) {
    for (std::size_t c = begin; c < end; ++c) {
      const std::size_t v0 = c * views / chunks;
      const std::size_t v1 = (c + 1) * views / chunks;
      for (std::size_t v = v0; v < v1; ++v) adjoint_view(cfg, v, sino.subspan(v * cfg.detCount, cfg.detCount), partial[c]);
    }
  });
  for (const auto& p : partial)
    for (std::size_t i = 0; i < image.size(); ++i) image[i] += p[i];
}

Sinogram forward(const ProjectorConfig& cfg, const Image& img) {
  if (img.width != cfg.width || img.height != cfg.height) throw std::invalid_argument("forward: image dimensions do not match config");
  Sinogram sino(cfg.angles, cfg.detCount, cfg.detSpacing);
  forward_values(cfg, img.values, sino.values);
  return sino;
}

Image adjoint(const ProjectorConfig& cfg, const Sinogram& sino) {
  if (sino.views() != cfg.angles.size() || sino.detCount != cfg.detCount)
    throw std::invalid_argument("adjoint: sinogram grid does not match config");
  Image img(cfg.width, cfg.height, cfg.spacing);
  adjoint_values(cfg, sino.values, img.values);
  return img;
}

FourierSliceReport fourier_slice_check(const ProjectorConfig& cfg, const Image& img, double band) {
  using spectral::Complex;
  if (img.width != img.height) throw std::invalid_argument("fourier_slice_check: image must be square");
  if (img.width != cfg.width || img.height != cfg.height) throw std::invalid_argument("fourier_slice_check: dims mismatch");
  const std::size_t n = img.width;
  const double s = img.spacing;

  // 2D spectrum of the zero-padded image, origin-corrected so that bin k is
  // the continuous transform at nu = k / (M s).
  const std::size_t m = spectral::next_pow2(4 * n);
  std::vector<Complex> grid(m * m, Complex(0.0, 0.0));
  const std::size_t c = n / 2;
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t i = 0; i < n; ++i) grid[((j + m - c) % m) * m + ((i + m - c) % m)] = img.at(i, j);
  spectral::fft2d(grid, m, m, false);
  const double shift = static_cast<double>(c) - 0.5 * static_cast<double>(n - 1);
  auto signed_bin = [m](std::size_t k) { return k <= m / 2 ? static_cast<double>(k) : static_cast<double>(k) - static_cast<double>(m); };
  for (std::size_t ky = 0; ky < m; ++ky) {
    for (std::size_t kx = 0; kx < m; ++kx) {
      const double phase = -2.0 * std::numbers::pi * (signed_bin(kx) + signed_bin(ky)) * shift / static_cast<double>(m);
      grid[ky * m + kx] *= s * s * std::polar(1.0, phase);
    }
  }
  auto sample2d = [&](double nux, double nuy) {
    // Fractional bins; |nu| is far below the grid Nyquist so no wrap ambiguity.
    double fx = nux * static_cast<double>(m) * s;
    double fy = nuy * static_cast<double>(m) * s;
    const double flx = std::floor(fx);
    const double fly = std::floor(fy);
    const double wx = fx - flx;
    const double wy = fy - fly;
    auto at = [&](long long kx, long long ky) {
      const auto mm = static_cast<long long>(m);
      return grid[static_cast<std::size_t>(((ky % mm) + mm) % mm) * m + static_cast<std::size_t>(((kx % mm) + mm) % mm)];
    };
    const auto ix = static_cast<long long>(flx);
    const auto iy = static_cast<long long>(fly);
    return (1 - wx) * (1 - wy) * at(ix, iy) + wx * (1 - wy) * at(ix + 1, iy) + (1 - wx) * wy * at(ix, iy + 1) +
           wx * wy * at(ix + 1, iy + 1);
  };

  // 1D spectra of each projection row.
  const Sinogram sino = forward(cfg, img);
  const std::size_t det = cfg.detCount;
  const std::size_t mr = spectral::next_pow2(4 * det);
  const std::size_t cd = det / 2;
  const double shiftR = static_cast<double>(cd) - 0.5 * static_cast<double>(det - 1);
  const std::size_t views = cfg.angles.size();
  std::vector<Complex> rows(views * mr, Complex(0.0, 0.0));
  for (std::size_t v = 0; v < views; ++v)
    for (std::size_t d = 0; d < det; ++d) rows[v * mr + (d + mr - cd) % mr] = sino.at(v, d);
  spectral::fft_rows(rows, views, mr, false);

  const double nyquist = 0.5 / s;
  const double dnu = 1.0 / (static_cast<double>(mr) * cfg.detSpacing);
  FourierSliceReport report;
  double maxRef = 0.0;
  double maxDiff = 0.0;
  std::vector<double> minMag, maxMag;
  for (std::size_t k = 0; k < mr; ++k) {
    const double bin = k <= mr / 2 ? static_cast<double>(k) : static_cast<double>(k) - static_cast<double>(mr);
    const double nu = bin * dnu;
    if (std::abs(nu) > band * nyquist) continue;
    double lo = std::numeric_limits<double>::infinity();
    double hi = 0.0;
    for (std::size_t v = 0; v < views; ++v) {
      const double theta = cfg.angles.angles[v];
      const Complex p = rows[v * mr + k] * cfg.detSpacing * std::polar(1.0, -2.0 * std::numbers::pi * bin * shiftR / static_cast<double>(mr));
      const Complex f = sample2d(nu * std::cos(theta), nu * std::sin(theta));
      maxRef = std::max(maxRef, std::abs(f));
      maxDiff = std::max(maxDiff, std::abs(p - f));
      lo = std::min(lo, std::abs(p));
      hi = std::max(hi, std::abs(p));
      ++report.comparedPoints;
    }
    if (hi > 0.0) report.maxMagnitudeSpread = std::max(report.maxMagnitudeSpread, (hi - lo) / hi);
  }
  report.maxRelError = maxRef > 0.0 ? maxDiff / maxRef : 0.0;
  return report;
}

}  // namespace ctorecon

#include "ctorecon/core.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "ctorecon/random.hpp"

namespace ctorecon {

Image::Image(std::size_t width, std::size_t height, double spacing)
    : Image(width, height, spacing, std::vector<double>(width * height, 0.0)) {}

Image::Image(std::size_t width, std::size_t height, double spacing, std::vector<double> values)
    : width(width), height(height), spacing(spacing), values(std::move(values)) {
  if (width == 0 || height == 0) throw std::invalid_argument("Image: zero dimension");
  if (!(spacing > 0.0) || !std::isfinite(spacing)) throw std::invalid_argument("Image: spacing must be > 0");
  if (this->values.size() != width * height) throw std::invalid_argument("Image: values length != width*height");
}

AngleSet::AngleSet(std::vector<double> a, double period) : angles(std::move(a)), period(period) {
  if (!(period > 0.0)) throw std::invalid_argument("AngleSet: period must be > 0");
  for (std::size_t k = 0; k < angles.size(); ++k) {
    if (!(angles[k] >= 0.0 && angles[k] < period)) throw std::invalid_argument("AngleSet: angle outside [0, period)");
    if (k > 0 && !(angles[k] > angles[k - 1])) throw std::invalid_argument("AngleSet: angles must be strictly increasing");
  }
}

AngleSet AngleSet::make_uniform(std::size_t count, double period) {
  if (count == 0) throw std::invalid_argument("AngleSet: need at least one view");
  std::vector<double> a(count);
  for (std::size_t k = 0; k < count; ++k) a[k] = static_cast<double>(k) * period / static_cast<double>(count);
  AngleSet set(std::move(a), period);
  set.uniform = true;
  return set;
}

Sinogram::Sinogram(AngleSet angles, std::size_t detCount, double detSpacing)
    : Sinogram(angles, detCount, detSpacing, std::vector<double>(angles.size() * detCount, 0.0)) {}

Sinogram::Sinogram(AngleSet angles, std::size_t detCount, double detSpacing, std::vector<double> v)
    : angleSet(std::move(angles)), detCount(detCount), detSpacing(detSpacing), values(std::move(v)) {
  if (detCount == 0) throw std::invalid_argument("Sinogram: zero detectors");
  if (!(detSpacing > 0.0)) throw std::invalid_argument("Sinogram: detSpacing must be > 0");
  if (values.size() != angleSet.size() * detCount) throw std::invalid_argument("Sinogram: values length mismatch");
}

SampleMask::SampleMask(std::vector<std::size_t> kept) : keptIndices(std::move(kept)) {
  if (keptIndices.empty()) throw std::invalid_argument("SampleMask: empty");
  for (std::size_t k = 1; k < keptIndices.size(); ++k)
    if (keptIndices[k] <= keptIndices[k - 1]) throw std::invalid_argument("SampleMask: indices must be strictly increasing");
}

SampleMask SampleMask::uniform_stride(std::size_t total, std::size_t kept) {
  if (kept == 0 || kept > total || total % kept != 0)
    throw std::invalid_argument("SampleMask: kept view count must divide the total view count");
  const std::size_t stride = total / kept;
  std::vector<std::size_t> idx(kept);
  for (std::size_t k = 0; k < kept; ++k) idx[k] = k * stride;
  return SampleMask(std::move(idx));
}

SampleMask SampleMask::identity(std::size_t total) { return uniform_stride(total, total); }

Image resample_bilinear(const Image& img, std::size_t newWidth, std::size_t newHeight) {
  if (newWidth < 2 || newHeight < 2) throw std::invalid_argument("resample_bilinear: target dimension < 2");
  const double extentX = static_cast<double>(img.width) * img.spacing;
  const double extentY = static_cast<double>(img.height) * img.spacing;
  const double sx = extentX / static_cast<double>(newWidth);
  const double sy = extentY / static_cast<double>(newHeight);
  Image out(newWidth, newHeight, sx);
  const double maxI = static_cast<double>(img.width - 1);
  const double maxJ = static_cast<double>(img.height - 1);

  for (std::size_t j = 0; j < newHeight; ++j) {
    const double y = (static_cast<double>(j) - 0.5 * static_cast<double>(newHeight - 1)) * sy;
    const double fy = std::clamp(y / img.spacing + 0.5 * maxJ, 0.0, maxJ);
    const std::size_t j0 = std::min(static_cast<std::size_t>(fy), img.height > 1 ? img.height - 2 : 0);
    const double wy = img.height > 1 ? fy - static_cast<double>(j0) : 0.0;
    const std::size_t j1 = img.height > 1 ? j0 + 1 : j0;
    for (std::size_t i = 0; i < newWidth; ++i) {
      const double x = (static_cast<double>(i) - 0.5 * static_cast<double>(newWidth - 1)) * sx;
      const double fx = std::clamp(x / img.spacing + 0.5 * maxI, 0.0, maxI);
      const std::size_t i0 = std::min(static_cast<std::size_t>(fx), img.width > 1 ? img.width - 2 : 0);
      const double wx = img.width > 1 ? fx - static_cast<double>(i0) : 0.0;
      const std::size_t i1 = img.width > 1 ? i0 + 1 : i0;
      const double top = (1.0 - wx) * img.at(i0, j0) + wx * img.at(i1, j0);
      const double bottom = (1.0 - wx) * img.at(i0, j1) + wx * img.at(i1, j1);
      out.at(i, j) = (1.0 - wy) * top + wy * bottom;
    }
  }
  return out;
}

Sinogram add_gaussian_noise(const Sinogram& sino, double sigma, std::uint64_t seed) {
  if (!(sigma >= 0.0)) throw std::invalid_argument("add_gaussian_noise: sigma must be >= 0");
  Sinogram out = sino;
  if (sigma == 0.0) return out;
  Philox rng(seed);
  for (double& v : out.values) v += sigma * rng.normal();
  return out;
}

Sinogram apply_mask(const Sinogram& full, const SampleMask& mask) {
  if (mask.keptIndices.empty()) throw std::invalid_argument("apply_mask: empty mask");
  std::vector<double> angles;
  std::vector<double> values;
  angles.reserve(mask.keptIndices.size());
  values.reserve(mask.keptIndices.size() * full.detCount);
  for (std::size_t idx : mask.keptIndices) {
    if (idx >= full.views()) throw std::invalid_argument("apply_mask: index out of range");
    angles.push_back(full.angleSet.angles[idx]);
    const auto row = full.values.begin() + static_cast<std::ptrdiff_t>(idx * full.detCount);
    values.insert(values.end(), row, row + static_cast<std::ptrdiff_t>(full.detCount));
  }
  AngleSet set(std::move(angles), full.angleSet.period);
  // A uniform stride over a uniform set is still uniform.
  if (full.angleSet.uniform && full.views() % mask.keptIndices.size() == 0) {
    const std::size_t stride = full.views() / mask.keptIndices.size();
    bool strided = true;
    for (std::size_t k = 0; k < mask.keptIndices.size(); ++k) strided = strided && mask.keptIndices[k] == k * stride;
    set.uniform = strided;
  }
  return Sinogram(std::move(set), full.detCount, full.detSpacing, std::move(values));
}

}  // namespace ctorecon

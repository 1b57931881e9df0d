#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace ctorecon {

/// Raised when a binary file does not match the expected layout.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised on broken internal invariants (e.g. an op without a backward rule).
class InternalError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Scalar attenuation field on a uniform Cartesian grid.
///
/// Sample (i, j) (column i, row j) sits at
/// ((i - (width-1)/2) * spacing, (j - (height-1)/2) * spacing), so the grid is
/// centred on the origin. Values are row-major: values[j * width + i].
struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  double spacing = 1.0;
  std::vector<double> values;

  Image() = default;
  Image(std::size_t width, std::size_t height, double spacing);
  Image(std::size_t width, std::size_t height, double spacing, std::vector<double> values);

  double& at(std::size_t i, std::size_t j) { return values[j * width + i]; }
  double at(std::size_t i, std::size_t j) const { return values[j * width + i]; }

  double x_of(std::size_t i) const {
    return (static_cast<double>(i) - 0.5 * static_cast<double>(width - 1)) * spacing;
  }
  double y_of(std::size_t j) const {
    return (static_cast<double>(j) - 0.5 * static_cast<double>(height - 1)) * spacing;
  }
  std::size_t size() const { return values.size(); }
};

/// Ordered set of view angles in [0, period).
struct AngleSet {
  std::vector<double> angles;
  double period = 0.0;
  bool uniform = false;

  AngleSet() = default;
  AngleSet(std::vector<double> angles, double period);

  /// angles[k] = k * period / count.
  static AngleSet make_uniform(std::size_t count, double period);

  std::size_t size() const { return angles.size(); }
};

/// Projection data p(theta, r), row-major [angle][detector].
///
/// Detector bin d sits at r = (d - (detCount-1)/2) * detSpacing.
struct Sinogram {
  AngleSet angleSet;
  std::size_t detCount = 0;
  double detSpacing = 1.0;
  std::vector<double> values;

  Sinogram() = default;
  Sinogram(AngleSet angles, std::size_t detCount, double detSpacing);
  Sinogram(AngleSet angles, std::size_t detCount, double detSpacing, std::vector<double> values);

  std::size_t views() const { return angleSet.size(); }
  double r_of(std::size_t d) const {
    return (static_cast<double>(d) - 0.5 * static_cast<double>(detCount - 1)) * detSpacing;
  }
  double& at(std::size_t view, std::size_t d) { return values[view * detCount + d]; }
  double at(std::size_t view, std::size_t d) const { return values[view * detCount + d]; }
};

/// Angle sampling operator M: indices of the views that are kept.
struct SampleMask {
  std::vector<std::size_t> keptIndices;

  SampleMask() = default;
  explicit SampleMask(std::vector<std::size_t> kept);

  /// Keeps every (total / kept)-th view; kept must divide total.
  static SampleMask uniform_stride(std::size_t total, std::size_t kept);
  static SampleMask identity(std::size_t total);
};

Image resample_bilinear(const Image& img, std::size_t newWidth, std::size_t newHeight);

/// values + sigma * z with z drawn from the counter-based generator keyed by `seed`.
Sinogram add_gaussian_noise(const Sinogram& sino, double sigma, std::uint64_t seed);

Sinogram apply_mask(const Sinogram& full, const SampleMask& mask);

}  // namespace ctorecon

#pragma once

#include <span>

#include "ctorecon/core.hpp"

namespace ctorecon {

/// Parallel-beam ray-driven (Joseph-style) projector geometry.
///
/// The ray for (theta, r) is {r n + t e : t in R} with n = (cos theta, sin theta)
/// and e = (-sin theta, cos theta). Samples are taken at t = k * step for a
/// lattice symmetric about t = 0 that spans the whole image diagonal, with
/// step = stepFraction * spacing. Each sample contributes
/// step * bilinear(image, point).
struct ProjectorConfig {
  std::size_t width = 256;
  std::size_t height = 256;
  double spacing = 1.0;
  std::size_t detCount = 300;
  double detSpacing = 1.0;
  AngleSet angles;
  double stepFraction = 0.5;

  /// Geometry matching `img` with the given views and detector layout.
  static ProjectorConfig for_image(const Image& img, AngleSet angles, std::size_t detCount, double detSpacing,
                                   double stepFraction = 0.5);

  void validate() const;
  std::size_t image_size() const { return width * height; }
  std::size_t sinogram_size() const { return angles.size() * detCount; }
  /// Detector count whose span covers the image diagonal at the given pitch.
  static std::size_t covering_detector_count(std::size_t width, std::size_t height, double spacing, double detSpacing);
};

Sinogram forward(const ProjectorConfig& cfg, const Image& img);

/// Exact transpose of `forward`: same weights, scattered instead of gathered.
Image adjoint(const ProjectorConfig& cfg, const Sinogram& sino);

/// Flat-array variants used by the differentiable pipeline.
void forward_values(const ProjectorConfig& cfg, std::span<const double> image, std::span<double> sino);
void adjoint_values(const ProjectorConfig& cfg, std::span<const double> sino, std::span<double> image);

/// Single-view gather/scatter (used by SART). `adjoint_view` accumulates.
void forward_view(const ProjectorConfig& cfg, std::size_t view, std::span<const double> image, std::span<double> row);
void adjoint_view(const ProjectorConfig& cfg, std::size_t view, std::span<const double> row, std::span<double> image);

/// Compares 1D spectra of the projections with polar slices of the 2D image
/// spectrum over |omega| <= band * Nyquist (band given as a fraction).
struct FourierSliceReport {
  /// max |P_theta(w) - F(w cos, w sin)| relative to the largest |F| compared.
  double maxRelError = 0.0;
  /// max over frequency bins of (max_theta |P| - min_theta |P|) / max_theta |P|.
  double maxMagnitudeSpread = 0.0;
  std::size_t comparedPoints = 0;
};

FourierSliceReport fourier_slice_check(const ProjectorConfig& cfg, const Image& img, double band = 0.25);

}  // namespace ctorecon

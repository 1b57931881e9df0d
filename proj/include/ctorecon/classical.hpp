#pragma once

#include <optional>

#include "ctorecon/core.hpp"
#include "ctorecon/projector.hpp"

namespace ctorecon {

enum class FbpFilter { Ramp, None };

struct FbpConfig {
  FbpFilter filter = FbpFilter::Ramp;
  std::size_t padFactor = 2;
};

struct SartConfig {
  std::size_t iterations = 5;
  double relaxation = 0.15;
  double clipMin = 0.0;
  double clipMax = 0.549;

  void validate() const;
};

/// Backprojection normalisation that turns A^T of ramp-filtered rows into an
/// attenuation estimate: pi * detSpacing / (views * spacing^2).
double fbp_scale(const ProjectorConfig& proj);

Image fbp(const FbpConfig& cfg, const ProjectorConfig& proj, const Sinogram& sino);

/// Per-view SART with row-sum normalisation and clipping after each sweep.
/// `residualHistory`, when given, receives ||A x - p|| after every sweep.
Image sart(const SartConfig& cfg, const ProjectorConfig& proj, const Sinogram& sino,
           const std::optional<Image>& init = std::nullopt, std::vector<double>* residualHistory = nullptr);

}  // namespace ctorecon

#include "ctorecon/classical.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "ctorecon/spectral.hpp"

namespace ctorecon {

namespace {

void check_grid(const ProjectorConfig& proj, const Sinogram& sino) {
  proj.validate();
  if (sino.views() != proj.angles.size() || sino.detCount != proj.detCount)
    throw std::invalid_argument("sinogram grid does not match projector config");
}

double l2(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

void SartConfig::validate() const {
  if (iterations < 1) throw std::invalid_argument("SART: iterations must be >= 1");
  if (!(relaxation >= 0.0 && relaxation < 2.0)) throw std::invalid_argument("SART: relaxation must be in [0, 2)");
  if (!(clipMin < clipMax)) throw std::invalid_argument("SART: clipMin must be < clipMax");
}

double fbp_scale(const ProjectorConfig& proj) {
  return std::numbers::pi * proj.detSpacing /
         (static_cast<double>(proj.angles.size()) * proj.spacing * proj.spacing);
}

Image fbp(const FbpConfig& cfg, const ProjectorConfig& proj, const Sinogram& sino) {
  check_grid(proj, sino);
  if (cfg.padFactor < 2) throw std::invalid_argument("fbp: padFactor must be >= 2");
  Sinogram filtered = sino;
  if (cfg.filter == FbpFilter::Ramp) {
    const spectral::RampFilter ramp(proj.detCount, proj.detSpacing, cfg.padFactor);
    ramp.apply(sino.values, sino.views(), filtered.values);
  }
  Image img = adjoint(proj, filtered);
  const double scale = fbp_scale(proj);
  for (double& v : img.values) v *= scale;
  return img;
}

Image sart(const SartConfig& cfg, const ProjectorConfig& proj, const Sinogram& sino, const std::optional<Image>& init,
           std::vector<double>* residualHistory) {
  cfg.validate();
  check_grid(proj, sino);
  Image x = init ? *init : Image(proj.width, proj.height, proj.spacing);
  if (x.width != proj.width || x.height != proj.height) throw std::invalid_argument("sart: init dims do not match config");

  const std::size_t det = proj.detCount;
  const std::size_t views = proj.angles.size();
  // Row sums of A: the projection of an all-ones image.
  const std::vector<double> ones(proj.image_size(), 1.0);
  std::vector<double> rowWeights(views * det);
  forward_values(proj, ones, rowWeights);

  std::vector<double> row(det);
  for (std::size_t sweep = 0; sweep < cfg.iterations; ++sweep) {
    for (std::size_t v = 0; v < views; ++v) {
      forward_view(proj, v, x.values, row);
      for (std::size_t d = 0; d < det; ++d) {
        const double w = rowWeights[v * det + d];
        row[d] = w > 0.0 ? cfg.relaxation * (sino.at(v, d) - row[d]) / w : 0.0;
      }
      adjoint_view(proj, v, row, x.values);
    }
    for (double& val : x.values) val = std::clamp(val, cfg.clipMin, cfg.clipMax);
    if (residualHistory) {
      std::vector<double> r(proj.sinogram_size());
      forward_values(proj, x.values, r);
      for (std::size_t i = 0; i < r.size(); ++i) r[i] -= sino.values[i];
      residualHistory->push_back(l2(r));
    }
  }
  return x;
}

}  // namespace ctorecon

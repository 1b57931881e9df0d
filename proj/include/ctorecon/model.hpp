#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "ctorecon/autodiff.hpp"
#include "ctorecon/core.hpp"
#include "ctorecon/disco.hpp"
#include "ctorecon/projector.hpp"
#include "ctorecon/random.hpp"

namespace ctorecon {

/// U-shaped DISCO network.
///
/// Per encoder level: two blocks (DISCO -> channel mix with bias -> relu),
/// a skip tap, then 2x average pooling along the pooled axes. The bottleneck
/// has two blocks; each decoder level upsamples (nearest), adds the skip and
/// runs two blocks. A final pointwise channel mix maps to outChannels. When
/// both axes are pooled the kernel cutoff doubles at every level, so the
/// support in samples stays fixed.
struct UdnoConfig {
  std::size_t levels = 2;
  std::size_t hidden = 8;
  std::size_t inChannels = 1;
  std::size_t outChannels = 1;
  KernelBasisConfig basis{0.05, 5, 7};
  PaddingMode pad0 = PaddingMode::Zero;
  PaddingMode pad1 = PaddingMode::Zero;
  bool pool0 = true;
  bool pool1 = true;

  void validate() const;
  KernelBasisConfig basis_at(std::size_t level) const;
  /// Fixed scale on the raw DISCO coefficients: totalBasis / (pi cutoff^2).
  /// Makes a unit coefficient respond like a unit-integral kernel.
  double gain_at(std::size_t level) const;
  void check_input(std::size_t rows, std::size_t cols) const;
};

enum class ThetaPadding { Flipped, Zero };

struct CtoConfig {
  std::size_t cascades = 3;
  std::size_t imageSize = 64;
  double spacing = 2.0 / 64.0;
  std::size_t detCount = 96;
  double detSpacing = 2.0 / 64.0;
  double stepFraction = 0.5;
  double period = 3.14159265358979323846;
  std::vector<std::size_t> viewLadder{15, 30, 60};
  std::size_t sinoLevels = 2;
  std::size_t imageLevels = 2;
  std::size_t hidden = 8;
  KernelBasisConfig basis{0.05, 5, 7};
  ThetaPadding thetaPadding = ThetaPadding::Flipped;
  /// When set, NO_s returns p + (spatial + freq) / 2, so the branches learn a
  /// correction to the measured sinogram instead of reproducing it.
  bool nosResidual = true;
  /// eta is measured in units of 1 / ||s A^T A||, so 0.5 is half the
  /// largest stable Landweber step at the densest ladder view count.
  double etaInit = 0.5;
  double lambdaInit = 1.0;
  /// ||s A^T A|| at the densest view count; 0 until init_model fills it in.
  double dcNorm = 0.0;

  static CtoConfig mini();
  /// 256^2, 300 detectors, ladder {9, 18, 36, 72}, 32 channels, 4 image levels.
  static CtoConfig full();

  void validate() const;
  UdnoConfig nos_spatial() const;
  UdnoConfig nos_freq() const;
  UdnoConfig noi() const;
  std::size_t max_views() const;
  /// Projector for the base image grid and a uniform view set.
  ProjectorConfig projector(std::size_t views) const;
  /// Same detector layout, image grid scaled by `scale` (finer pitch).
  ProjectorConfig projector(std::size_t views, std::size_t scale) const;

  /// Canonical "key=value" lines in a fixed order.
  std::string to_text() const;
  /// Parses the text form; unknown keys and bad values throw invalid_argument.
  /// Keys absent from the text keep the defaults of `base`.
  static CtoConfig from_text(const std::string& text, const CtoConfig& base = CtoConfig::mini());
};

struct CtoModel {
  CtoConfig config;
  ParamTree params;
};

/// Shared, cached quadrature tables (keyed by basis and grids).
std::shared_ptr<const BasisOperator> cached_basis_operator(const KernelBasisConfig& basis, const DiscoGrid& in,
                                                           std::size_t outRows, std::size_t outCols, double outPitch0,
                                                           double outPitch1);
void clear_basis_cache();

/// Adds the UDNO leaves under `prefix/` with the documented uniform init.
void init_udno_params(const UdnoConfig& cfg, const std::string& prefix, Philox& rng, ParamTree& params);
/// Leaf names and sizes for a UDNO, zero-filled.
void zero_udno_params(const UdnoConfig& cfg, const std::string& prefix, ParamTree& params);

/// Options for evaluating a UDNO on a grid. `kernelPitchScale` > 1 keeps the
/// kernels at the pixel support of a grid that much coarser (ablation).
struct UdnoRun {
  double kernelPitchScale = 1.0;
};

/// Records a UDNO forward pass on the tape. The tensor's rows/cols are the grid
/// axes; the grid is the unit square at that resolution.
Var udno_forward(Tape& tape, const UdnoConfig& cfg, const std::string& prefix, const ParamTree& params, Var input,
                 const UdnoRun& run = {});
Tensor udno_forward(const UdnoConfig& cfg, const std::string& prefix, const ParamTree& params, const Tensor& input);

/// Sinogram operator: mean of the spatial branch and the DFT_r branch.
Var nos_forward(Tape& tape, const CtoConfig& cfg, const ParamTree& params, Var sino);
Sinogram nos_forward(const CtoModel& model, const Sinogram& sino);

/// Data-consistency scale 1 / spacing^2 applied to A^T so the step acts on the
/// function rather than on pixel sums.
double dc_scale(const ProjectorConfig& proj);

/// x - (eta / dcNorm) s A^T (A x - p) + lambda NO_i(x) for cascade t.
Var cascade_step(Tape& tape, const CtoConfig& cfg, const ParamTree& params, std::size_t t, Var x, Var sinoSub,
                 const std::shared_ptr<const ProjectorConfig>& proj, const UdnoRun& run = {});
Image cascade_step(const CtoModel& model, std::size_t t, const Image& x, const Sinogram& sinoSub);

/// FBP of the NO_s output followed by the cascades.
Var cto_forward(Tape& tape, const CtoConfig& cfg, const ParamTree& params, Var sinoSub,
                const std::shared_ptr<const ProjectorConfig>& proj);
Image cto_forward(const CtoModel& model, const Sinogram& sinoSub);

/// Runs NO_s and the FBP initialisation at base resolution, upsamples by
/// `scale`, then the cascades on the finer grid. With fixedPixelSupport the
/// image kernels keep their base-grid pixel footprint instead of being
/// re-discretised at the same normalised cutoff.
Image infer_superres(const CtoModel& model, const Sinogram& sinoSub, std::size_t scale, bool fixedPixelSupport = false);

/// Largest eigenvalue of s A^T A by power iteration (fixed seed).
double dc_operator_norm(const ProjectorConfig& proj, std::size_t iterations = 20);

CtoModel init_model(const CtoConfig& cfg, std::uint64_t seed);

struct TrainConfig {
  std::size_t epochs = 20;
  std::size_t stepsPerEpoch = 50;
  std::uint64_t seed = 0;
  double lr = 1e-3;
  double noiseSigma = 0.0;
  std::size_t valCount = 4;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double trainLoss = 0.0;
  double valPsnr = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::vector<double> stepLoss;
};

/// Random-phantom dataset (rasterised on the config's image grid).
std::vector<Image> make_phantom_set(const CtoConfig& cfg, std::size_t count, std::uint64_t seed, std::size_t scale = 1);
/// Uniform sub-sampling of the max-ladder sinogram of `img`.
Sinogram simulate_sinogram(const CtoConfig& cfg, const Image& img, std::size_t views);

using TrainCallback = std::function<void(const EpochRecord&)>;

/// Adam on the MSE between cto_forward and the phantom. Each step draws one
/// phantom and one ladder view count. validation: mean PSNR at the sparsest
/// view count.
TrainHistory train(CtoModel& model, const std::vector<Image>& trainSet, const std::vector<Image>& valSet,
                   const TrainConfig& cfg, const TrainCallback& onEpoch = {});

void save_model(const std::filesystem::path& path, const CtoModel& model);
CtoModel load_model(const std::filesystem::path& path);

}  // namespace ctorecon

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "ctorecon/classical.hpp"
#include "ctorecon/model.hpp"
#include "ctorecon/phantom.hpp"
#include "ctorecon/verify.hpp"

using namespace ctorecon;

namespace {

Tensor random_tensor(std::size_t c, std::size_t r, std::size_t k, std::uint64_t seed) {
  Philox rng(seed);
  Tensor t(c, r, k);
  for (auto& v : t.data) v = rng.normal();
  return t;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) m = std::max(m, std::abs(a[k] - b[k]));
  return m;
}

double max_abs(const std::vector<double>& a) {
  double m = 0.0;
  for (double v : a) m = std::max(m, std::abs(v));
  return m;
}

/// Weight of the self point in the level-0 quadrature table of `cfg` on a
/// rows x cols grid; the iso hat must cover nothing else.
double self_weight(const UdnoConfig& cfg, std::size_t rows, std::size_t cols) {
  const DiscoGrid grid{rows, cols, 1.0 / static_cast<double>(rows), 1.0 / static_cast<double>(cols), cfg.pad0, cfg.pad1};
  auto table = cached_basis_operator(cfg.basis_at(0), grid, rows, cols, grid.pitch0, grid.pitch1);
  const std::size_t centre = (rows / 2) * cols + cols / 2;
  double w = 0.0;
  std::size_t isoEntries = 0;
  for (const auto& e : table->row(centre))
    if (e.basis == 0) {
      ++isoEntries;
      w = e.weight;
      EXPECT_EQ(e.index, centre);
    }
  EXPECT_EQ(isoEntries, 1u);
  return w;
}

/// Parameters that make the UDNO the identity on a rows x cols grid. Input
/// channel k is split into relu(x) and relu(-x) on hidden channels 2k and 2k+1,
/// carried through the level-0 blocks and recombined by the output mix; every
/// deeper layer is zero.
void identity_udno(const UdnoConfig& cfg, const std::string& prefix, std::size_t rows, std::size_t cols,
                   ParamTree& params) {
  zero_udno_params(cfg, prefix, params);
  const std::size_t H = cfg.hidden, L = 1 + cfg.basis.rings * cfg.basis.perRing, K = cfg.inChannels;
  ASSERT_GE(H, 2 * K);
  const double c = 1.0 / (cfg.gain_at(0) * self_weight(cfg, rows, cols));
  auto identity_mix = [&](const std::string& base) {
    auto& w = params.at(base + "/mix_w");
    for (std::size_t j = 0; j < 2 * K; ++j) w[j * H + j] = 1.0;
  };
  {
    auto& d = params.at(prefix + "/enc0.0/disco");
    for (std::size_t k = 0; k < K; ++k) {
      d[((2 * k) * K + k) * L] = c;
      d[((2 * k + 1) * K + k) * L] = -c;
    }
    identity_mix(prefix + "/enc0.0");
  }
  for (const std::string layer : {"enc0.1", "dec0.0", "dec0.1"}) {
    auto& d = params.at(prefix + "/" + layer + "/disco");
    for (std::size_t j = 0; j < 2 * K; ++j) d[(j * H + j) * L] = c;
    identity_mix(prefix + "/" + layer);
  }
  auto& out = params.at(prefix + "/out/w");
  for (std::size_t k = 0; k < cfg.outChannels; ++k) {
    out[k * H + 2 * k] = 1.0;
    out[k * H + 2 * k + 1] = -1.0;
  }
}

CtoModel zero_model(CtoConfig cfg) {
  CtoModel m = init_model(cfg, 1);
  for (auto& [name, v] : m.params) std::fill(v.begin(), v.end(), 0.0);
  return m;
}

Image rot90(const Image& img) {
  Image out(img.height, img.width, img.spacing);
  for (std::size_t j = 0; j < img.height; ++j)
    for (std::size_t i = 0; i < img.width; ++i) out.at(img.height - 1 - j, i) = img.at(i, j);
  return out;
}

std::vector<Image> tiny_set(std::size_t count, std::uint64_t seed) {
  return make_phantom_set(CtoConfig::mini(), count, seed);
}

}  // namespace

TEST(Udno, ZeroParametersGiveZeroOutput) {
  const UdnoConfig cfg = CtoConfig::mini().noi();
  ParamTree params;
  zero_udno_params(cfg, "u", params);
  const Tensor out = udno_forward(cfg, "u", params, random_tensor(1, 64, 64, 1));
  for (double v : out.data) EXPECT_EQ(v, 0.0);
}

TEST(Udno, OutputShapeMatchesInput) {
  UdnoConfig cfg = CtoConfig::mini().noi();
  cfg.outChannels = 3;
  ParamTree params;
  Philox rng(2);
  init_udno_params(cfg, "u", rng, params);
  const Tensor out = udno_forward(cfg, "u", params, random_tensor(1, 64, 64, 3));
  EXPECT_EQ(out.channels, 3u);
  EXPECT_EQ(out.rows, 64u);
  EXPECT_EQ(out.cols, 64u);
}

TEST(Udno, IndivisibleInputThrows) {
  const UdnoConfig cfg = CtoConfig::mini().noi();
  ParamTree params;
  zero_udno_params(cfg, "u", params);
  EXPECT_THROW(udno_forward(cfg, "u", params, Tensor(1, 62, 64)), std::invalid_argument);
}

TEST(Udno, IdentityConstruction) {
  const UdnoConfig cfg = CtoConfig::mini().nos_freq();
  ParamTree params;
  identity_udno(cfg, "u", 60, 96, params);
  const Tensor x = random_tensor(2, 60, 96, 4);
  EXPECT_LT(max_abs_diff(udno_forward(cfg, "u", params, x).data, x.data), 1e-12);
}

TEST(NoS, ComposedThetaShiftEquivariance) {
  const verify::Check c = verify::nos_equivariance();
  EXPECT_LT(c.value, 1e-10) << c.detail;
}

TEST(NoS, IdentityBranchesReturnInput) {
  CtoConfig cfg = CtoConfig::mini();
  cfg.nosResidual = false;
  CtoModel m = zero_model(cfg);
  identity_udno(cfg.nos_spatial(), "nos_spatial", 60, 96, m.params);
  identity_udno(cfg.nos_freq(), "nos_freq", 60, 96, m.params);
  const Sinogram s = simulate_sinogram(cfg, rasterize(random_phantom(3), 64, 64, cfg.spacing), 60);
  EXPECT_LT(max_abs_diff(nos_forward(m, s).values, s.values), 1e-12 * max_abs(s.values));
}

TEST(NoS, ZeroParameters) {
  CtoConfig cfg = CtoConfig::mini();
  const Sinogram s = simulate_sinogram(cfg, rasterize(random_phantom(4), 64, 64, cfg.spacing), 30);
  cfg.nosResidual = false;
  for (double v : nos_forward(zero_model(cfg), s).values) EXPECT_EQ(v, 0.0);
  cfg.nosResidual = true;
  EXPECT_EQ(nos_forward(zero_model(cfg), s).values, s.values);
}

TEST(NoS, BranchAverage) {
  CtoConfig cfg = CtoConfig::mini();
  cfg.nosResidual = false;
  CtoModel m = zero_model(cfg);
  identity_udno(cfg.nos_freq(), "nos_freq", 60, 96, m.params);
  const Sinogram s = simulate_sinogram(cfg, rasterize(random_phantom(5), 64, 64, cfg.spacing), 60);
  const Sinogram out = nos_forward(m, s);
  for (std::size_t k = 0; k < s.values.size(); ++k) EXPECT_NEAR(out.values[k], 0.5 * s.values[k], 1e-12);
}

TEST(NoS, ShapeMismatchThrows) {
  const CtoModel m = init_model(CtoConfig::mini(), 1);
  EXPECT_THROW(nos_forward(m, Sinogram(AngleSet::make_uniform(15, std::numbers::pi), 90, 2.0 / 64)),
               std::invalid_argument);
}

TEST(Cascade, ConsistentDataLeavesOnlyLearnedTerm) {
  const CtoModel m = init_model(CtoConfig::mini(), 7);
  const Image x = rasterize(random_phantom(6), 64, 64, m.config.spacing);
  const ProjectorConfig proj = m.config.projector(30);
  const Sinogram p = forward(proj, x);
  const Image out = cascade_step(m, 1, x, p);
  const Tensor learned = udno_forward(m.config.noi(), "noi1", m.params, Tensor(1, 64, 64, x.values));
  const double lambda = m.params.at("cascade1/lambda")[0];
  for (std::size_t k = 0; k < x.size(); ++k) EXPECT_NEAR(out.values[k], x.values[k] + lambda * learned.data[k], 1e-12);
}

TEST(Cascade, ZeroStepsLeaveImageUnchanged) {
  CtoModel m = init_model(CtoConfig::mini(), 8);
  m.params.at("cascade0/eta")[0] = 0.0;
  m.params.at("cascade0/lambda")[0] = 0.0;
  const Image x = rasterize(random_phantom(7), 64, 64, m.config.spacing);
  const Sinogram p = simulate_sinogram(m.config, rasterize(random_phantom(8), 64, 64, m.config.spacing), 15);
  EXPECT_EQ(cascade_step(m, 0, x, p).values, x.values);
}

TEST(Cascade, SmallDataStepDescends) {
  CtoModel m = init_model(CtoConfig::mini(), 9);
  for (std::uint64_t trial = 0; trial < 4; ++trial) {
    m.params.at("cascade0/lambda")[0] = 0.0;
    m.params.at("cascade0/eta")[0] = 0.1;
    Image x(64, 64, m.config.spacing);
    Philox rng(100 + trial);
    for (auto& v : x.values) v = rng.uniform();
    const std::size_t views = m.config.viewLadder[trial % 3];
    const Sinogram p = simulate_sinogram(m.config, rasterize(random_phantom(trial), 64, 64, m.config.spacing), views);
    const ProjectorConfig proj = m.config.projector(views);
    auto residual = [&](const Image& img) {
      const Sinogram ax = forward(proj, img);
      double s = 0.0;
      for (std::size_t k = 0; k < ax.values.size(); ++k) s += (ax.values[k] - p.values[k]) * (ax.values[k] - p.values[k]);
      return std::sqrt(s);
    };
    EXPECT_LE(residual(cascade_step(m, 0, x, p)), residual(x));
  }
}

TEST(Cto, ZeroSinogramZeroParametersGiveZeroImage) {
  CtoConfig cfg = CtoConfig::mini();
  cfg.nosResidual = false;
  const CtoModel m = zero_model(cfg);
  const Image out = cto_forward(m, Sinogram(AngleSet::make_uniform(15, std::numbers::pi), 96, cfg.detSpacing));
  for (double v : out.values) EXPECT_EQ(v, 0.0);
}

TEST(Cto, OutputShapeIndependentOfViewCount) {
  const CtoModel m = init_model(CtoConfig::mini(), 10);
  const Image img = rasterize(random_phantom(9), 64, 64, m.config.spacing);
  for (std::size_t views : {15, 30, 60}) {
    const Image out = cto_forward(m, simulate_sinogram(m.config, img, views));
    EXPECT_EQ(out.width, 64u);
    EXPECT_EQ(out.height, 64u);
  }
}

TEST(Cto, QuarterTurnEquivariance) {
  // r-symmetric sinogram kernels and isotropic image kernels make the whole
  // pipeline commute with a 90 degree rotation (30 rows at 60 views over pi).
  CtoModel m = init_model(CtoConfig::mini(), 12);
  const KernelBasisConfig b = m.config.basis;
  const std::size_t L = 1 + b.rings * b.perRing;
  for (auto& [name, v] : m.params) {
    if (name.size() < 6 || name.substr(name.size() - 6) != "/disco") continue;
    const bool image = name.rfind("noi", 0) == 0;
    for (std::size_t base = 0; base < v.size(); base += L)
      for (std::size_t k = 1; k <= b.rings; ++k) {
        const std::size_t ring = base + 1 + (k - 1) * b.perRing;
        if (image) {
          double mean = 0.0;
          for (std::size_t s = 0; s < b.perRing; ++s) mean += v[ring + s] / static_cast<double>(b.perRing);
          for (std::size_t s = 0; s < b.perRing; ++s) v[ring + s] = mean;
        } else {
          for (std::size_t s = 1; s < b.perRing; ++s) {
            const std::size_t t = b.perRing - s;
            if (t < s) break;
            const double mean = 0.5 * (v[ring + s] + v[ring + t]);
            v[ring + s] = v[ring + t] = mean;
          }
        }
      }
  }
  const Image img = rasterize(random_phantom(21), 64, 64, m.config.spacing);
  const Image a = cto_forward(m, simulate_sinogram(m.config, rot90(img), 60));
  const Image b2 = rot90(cto_forward(m, simulate_sinogram(m.config, img, 60)));
  EXPECT_LT(max_abs_diff(a.values, b2.values), 1e-6);
}

TEST(Train, ZeroLearningRateKeepsParameters) {
  CtoModel m = init_model(CtoConfig::mini(), 13);
  const ParamTree before = m.params;
  TrainConfig tc;
  tc.epochs = 1;
  tc.stepsPerEpoch = 3;
  tc.lr = 0.0;
  train(m, tiny_set(4, 1), tiny_set(2, 2), tc);
  EXPECT_EQ(m.params, before);
}

TEST(Train, BitDeterministic) {
  auto run = [] {
    CtoModel m = init_model(CtoConfig::mini(), 14);
    TrainConfig tc;
    tc.epochs = 2;
    tc.stepsPerEpoch = 3;
    tc.seed = 5;
    const TrainHistory h = train(m, tiny_set(4, 3), tiny_set(2, 4), tc);
    return std::make_pair(m.params, h.stepLoss);
  };
  const auto a = run(), b = run();
  EXPECT_EQ(a.first, b.first);
  EXPECT_EQ(a.second, b.second);
}

TEST(Train, LossDecreasesOver200Steps) {
  CtoModel m = init_model(CtoConfig::mini(), 15);
  TrainConfig tc;
  tc.epochs = 4;
  tc.stepsPerEpoch = 50;
  tc.seed = 6;
  const TrainHistory h = train(m, tiny_set(20, 5), tiny_set(2, 6), tc);
  ASSERT_EQ(h.stepLoss.size(), 200u);
  // Single steps see different phantoms and view counts, so compare windows.
  double first = 0.0, last = 0.0;
  for (std::size_t k = 0; k < 20; ++k) {
    first += h.stepLoss[k];
    last += h.stepLoss[180 + k];
  }
  EXPECT_LT(last, first);
  EXPECT_LT(h.epochs.back().trainLoss, h.epochs.front().trainLoss);
}

TEST(ModelFile, RoundTripIsBitIdentical) {
  const auto path = std::filesystem::temp_directory_path() / "ctorecon_model_roundtrip.ctom";
  const CtoModel m = init_model(CtoConfig::mini(), 16);
  save_model(path, m);
  const CtoModel back = load_model(path);
  EXPECT_EQ(back.params, m.params);
  EXPECT_EQ(back.config.to_text(), m.config.to_text());
  const Sinogram s = simulate_sinogram(m.config, rasterize(random_phantom(10), 64, 64, m.config.spacing), 15);
  EXPECT_EQ(cto_forward(back, s).values, cto_forward(m, s).values);
}

TEST(ModelFile, WrongMagicIsFormatError) {
  const auto path = std::filesystem::temp_directory_path() / "ctorecon_model_bad.ctom";
  std::ofstream(path, std::ios::binary) << "CTOGxxxxxxxxxxxxxxxxxxxxxxx";
  EXPECT_THROW(load_model(path), FormatError);
}

TEST(ModelFile, TruncatedIsFormatError) {
  const auto path = std::filesystem::temp_directory_path() / "ctorecon_model_trunc.ctom";
  save_model(path, init_model(CtoConfig::mini(), 17));
  std::filesystem::resize_file(path, std::filesystem::file_size(path) - 5);
  EXPECT_THROW(load_model(path), FormatError);
}

TEST(Config, TextRoundTrip) {
  CtoConfig cfg = CtoConfig::full();
  cfg.thetaPadding = ThetaPadding::Zero;
  cfg.nosResidual = false;
  EXPECT_EQ(CtoConfig::from_text(cfg.to_text()).to_text(), cfg.to_text());
  EXPECT_THROW(CtoConfig::from_text("bogus_key=1\n"), std::invalid_argument);
  EXPECT_THROW(CtoConfig::from_text("hidden=abc\n"), std::invalid_argument);
}

TEST(SuperRes, ZeroWeightsGiveBilinearUpsampleOfInit) {
  CtoConfig cfg = CtoConfig::mini();
  CtoModel m = zero_model(cfg);
  m.config.dcNorm = init_model(cfg, 1).config.dcNorm;
  const Sinogram s = simulate_sinogram(cfg, rasterize(random_phantom(11), 64, 64, cfg.spacing), 30);
  // Residual NO_s with zero branches passes the sinogram through, so the
  // initialisation is the plain FBP.
  const ProjectorConfig proj = cfg.projector(30);
  const Image expect = resample_bilinear(fbp(FbpConfig{}, proj, s), 128, 128);
  const Image out = infer_superres(m, s, 2);
  ASSERT_EQ(out.width, 128u);
  EXPECT_LT(max_abs_diff(out.values, expect.values), 1e-12 * max_abs(expect.values));
}

TEST(SuperRes, KernelSupportInPixelsDoubles) {
  const UdnoConfig cfg = CtoConfig::mini().noi();
  auto count = [&](std::size_t n) {
    const DiscoGrid g = DiscoGrid::unit(n, n, PaddingMode::Zero, PaddingMode::Zero);
    auto table = cached_basis_operator(cfg.basis_at(0), g, n, n, g.pitch0, g.pitch1);
    std::size_t reach = 0;
    const std::size_t centre = (n / 2) * n + n / 2;
    for (const auto& e : table->row(centre)) {
      const std::size_t di = e.index / n > n / 2 ? e.index / n - n / 2 : n / 2 - e.index / n;
      reach = std::max(reach, di);
    }
    return reach;
  };
  const std::size_t r64 = count(64), r128 = count(128);
  EXPECT_GE(r64, 1u);
  EXPECT_NEAR(static_cast<double>(r128), 2.0 * static_cast<double>(r64), 1.0);
}

TEST(SuperRes, FixedPixelSupportDiffers) {
  const CtoModel m = init_model(CtoConfig::mini(), 18);
  const Sinogram s = simulate_sinogram(m.config, rasterize(random_phantom(12), 64, 64, m.config.spacing), 15);
  const Image a = infer_superres(m, s, 2, false);
  const Image b = infer_superres(m, s, 2, true);
  EXPECT_GT(max_abs_diff(a.values, b.values), 0.0);
}

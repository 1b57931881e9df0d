#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "ctorecon/classical.hpp"
#include "ctorecon/metrics.hpp"
#include "ctorecon/phantom.hpp"
#include "ctorecon/random.hpp"
#include "ctorecon/spectral.hpp"

using namespace ctorecon;

namespace {

// Reference run: Shepp-Logan 256x256, 720 views over pi, 300 detectors at the
// pixel pitch, ramp filter with 2x padding.
constexpr double kGoldenFbp720Db = 28.3937;

ProjectorConfig geometry(const Image& img, std::size_t views, std::size_t dets) {
  return ProjectorConfig::for_image(img, AngleSet::make_uniform(views, std::numbers::pi), dets, img.spacing);
}

double fbp_psnr(const Image& phantom, std::size_t views, std::size_t dets) {
  const ProjectorConfig cfg = geometry(phantom, views, dets);
  return psnr(fbp(FbpConfig{}, cfg, forward(cfg, phantom)), phantom).db;
}

}  // namespace

TEST(RampFilter, RemovesDc) {
  const spectral::RampFilter filter(64, 0.1, 2);
  EXPECT_EQ(filter.response(0), 0.0);
  EXPECT_GT(filter.response(1), 0.0);
}

TEST(Fbp, GoldenSheppLogan720Views) {
  const Image phantom = rasterize(shepp_logan(), 256, 256, 2.0 / 256);
  EXPECT_NEAR(fbp_psnr(phantom, 720, 300), kGoldenFbp720Db, 0.05);
}

TEST(Fbp, PsnrIncreasesWithViews) {
  const Image phantom = rasterize(shepp_logan(), 128, 128, 2.0 / 128);
  const double p18 = fbp_psnr(phantom, 18, 192);
  const double p72 = fbp_psnr(phantom, 72, 192);
  const double p720 = fbp_psnr(phantom, 720, 192);
  EXPECT_LT(p18, p72);
  EXPECT_LT(p72, p720);
}

TEST(Fbp, DiskLadderStrictlyIncreasing) {
  const Image phantom = rasterize(disk(0.8, 1.0), 128, 128, 2.0 / 128);
  double previous = -1e9;
  for (std::size_t views : {9, 18, 36, 72, 720}) {
    const double p = fbp_psnr(phantom, views, 192);
    EXPECT_GT(p, previous) << views << " views";
    previous = p;
  }
}

TEST(Fbp, LinearInSinogram) {
  Philox rng(17);
  const Image proto(32, 32, 1.0 / 16);
  const ProjectorConfig cfg = geometry(proto, 20, 48);
  Sinogram a(cfg.angles, 48, cfg.detSpacing), b = a, c = a;
  for (auto& v : a.values) v = rng.normal();
  for (auto& v : b.values) v = rng.normal();
  for (std::size_t k = 0; k < c.values.size(); ++k) c.values[k] = 1.5 * a.values[k] - 2.0 * b.values[k];
  const Image fa = fbp(FbpConfig{}, cfg, a), fb = fbp(FbpConfig{}, cfg, b), fc = fbp(FbpConfig{}, cfg, c);
  double num = 0.0, den = 0.0;
  for (std::size_t k = 0; k < fc.size(); ++k) {
    const double e = 1.5 * fa.values[k] - 2.0 * fb.values[k];
    num += (fc.values[k] - e) * (fc.values[k] - e);
    den += e * e;
  }
  EXPECT_LT(std::sqrt(num / den), 1e-10);
}

TEST(Fbp, GridMismatchThrows) {
  const Image proto(32, 32, 1.0 / 16);
  const ProjectorConfig cfg = geometry(proto, 20, 48);
  EXPECT_THROW(fbp(FbpConfig{}, cfg, Sinogram(cfg.angles, 40, cfg.detSpacing)), std::invalid_argument);
}

TEST(Sart, DefaultsMatchBaselineSetup) {
  const SartConfig cfg;
  EXPECT_EQ(cfg.iterations, 5u);
  EXPECT_DOUBLE_EQ(cfg.relaxation, 0.15);
  EXPECT_DOUBLE_EQ(cfg.clipMin, 0.0);
  EXPECT_DOUBLE_EQ(cfg.clipMax, 0.549);
}

TEST(Sart, ExactDataIsAFixedPoint) {
  Image x0 = rasterize(random_phantom(4), 32, 32, 2.0 / 32);
  const ProjectorConfig cfg = geometry(x0, 24, 48);
  const Image out = sart(SartConfig{}, cfg, forward(cfg, x0), x0);
  for (std::size_t k = 0; k < out.size(); ++k) EXPECT_NEAR(out.values[k], x0.values[k], 1e-12);
}

TEST(Sart, ResidualNonIncreasingAndClipped) {
  const Image phantom = rasterize(disk(0.8, 0.3), 64, 64, 2.0 / 64);
  const ProjectorConfig cfg = geometry(phantom, 72, 96);
  std::vector<double> residuals;
  const Image out = sart(SartConfig{}, cfg, forward(cfg, phantom), std::nullopt, &residuals);
  ASSERT_EQ(residuals.size(), 5u);
  for (std::size_t k = 1; k < residuals.size(); ++k) EXPECT_LE(residuals[k], residuals[k - 1]);
  for (double v : out.values) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 0.549);
  }
}

TEST(Sart, ClipsHighContrastInput) {
  const Image phantom = rasterize(shepp_logan(), 64, 64, 2.0 / 64);
  const ProjectorConfig cfg = geometry(phantom, 36, 96);
  for (double v : sart(SartConfig{}, cfg, forward(cfg, phantom)).values) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 0.549);
  }
}

TEST(Sart, ZeroRelaxationReturnsInit) {
  Image init = rasterize(random_phantom(9), 32, 32, 2.0 / 32);
  const ProjectorConfig cfg = geometry(init, 12, 48);
  SartConfig sc;
  sc.relaxation = 0.0;
  EXPECT_EQ(sart(sc, cfg, forward(cfg, rasterize(disk(0.5, 0.2), 32, 32, 2.0 / 32)), init).values, init.values);
}

TEST(Sart, ValidatesConfig) {
  SartConfig sc;
  sc.clipMin = 1.0;
  sc.clipMax = 0.0;
  EXPECT_THROW(sc.validate(), std::invalid_argument);
}

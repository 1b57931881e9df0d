#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "ctorecon/classical.hpp"
#include "ctorecon/metrics.hpp"
#include "ctorecon/phantom.hpp"
#include "ctorecon/random.hpp"

using namespace ctorecon;

namespace {

Image constant(std::size_t n, double v) { return Image(n, n, 1.0, std::vector<double>(n * n, v)); }

Image random_image(std::size_t n, std::uint64_t seed) {
  Philox rng(seed);
  Image img(n, n, 1.0);
  for (auto& v : img.values) v = rng.uniform();
  return img;
}

}  // namespace

TEST(Psnr, IdenticalImagesAreCapped) {
  const Image a = random_image(16, 1);
  const PsnrResult r = psnr(a, a, 1.0);
  EXPECT_TRUE(r.exactMatch);
  EXPECT_EQ(r.db, 99.0);
}

TEST(Psnr, ClosedForm) {
  const PsnrResult r = psnr(constant(8, 0.1), constant(8, 0.0), 1.0);
  EXPECT_FALSE(r.exactMatch);
  EXPECT_NEAR(r.db, 20.0, 1e-12);
}

TEST(Psnr, MatchesIndependentComputationOnFbp) {
  const Image phantom = rasterize(disk(0.8, 1.0), 64, 64, 2.0 / 64);
  const ProjectorConfig cfg =
      ProjectorConfig::for_image(phantom, AngleSet::make_uniform(720, std::numbers::pi), 96, 2.0 / 64);
  const Image recon = fbp(FbpConfig{}, cfg, forward(cfg, phantom));
  long double mse = 0.0L;
  for (std::size_t k = 0; k < phantom.size(); ++k) {
    const long double d = static_cast<long double>(recon.values[k]) - phantom.values[k];
    mse += d * d;
  }
  mse /= static_cast<long double>(phantom.size());
  const double expect = static_cast<double>(10.0L * std::log10(1.0L / mse));
  EXPECT_NEAR(psnr(recon, phantom).db, expect, 1e-9);
}

TEST(Psnr, SymmetricAndChecksDims) {
  const Image a = random_image(12, 2), b = random_image(12, 3);
  EXPECT_DOUBLE_EQ(psnr(a, b, 1.0).db, psnr(b, a, 1.0).db);
  EXPECT_THROW(psnr(a, random_image(10, 4), 1.0), std::invalid_argument);
  EXPECT_THROW(psnr(a, b, 0.0), std::invalid_argument);
}

TEST(Ssim, SelfIsOne) {
  const Image a = random_image(32, 5);
  EXPECT_EQ(ssim(a, a, 1.0), 1.0);
}

TEST(Ssim, InvertedBinaryImageIsLow) {
  Image a(32, 32, 1.0);
  for (std::size_t j = 0; j < 32; ++j)
    for (std::size_t i = 0; i < 32; ++i) a.at(i, j) = ((i / 4 + j / 4) % 2) ? 1.0 : 0.0;
  Image inv = a;
  for (auto& v : inv.values) v = 1.0 - v;
  EXPECT_LT(ssim(a, inv, 1.0), 0.5);
}

TEST(Ssim, ConstantsFollowLuminanceTerm) {
  const double m1 = 0.4, m2 = 0.45;
  const double c1 = 0.01 * 0.01;
  const double expect = (2 * m1 * m2 + c1) / (m1 * m1 + m2 * m2 + c1);
  EXPECT_NEAR(ssim(constant(24, m1), constant(24, m2), 1.0), expect, 1e-12);
}

TEST(Ssim, DimensionMismatchThrows) {
  EXPECT_THROW(ssim(random_image(16, 1), random_image(15, 1), 1.0), std::invalid_argument);
}

TEST(RmseHu, Definitions) {
  const double mu = kMuWaterPerMm;
  const Image a = random_image(8, 6);
  EXPECT_EQ(rmse_hu(a, a, mu), 0.0);
  EXPECT_NEAR(rmse_hu(constant(8, mu), constant(8, 0.0), mu), 1000.0, 1e-9);
  Image shifted = a;
  for (auto& v : shifted.values) v += 0.1 * mu;
  EXPECT_NEAR(rmse_hu(shifted, a, mu), 100.0, 1e-9);
  EXPECT_THROW(rmse_hu(a, a, 0.0), std::invalid_argument);
}

TEST(RmseHu, SymmetricAndShiftInvariant) {
  const Image a = random_image(8, 7), b = random_image(8, 8);
  EXPECT_DOUBLE_EQ(rmse_hu(a, b, 0.192), rmse_hu(b, a, 0.192));
  Image a2 = a, b2 = b;
  for (auto& v : a2.values) v += 0.3;
  for (auto& v : b2.values) v += 0.3;
  EXPECT_NEAR(rmse_hu(a2, b2, 0.192), rmse_hu(a, b, 0.192), 1e-9);
}

TEST(Report, AggregateCountsAndLines) {
  std::vector<MetricSample> samples = {evaluate(random_image(16, 1), random_image(16, 2), 0.192, 1.0),
                                       evaluate(random_image(16, 3), random_image(16, 3), 0.192, 1.0)};
  const MetricReport report = make_report({"a", "b"}, samples);
  EXPECT_EQ(report.psnr.count, 2u);
  EXPECT_EQ(report.ssim.count, 2u);
  EXPECT_TRUE(samples[1].psnrCapped);
  std::ostringstream text, kv;
  write_report_text(text, report);
  write_report_kv(kv, report);
  EXPECT_NE(text.str().find("psnr mean="), std::string::npos);
  EXPECT_NE(text.str().find("+-"), std::string::npos);
  EXPECT_NE(kv.str().find("psnr "), std::string::npos);
  EXPECT_NE(kv.str().find("rmseHU "), std::string::npos);
}

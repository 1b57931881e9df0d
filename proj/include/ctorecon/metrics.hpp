#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "ctorecon/core.hpp"

namespace ctorecon {

inline constexpr double kPsnrCap = 99.0;
inline constexpr double kMuWaterPerMm = 0.0192;
inline constexpr double kMuWaterPerCm = 0.192;

struct PsnrResult {
  double db = 0.0;
  bool exactMatch = false;  // MSE was zero; db holds the cap
};

/// 10 log10(peak^2 / MSE). Identical images give the 99 dB cap with the flag set.
PsnrResult psnr(const Image& test, const Image& ref, double peak);
/// Peak taken as the reference maximum.
PsnrResult psnr(const Image& test, const Image& ref);

/// Mean local SSIM: 11x11 Gaussian window (sigma 1.5), K1 = 0.01, K2 = 0.03,
/// symmetric (mirror) boundary.
double ssim(const Image& test, const Image& ref, double peak);

/// RMS difference after mapping both images to HU = 1000 (mu - muWater) / muWater.
double rmse_hu(const Image& test, const Image& ref, double muWater);

struct MetricSample {
  double psnr = 0.0;
  bool psnrCapped = false;
  double ssim = 0.0;
  double rmseHU = 0.0;
};

MetricSample evaluate(const Image& test, const Image& ref, double muWater, double peak);

struct Aggregate {
  double mean = 0.0;
  double std = 0.0;  // population standard deviation
  std::size_t count = 0;
};

Aggregate aggregate(const std::vector<double>& values);

struct MetricReport {
  std::vector<std::string> names;  // one per sample
  std::vector<MetricSample> samples;
  Aggregate psnr;
  Aggregate ssim;
  Aggregate rmseHU;
};

MetricReport make_report(std::vector<std::string> names, std::vector<MetricSample> samples);

/// Human-readable lines: one per image, then "mean +- std" lines.
void write_report_text(std::ostream& os, const MetricReport& report);
/// Machine-readable: "name mean std count" per metric.
void write_report_kv(std::ostream& os, const MetricReport& report);

}  // namespace ctorecon

#include "ctorecon/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <stdexcept>

namespace ctorecon {

namespace {

void check_dims(const Image& a, const Image& b) {
  if (a.width != b.width || a.height != b.height) throw std::invalid_argument("metrics: image dimensions differ");
  if (a.size() == 0) throw std::invalid_argument("metrics: empty image");
}

// Mirror index without repeating the edge sample twice: -1 -> 0, n -> n-1 ("symmetric").
std::size_t mirror(long long i, long long n) {
  const long long period = 2 * n;
  i %= period;
  if (i < 0) i += period;
  if (i >= n) i = period - 1 - i;
  return static_cast<std::size_t>(i);
}

// Separable Gaussian blur with symmetric boundary.
std::vector<double> blur(const std::vector<double>& v, std::size_t w, std::size_t h, const std::vector<double>& k) {
  const long long r = static_cast<long long>(k.size() / 2);
  std::vector<double> tmp(v.size(), 0.0);
  std::vector<double> out(v.size(), 0.0);
  for (std::size_t j = 0; j < h; ++j)
    for (std::size_t i = 0; i < w; ++i) {
      double s = 0.0;
      for (long long t = -r; t <= r; ++t)
        s += k[static_cast<std::size_t>(t + r)] * v[j * w + mirror(static_cast<long long>(i) + t, static_cast<long long>(w))];
      tmp[j * w + i] = s;
    }
  for (std::size_t j = 0; j < h; ++j)
    for (std::size_t i = 0; i < w; ++i) {
      double s = 0.0;
      for (long long t = -r; t <= r; ++t)
        s += k[static_cast<std::size_t>(t + r)] * tmp[mirror(static_cast<long long>(j) + t, static_cast<long long>(h)) * w + i];
      out[j * w + i] = s;
    }
  return out;
}

}  // namespace

PsnrResult psnr(const Image& test, const Image& ref, double peak) {
  check_dims(test, ref);
  if (!(peak > 0.0)) throw std::invalid_argument("psnr: peak must be > 0");
  double mse = 0.0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const double d = test.values[i] - ref.values[i];
    mse += d * d;
  }
  mse /= static_cast<double>(test.size());
  if (mse == 0.0) return {kPsnrCap, true};
  return {10.0 * std::log10(peak * peak / mse), false};
}

PsnrResult psnr(const Image& test, const Image& ref) {
  check_dims(test, ref);
  return psnr(test, ref, *std::max_element(ref.values.begin(), ref.values.end()));
}

double ssim(const Image& test, const Image& ref, double peak) {
  check_dims(test, ref);
  if (!(peak > 0.0)) throw std::invalid_argument("ssim: peak must be > 0");
  std::vector<double> k(11);
  double ks = 0.0;
  for (int t = -5; t <= 5; ++t) {
    k[static_cast<std::size_t>(t + 5)] = std::exp(-0.5 * t * t / (1.5 * 1.5));
    ks += k[static_cast<std::size_t>(t + 5)];
  }
  for (double& v : k) v /= ks;

  const std::size_t w = test.width;
  const std::size_t h = test.height;
  const auto& x = test.values;
  const auto& y = ref.values;
  std::vector<double> xx(x.size()), yy(x.size()), xy(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    xx[i] = x[i] * x[i];
    yy[i] = y[i] * y[i];
    xy[i] = x[i] * y[i];
  }
  const auto mx = blur(x, w, h, k);
  const auto my = blur(y, w, h, k);
  const auto sxx = blur(xx, w, h, k);
  const auto syy = blur(yy, w, h, k);
  const auto sxy = blur(xy, w, h, k);

  const double c1 = (0.01 * peak) * (0.01 * peak);
  const double c2 = (0.03 * peak) * (0.03 * peak);
  double total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double vx = sxx[i] - mx[i] * mx[i];
    const double vy = syy[i] - my[i] * my[i];
    const double cxy = sxy[i] - mx[i] * my[i];
    total += ((2.0 * mx[i] * my[i] + c1) * (2.0 * cxy + c2)) /
             ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
  }
  return total / static_cast<double>(x.size());
}

double rmse_hu(const Image& test, const Image& ref, double muWater) {
  check_dims(test, ref);
  if (!(muWater > 0.0)) throw std::invalid_argument("rmse_hu: muWater must be > 0");
  double s = 0.0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    // HU(a) - HU(b) = 1000 (a - b) / muWater
    const double d = 1000.0 * (test.values[i] - ref.values[i]) / muWater;
    s += d * d;
  }
  return std::sqrt(s / static_cast<double>(test.size()));
}

MetricSample evaluate(const Image& test, const Image& ref, double muWater, double peak) {
  const PsnrResult p = psnr(test, ref, peak);
  return {p.db, p.exactMatch, ssim(test, ref, peak), rmse_hu(test, ref, muWater)};
}

Aggregate aggregate(const std::vector<double>& values) {
  Aggregate a;
  a.count = values.size();
  if (values.empty()) return a;
  for (double v : values) a.mean += v;
  a.mean /= static_cast<double>(values.size());
  double s = 0.0;
  for (double v : values) s += (v - a.mean) * (v - a.mean);
  a.std = std::sqrt(s / static_cast<double>(values.size()));
  return a;
}

MetricReport make_report(std::vector<std::string> names, std::vector<MetricSample> samples) {
  if (names.size() != samples.size()) throw std::invalid_argument("make_report: names and samples differ in length");
  MetricReport r;
  std::vector<double> p, s, h;
  for (const auto& m : samples) {
    p.push_back(m.psnr);
    s.push_back(m.ssim);
    h.push_back(m.rmseHU);
  }
  r.names = std::move(names);
  r.samples = std::move(samples);
  r.psnr = aggregate(p);
  r.ssim = aggregate(s);
  r.rmseHU = aggregate(h);
  return r;
}

void write_report_text(std::ostream& os, const MetricReport& report) {
  os << std::setprecision(10);
  for (std::size_t i = 0; i < report.samples.size(); ++i) {
    const auto& m = report.samples[i];
    os << report.names[i] << ": psnr=" << m.psnr << (m.psnrCapped ? " (capped, exact match)" : "") << " ssim=" << m.ssim
       << " rmseHU=" << m.rmseHU << "\n";
  }
  os << "psnr mean=" << report.psnr.mean << " +- " << report.psnr.std << " n=" << report.psnr.count << "\n";
  os << "ssim mean=" << report.ssim.mean << " +- " << report.ssim.std << " n=" << report.ssim.count << "\n";
  os << "rmseHU mean=" << report.rmseHU.mean << " +- " << report.rmseHU.std << " n=" << report.rmseHU.count << "\n";
}

void write_report_kv(std::ostream& os, const MetricReport& report) {
  os << std::setprecision(17);
  os << "psnr " << report.psnr.mean << " " << report.psnr.std << " " << report.psnr.count << "\n";
  os << "ssim " << report.ssim.mean << " " << report.ssim.std << " " << report.ssim.count << "\n";
  os << "rmseHU " << report.rmseHU.mean << " " << report.rmseHU.std << " " << report.rmseHU.count << "\n";
}

}  // namespace ctorecon

#include "ctorecon/verify.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <iomanip>
#include <numbers>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "ctorecon/autodiff.hpp"
#include "ctorecon/classical.hpp"
#include "ctorecon/disco.hpp"
#include "ctorecon/model.hpp"
#include "ctorecon/phantom.hpp"
#include "ctorecon/projector.hpp"
#include "ctorecon/random.hpp"
#include "ctorecon/spectral.hpp"

namespace ctorecon::verify {

namespace {

Check below(std::string name, double value, double threshold, std::string detail = {}) {
  Check c;
  c.name = std::move(name);
  c.value = value;
  c.threshold = threshold;
  c.lowerIsBetter = true;
  c.pass = threshold == 0.0 ? value == 0.0 : value < threshold;
  c.detail = std::move(detail);
  return c;
}

Check at_least(std::string name, double value, double threshold, std::string detail = {}) {
  Check c;
  c.name = std::move(name);
  c.value = value;
  c.threshold = threshold;
  c.lowerIsBetter = false;
  c.pass = value >= threshold;
  c.detail = std::move(detail);
  return c;
}

std::vector<double> normals(std::size_t n, std::uint64_t seed) {
  Philox rng(seed);
  std::vector<double> v(n);
  for (double& x : v) x = rng.normal();
  return v;
}

Tensor random_tensor(std::size_t c, std::size_t rows, std::size_t cols, std::uint64_t seed) {
  return Tensor(c, rows, cols, normals(c * rows * cols, seed));
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm(const std::vector<double>& a) { return std::sqrt(dot(a, a)); }

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

double rel_l2(const std::vector<double>& a, const std::vector<double>& ref) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d += (a[i] - ref[i]) * (a[i] - ref[i]);
  return std::sqrt(d) / norm(ref);
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(6) << v;
  return os.str();
}

/// Shift by k rows in theta; rows that cross the boundary are reversed in r.
/// Written independently of the padding code so that it can catch a broken rule.
Tensor theta_shift(const Tensor& t, long long k) {
  Tensor out(t.channels, t.rows, t.cols);
  const auto n = static_cast<long long>(t.rows);
  for (std::size_t c = 0; c < t.channels; ++c)
    for (long long i = 0; i < n; ++i) {
      const long long src = i - k;
      const long long wraps = src >= 0 ? src / n : -((-src + n - 1) / n);
      const auto row = static_cast<std::size_t>(src - wraps * n);
      for (std::size_t j = 0; j < t.cols; ++j) {
        const std::size_t sj = (wraps % 2 != 0) ? t.cols - 1 - j : j;
        out.at(c, static_cast<std::size_t>(i), j) = t.at(c, row, sj);
      }
    }
  return out;
}

/// Ties angular slot m to slot perRing - m in every ring (kernel even in r).
void symmetrize_coeffs(std::vector<double>& coeffs, const KernelBasisConfig& basis) {
  const std::size_t L = 1 + basis.rings * basis.perRing;
  const std::size_t P = basis.perRing;
  for (std::size_t base = 0; base + L <= coeffs.size(); base += L)
    for (std::size_t k = 1; k <= basis.rings; ++k)
      for (std::size_t m = 1; m < P; ++m) {
        const std::size_t a = base + 1 + (k - 1) * P + m;
        const std::size_t b = base + 1 + (k - 1) * P + (P - m);
        if (a < b) {
          const double mean = 0.5 * (coeffs[a] + coeffs[b]);
          coeffs[a] = mean;
          coeffs[b] = mean;
        }
      }
}

ProjectorConfig adjoint_geometry() {
  ProjectorConfig cfg;
  cfg.width = 64;
  cfg.height = 64;
  cfg.spacing = 2.0 / 64.0;
  cfg.detCount = 96;
  cfg.detSpacing = 2.0 / 64.0;
  cfg.angles = AngleSet::make_uniform(45, std::numbers::pi);
  return cfg;
}

/// <P x, d> against <x, P^T d> with d = P x - w, via the tape's backward pass.
Check tape_dot_test(const std::string& name, const Tensor& x, const std::function<Var(Tape&, Var)>& op,
                    std::uint64_t seed) {
  Tape tape;
  Var xv = tape.param("x", x);
  Var y = op(tape, xv);
  const Tensor yv = tape.value(y);
  const Tensor w = random_tensor(yv.channels, yv.rows, yv.cols, seed);
  Var loss = tape.half_sum_squares(tape.sub(y, tape.constant(w)));
  const ParamTree g = tape.grad(loss);
  std::vector<double> d(yv.size());
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = yv.data[i] - w.data[i];
  const double lhs = dot(yv.data, d);
  const double rhs = dot(x.data, g.at("x"));
  return below("adjoint." + name, std::abs(lhs - rhs) / (norm(yv.data) * norm(d)), 1e-12);
}

using LossBuilder = std::function<Var(Tape&, const ParamTree&)>;

struct Evaluation {
  double loss = 0.0;
  std::vector<char> reluPattern;  // sign of every relu output on the tape
};

Evaluation evaluate_loss(const LossBuilder& build, const ParamTree& params) {
  Tape tape;
  Evaluation e;
  e.loss = tape.value(build(tape, params)).data[0];
  for (std::size_t id = 0; id < tape.size(); ++id) {
    if (tape.kind(Var{id}) != OpKind::Relu) continue;
    for (double v : tape.value(Var{id}).data) e.reluPattern.push_back(v > 0.0 ? 1 : 0);
  }
  return e;
}

/// Central differences (step 1e-5) against reverse mode on sampled leaves
/// under `prefix`. The loss is only piecewise smooth, so a sample whose +-step
/// changes any relu activation is redrawn.
Check gradcheck(const std::string& name, const LossBuilder& build, const ParamTree& params, const std::string& prefix,
                std::size_t samples, std::uint64_t seed) {
  constexpr double kStep = 1e-5;
  constexpr double kFloor = 1e-7;  // magnitudes below this compare absolutely
  Tape tape;
  const ParamTree g = tape.grad(build(tape, params));
  std::vector<std::string> names;
  for (const auto& n : params.names())
    if (n.starts_with(prefix)) names.push_back(n);
  if (names.empty()) throw std::invalid_argument("gradcheck: no parameters under " + prefix);
  Philox rng(seed);
  double worst = 0.0;
  std::string worstName;
  std::size_t accepted = 0;
  std::size_t redrawn = 0;
  while (accepted < samples && redrawn < 20 * samples) {
    const std::string& leaf = names[rng.below(names.size())];
    const std::size_t idx = rng.below(params.at(leaf).size());
    ParamTree plus = params;
    ParamTree minus = params;
    plus.at(leaf)[idx] += kStep;
    minus.at(leaf)[idx] -= kStep;
    const Evaluation ep = evaluate_loss(build, plus);
    const Evaluation em = evaluate_loss(build, minus);
    if (ep.reluPattern != em.reluPattern) {
      ++redrawn;
      continue;
    }
    ++accepted;
    const double analytic = g.contains(leaf) ? g.at(leaf)[idx] : 0.0;
    const double fd = (ep.loss - em.loss) / (2.0 * kStep);
    const double rel = std::abs(fd - analytic) / std::max({std::abs(fd), std::abs(analytic), kFloor});
    if (rel >= worst) {
      worst = rel;
      worstName = leaf + "[" + std::to_string(idx) + "] fd=" + fmt(fd) + " analytic=" + fmt(analytic);
    }
  }
  Check c = below("gradcheck." + name, worst, 1e-4,
                  std::to_string(accepted) + " params (" + std::to_string(redrawn) + " redrawn at relu kinks), worst " +
                      worstName);
  if (accepted < samples) c.pass = false;
  return c;
}

Tensor to_tensor(const Image& img) { return Tensor(1, img.height, img.width, img.values); }
Tensor to_tensor(const Sinogram& s) { return Tensor(1, s.views(), s.detCount, s.values); }

Image gaussian_blob(std::size_t n, double spacing, double cx, double cy, double sigma) {
  Image img(n, n, spacing);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t i = 0; i < n; ++i) {
      const double dx = img.x_of(i) - cx;
      const double dy = img.y_of(j) - cy;
      img.at(i, j) = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
    }
  return img;
}

ProjectorConfig slice_geometry(const Image& img) {
  return ProjectorConfig::for_image(
      img, AngleSet::make_uniform(36, std::numbers::pi),
      ProjectorConfig::covering_detector_count(img.width, img.height, img.spacing, img.spacing), img.spacing);
}

}  // namespace

bool SuiteReport::passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.pass; });
}

const std::vector<std::string>& suite_names() {
  static const std::vector<std::string> names{"adjoint", "equivariance", "slice", "disco", "gradcheck"};
  return names;
}

// ---------------------------------------------------------------------------
// adjoint

Check projector_adjoint(std::size_t pairs) {
  const ProjectorConfig cfg = adjoint_geometry();
  double worst = 0.0;
  std::vector<double> ax(cfg.sinogram_size());
  std::vector<double> aty(cfg.image_size());
  for (std::size_t k = 0; k < pairs; ++k) {
    const auto x = normals(cfg.image_size(), 2 * k + 1);
    const auto y = normals(cfg.sinogram_size(), 2 * k + 2);
    forward_values(cfg, x, ax);
    adjoint_values(cfg, y, aty);
    worst = std::max(worst, std::abs(dot(ax, y) - dot(x, aty)) / (norm(ax) * norm(y)));
  }
  return below("adjoint.projector", worst, 1e-12, std::to_string(pairs) + " pairs, 64x64 / 45 views / 96 detectors");
}

std::vector<Check> primitive_adjoints() {
  std::vector<Check> out;
  auto proj = std::make_shared<const ProjectorConfig>(adjoint_geometry());
  out.push_back(tape_dot_test("tape.projector_forward", random_tensor(1, 64, 64, 11),
                              [&](Tape& t, Var x) { return t.projector_forward(x, proj); }, 12));
  out.push_back(tape_dot_test("tape.projector_adjoint", random_tensor(1, 45, 96, 13),
                              [&](Tape& t, Var x) { return t.projector_adjoint(x, proj); }, 14));

  const KernelBasisConfig basis{0.12, 5, 7};
  const DiscoGrid grid = DiscoGrid::unit(32, 48, PaddingMode::FlippedCircularTheta, PaddingMode::Reflect);
  auto table = std::make_shared<const BasisOperator>(KernelBasis(basis), grid);
  const Tensor coeffs(1, 1, 3 * 2 * table->basis_count(), normals(3 * 2 * table->basis_count(), 15));
  out.push_back(tape_dot_test("tape.disco_input", random_tensor(2, 32, 48, 16),
                              [&](Tape& t, Var x) { return t.disco_apply(x, t.constant(coeffs), table, 3, 1.7); }, 17));
  const Tensor input = random_tensor(2, 32, 48, 18);
  out.push_back(tape_dot_test("tape.disco_coeffs", coeffs,
                              [&](Tape& t, Var c) { return t.disco_apply(t.constant(input), c, table, 3, 1.7); }, 19));

  auto dft = std::make_shared<const spectral::CenteredDft>(96);
  out.push_back(tape_dot_test("tape.fft_r", random_tensor(1, 15, 96, 20), [&](Tape& t, Var x) { return t.fft_r(x, dft); },
                              21));
  out.push_back(tape_dot_test("tape.ifft_r", random_tensor(2, 15, 96, 22),
                              [&](Tape& t, Var x) { return t.ifft_r(x, dft); }, 23));
  auto ramp = std::make_shared<const spectral::RampFilter>(96, 2.0 / 64.0, 2);
  out.push_back(tape_dot_test("tape.ramp_filter", random_tensor(1, 15, 96, 24),
                              [&](Tape& t, Var x) { return t.ramp_filter(x, ramp); }, 25));
  out.push_back(tape_dot_test("tape.downsample2", random_tensor(3, 16, 24, 26),
                              [&](Tape& t, Var x) { return t.downsample2(x, true, true); }, 27));
  out.push_back(tape_dot_test("tape.upsample2", random_tensor(3, 16, 24, 28),
                              [&](Tape& t, Var x) { return t.upsample2(x, false, true); }, 29));
  const Tensor mix(1, 1, 4 * 3, normals(12, 30));
  out.push_back(tape_dot_test("tape.channel_mix", random_tensor(3, 8, 8, 31),
                              [&](Tape& t, Var x) { return t.channel_mix(x, t.constant(mix), Var{}, 4); }, 32));
  return out;
}

// ---------------------------------------------------------------------------
// slice

Check pi_flip() {
  const std::size_t n = 64;
  const Image img = rasterize(shepp_logan(), n, n, 2.0 / static_cast<double>(n));
  const std::size_t views = 90;
  const ProjectorConfig cfg =
      ProjectorConfig::for_image(img, AngleSet::make_uniform(views, 2.0 * std::numbers::pi), 96, img.spacing);
  const Sinogram s = forward(cfg, img);
  double worst = 0.0;
  for (std::size_t v = 0; v < views / 2; ++v)
    for (std::size_t d = 0; d < s.detCount; ++d)
      worst = std::max(worst, std::abs(s.at(v + views / 2, d) - s.at(v, s.detCount - 1 - d)));
  return below("slice.pi_flip", worst, 1e-6, "Shepp-Logan 64x64, 90 views over [0, 2pi)");
}

Check fourier_slice_blob() {
  const std::size_t n = 128;
  const double h = 2.0 / static_cast<double>(n);
  const Image img = gaussian_blob(n, h, 0.0, 0.0, 8.0 * h);
  const FourierSliceReport r = fourier_slice_check(slice_geometry(img), img, 0.25);
  return below("slice.gaussian_blob", r.maxRelError, 0.05,
               "sigma 8 px, 128x128, " + std::to_string(r.comparedPoints) + " frequency samples");
}

Check fourier_slice_offcentre() {
  const std::size_t n = 128;
  const double h = 2.0 / static_cast<double>(n);
  const Image img = gaussian_blob(n, h, 20.0 * h, -12.0 * h, 2.0 * h);
  // Bilinear interpolation across oblique rays attenuates by ~5% at 0.25 Nyquist,
  // so the flatness check uses a slightly narrower band.
  const FourierSliceReport r = fourier_slice_check(slice_geometry(img), img, 0.2);
  return below("slice.offcentre_magnitude_spread", r.maxMagnitudeSpread, 0.05,
               "sigma 2 px at (20, -12) px, |omega| <= 0.2 Nyquist");
}

Check dft_row_permutation() {
  const std::size_t rows = 15;
  const std::size_t n = 96;
  const spectral::CenteredDft dft(n);
  const auto x = normals(rows * n, 41);
  std::vector<std::size_t> perm(rows);
  for (std::size_t i = 0; i < rows; ++i) perm[i] = (7 * i + 3) % rows;
  std::vector<double> px(x.size());
  for (std::size_t i = 0; i < rows; ++i) std::copy_n(x.begin() + static_cast<long>(perm[i] * n), n, px.begin() + static_cast<long>(i * n));
  std::vector<double> re(x.size()), im(x.size()), pre(x.size()), pim(x.size());
  dft.forward(x, rows, re, im);
  dft.forward(px, rows, pre, pim);
  double worst = 0.0;
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t k = 0; k < n; ++k) {
      worst = std::max(worst, std::abs(pre[i * n + k] - re[perm[i] * n + k]));
      worst = std::max(worst, std::abs(pim[i * n + k] - im[perm[i] * n + k]));
    }
  return below("slice.dft_row_permutation", worst, 0.0, "exact equality");
}

// ---------------------------------------------------------------------------
// equivariance

Check circular_shift_equivariance() {
  const DiscoGrid grid = DiscoGrid::unit(32, 32, PaddingMode::Circular, PaddingMode::Circular);
  DiscoKernel kernel(KernelBasis({0.15, 5, 7}), 2, 3);
  kernel.coeffs = normals(kernel.coeffs.size(), 51);
  const DiscreteOperator op = discretize(kernel, grid);
  const Tensor x = random_tensor(2, 32, 32, 52);
  auto shift = [](const Tensor& t, std::size_t s0, std::size_t s1) {
    Tensor out(t.channels, t.rows, t.cols);
    for (std::size_t c = 0; c < t.channels; ++c)
      for (std::size_t i = 0; i < t.rows; ++i)
        for (std::size_t j = 0; j < t.cols; ++j) out.at(c, (i + s0) % t.rows, (j + s1) % t.cols) = t.at(c, i, j);
    return out;
  };
  const Tensor a = apply(op, shift(x, 5, 11));
  const Tensor b = shift(apply(op, x), 5, 11);
  return below("equivariance.circular_shift", max_abs_diff(a.data, b.data), 1e-12, "32x32, shift (5, 11)");
}

Check flipped_shift_equivariance() {
  const DiscoGrid grid = DiscoGrid::unit(30, 48, PaddingMode::FlippedCircularTheta, PaddingMode::Reflect);
  DiscoKernel kernel(KernelBasis({0.12, 5, 7}), 2, 3);
  kernel.coeffs = normals(kernel.coeffs.size(), 61);
  symmetrize_coeffs(kernel.coeffs, kernel.basis.config());
  const DiscreteOperator op = discretize(kernel, grid);
  const Tensor x = random_tensor(2, 30, 48, 62);
  double worst = 0.0;
  for (long long k : {1LL, 7LL, 29LL}) {
    const Tensor a = apply(op, theta_shift(x, k));
    const Tensor b = theta_shift(apply(op, x), k);
    worst = std::max(worst, max_abs_diff(a.data, b.data));
  }
  return below("equivariance.flipped_theta_shift", worst, 1e-12, "30 x 48, shifts 1, 7, 29, r-symmetric kernel");
}

Check nos_equivariance() {
  const CtoConfig cfg = CtoConfig::mini();
  CtoModel model = init_model(cfg, 71);
  for (auto& [name, values] : model.params)
    if (name.ends_with("/disco")) symmetrize_coeffs(values, cfg.basis);
  const std::size_t views = cfg.max_views();
  const Image img = make_phantom_set(cfg, 1, 72).front();
  const Sinogram p = simulate_sinogram(cfg, img, views);
  const Tensor pt = to_tensor(p);
  auto run = [&](const Tensor& t) {
    return to_tensor(nos_forward(model, Sinogram(p.angleSet, p.detCount, p.detSpacing, t.data)));
  };
  const Tensor base = run(pt);
  double worst = 0.0;
  double scale = 0.0;
  for (double v : base.data) scale = std::max(scale, std::abs(v));
  const std::size_t stride = std::size_t{1} << cfg.sinoLevels;
  for (std::size_t k : {stride, 7 * stride, views - stride}) {
    const Tensor a = run(theta_shift(pt, static_cast<long long>(k)));
    const Tensor b = theta_shift(base, static_cast<long long>(k));
    worst = std::max(worst, max_abs_diff(a.data, b.data));
  }
  return below("equivariance.nos_composed", worst, 1e-10,
               std::to_string(views) + " views, shifts in multiples of " + std::to_string(stride) +
                   " rows, output scale " + fmt(scale));
}

// ---------------------------------------------------------------------------
// disco

std::vector<Check> basis_values() {
  const KernelBasis b({0.05, 5, 7});
  std::vector<Check> out;
  out.push_back(below("disco.basis_count", std::abs(static_cast<double>(b.size()) - 36.0), 0.0, "1 + 5 * 7"));
  double outside = 0.0;
  for (std::size_t l = 0; l < b.size(); ++l) {
    outside = std::max(outside, std::abs(b.evaluate(l, 0.0501, 0.0)));
    outside = std::max(outside, std::abs(b.evaluate(l, 0.036, -0.036)));
  }
  out.push_back(below("disco.basis_outside_cutoff", outside, 0.0));
  out.push_back(below("disco.basis_iso_origin", std::abs(b.evaluate(0, 0.0, 0.0) - 1.0), 1e-15));
  out.push_back(below("disco.basis_ring3_slot0", std::abs(b.evaluate(b.index(3, 0), 3.0 * 0.05 / 5.0, 0.0) - 1.0), 1e-12));
  return out;
}

Check self_point_scaling() {
  const DiscoGrid grid = DiscoGrid::unit(32, 32, PaddingMode::Zero, PaddingMode::Zero);
  DiscoKernel kernel(KernelBasis({0.4 / 32.0, 5, 7}), 1, 1);
  const double c = 2.5;
  kernel.coeff(0, 0, 0) = c;
  const DiscreteOperator op = discretize(kernel, grid);
  std::size_t maxRow = 0;
  for (std::size_t o = 0; o < op.table->out_size(); ++o) maxRow = std::max(maxRow, op.table->row(o).size());
  const Tensor x = random_tensor(1, 32, 32, 81);
  const Tensor y = apply(op, x);
  const double q = 1.0 / (32.0 * 32.0);
  std::vector<double> expect(x.data);
  for (double& v : expect) v *= c * q;
  const double err = rel_l2(y.data, expect) + (maxRow == 1 ? 0.0 : 1.0);
  return below("disco.self_point_scaling", err, 1e-14, "max entries per row " + std::to_string(maxRow));
}

Check disco_linearity() {
  const DiscoGrid grid = DiscoGrid::unit(24, 24, PaddingMode::Zero, PaddingMode::Reflect);
  DiscoKernel k1(KernelBasis({0.15, 5, 7}), 2, 2);
  DiscoKernel k2 = k1;
  k1.coeffs = normals(k1.coeffs.size(), 91);
  k2.coeffs = normals(k2.coeffs.size(), 92);
  const Tensor x = random_tensor(2, 24, 24, 93);
  const Tensor y = random_tensor(2, 24, 24, 94);
  const double a = 0.7;
  const double b = -1.3;
  const DiscreteOperator op1 = discretize(k1, grid);
  Tensor xy = x;
  for (std::size_t i = 0; i < xy.size(); ++i) xy.data[i] = a * x.data[i] + b * y.data[i];
  const Tensor lhs = apply(op1, xy);
  const Tensor ax = apply(op1, x);
  const Tensor ay = apply(op1, y);
  std::vector<double> rhs(lhs.size());
  for (std::size_t i = 0; i < rhs.size(); ++i) rhs[i] = a * ax.data[i] + b * ay.data[i];
  double err = rel_l2(lhs.data, rhs);

  DiscoKernel k12 = k1;
  for (std::size_t i = 0; i < k12.coeffs.size(); ++i) k12.coeffs[i] = a * k1.coeffs[i] + b * k2.coeffs[i];
  const Tensor c12 = apply(discretize(k12, grid), x);
  const Tensor c2 = apply(discretize(k2, grid), x);
  for (std::size_t i = 0; i < rhs.size(); ++i) rhs[i] = a * ax.data[i] + b * c2.data[i];
  err = std::max(err, rel_l2(c12.data, rhs));
  return below("disco.linearity", err, 1e-12, "input and coefficients");
}

Check resolution_convergence() {
  DiscoKernel kernel(KernelBasis({0.1, 5, 7}), 1, 1);
  for (std::size_t l = 0; l < kernel.coeffs.size(); ++l) kernel.coeffs[l] = 1.0 + 0.5 * std::sin(static_cast<double>(l));
  const std::size_t coarse = 32;
  auto output = [&](std::size_t n) {
    const DiscoGrid grid = DiscoGrid::unit(n, n, PaddingMode::Zero, PaddingMode::Zero);
    Tensor x(1, n, n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        const double u0 = (static_cast<double>(i) + 0.5) / static_cast<double>(n) - 0.45;
        const double u1 = (static_cast<double>(j) + 0.5) / static_cast<double>(n) - 0.55;
        x.at(0, i, j) = std::exp(-(u0 * u0 + u1 * u1) / (2.0 * 0.12 * 0.12));
      }
    const double pc = 1.0 / static_cast<double>(coarse);
    return apply(discretize(kernel, grid, coarse, coarse, pc, pc), x).data;
  };
  const auto o32 = output(32);
  const auto o64 = output(64);
  const auto o128 = output(128);
  const double e32 = rel_l2(o32, o64);
  const double e64 = rel_l2(o64, o128);
  return at_least("disco.resolution_convergence", e32 / e64, 1.5,
                  "eps32 = " + fmt(e32) + ", eps64 = " + fmt(e64) + ", compared on the 32x32 grid");
}

// ---------------------------------------------------------------------------
// gradcheck

Check cto_gradcheck(std::size_t samples) {
  const CtoConfig cfg = CtoConfig::mini();
  const CtoModel model = init_model(cfg, 101);
  const std::size_t views = cfg.viewLadder.front();
  const Image img = make_phantom_set(cfg, 1, 102).front();
  const Sinogram sino = simulate_sinogram(cfg, img, views);
  auto proj = std::make_shared<const ProjectorConfig>(cfg.projector(views));
  const LossBuilder build = [&](Tape& t, const ParamTree& p) {
    Var out = cto_forward(t, model.config, p, t.constant(to_tensor(sino)), proj);
    return t.mse_loss(out, t.constant(to_tensor(img)));
  };
  return gradcheck("cto_mini", build, model.params, "", samples, 103);
}

std::vector<Check> branch_gradchecks() {
  std::vector<Check> out;
  const CtoConfig cfg = CtoConfig::mini();
  const CtoModel model = init_model(cfg, 111);
  const Image img = make_phantom_set(cfg, 1, 112).front();
  const Sinogram sino = simulate_sinogram(cfg, img, cfg.viewLadder[1]);
  const Tensor zeroImage(1, 64, 64);
  const Image start = fbp(FbpConfig{}, cfg.projector(sino.views()), sino);

  out.push_back(gradcheck(
      "disco_net",
      [&](Tape& t, const ParamTree& p) {
        return t.mse_loss(udno_forward(t, cfg.noi(), "noi0", p, t.constant(to_tensor(img))), t.constant(zeroImage));
      },
      model.params, "noi0/", 10, 114));

  const Tensor zeroSino(1, sino.views(), sino.detCount);
  out.push_back(gradcheck(
      "fft_branch_net",
      [&](Tape& t, const ParamTree& p) {
        return t.mse_loss(nos_forward(t, cfg, p, t.constant(to_tensor(sino))), t.constant(zeroSino));
      },
      model.params, "nos_freq/", 10, 116));

  auto proj = std::make_shared<const ProjectorConfig>(cfg.projector(sino.views()));
  out.push_back(gradcheck(
      "projector_net",
      [&](Tape& t, const ParamTree& p) {
        // noi0 reaches the loss through the data-consistency term of cascade 1.
        Var s = t.constant(to_tensor(sino));
        Var x = cascade_step(t, model.config, p, 0, t.constant(to_tensor(start)), s, proj);
        x = cascade_step(t, model.config, p, 1, x, s, proj);
        return t.mse_loss(x, t.constant(to_tensor(img)));
      },
      model.params, "noi0/", 10, 117));
  return out;
}

// ---------------------------------------------------------------------------

SuiteReport run_suite(const std::string& name) {
  SuiteReport r;
  r.suite = name;
  auto add = [&](std::vector<Check> cs) { r.checks.insert(r.checks.end(), cs.begin(), cs.end()); };
  if (name == "adjoint") {
    r.checks.push_back(projector_adjoint());
    add(primitive_adjoints());
  } else if (name == "equivariance") {
    // Tables are rebuilt so that the current padding rule is the one tested.
    clear_basis_cache();
    r.checks.push_back(circular_shift_equivariance());
    r.checks.push_back(flipped_shift_equivariance());
    r.checks.push_back(nos_equivariance());
    clear_basis_cache();
  } else if (name == "slice") {
    r.checks.push_back(pi_flip());
    r.checks.push_back(fourier_slice_blob());
    r.checks.push_back(fourier_slice_offcentre());
    r.checks.push_back(dft_row_permutation());
  } else if (name == "disco") {
    add(basis_values());
    r.checks.push_back(self_point_scaling());
    r.checks.push_back(disco_linearity());
    r.checks.push_back(resolution_convergence());
  } else if (name == "gradcheck") {
    r.checks.push_back(cto_gradcheck());
    add(branch_gradchecks());
  } else {
    throw std::invalid_argument("unknown verify suite: " + name);
  }
  return r;
}

std::vector<SuiteReport> run_suites(const std::string& name) {
  std::vector<SuiteReport> out;
  if (name == "all") {
    for (const auto& s : suite_names()) out.push_back(run_suite(s));
  } else {
    out.push_back(run_suite(name));
  }
  return out;
}

void write_report(std::ostream& os, const std::vector<SuiteReport>& reports) {
  os << std::setprecision(6);
  for (const auto& r : reports) {
    os << "suite " << r.suite << " " << (r.passed() ? "PASS" : "FAIL") << "\n";
    for (const auto& c : r.checks) {
      os << "  " << (c.pass ? "PASS" : "FAIL") << " " << c.name << " value=" << c.value
         << (c.lowerIsBetter ? (c.threshold == 0.0 ? " required==" : " required<") : " required>=") << c.threshold;
      if (!c.detail.empty()) os << " (" << c.detail << ")";
      os << "\n";
    }
  }
}

}  // namespace ctorecon::verify

#include "ctorecon/model.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <mutex>
#include <numbers>
#include <sstream>
#include <tuple>

#include "ctorecon/binary_io.hpp"
#include "ctorecon/classical.hpp"
#include "ctorecon/metrics.hpp"
#include "ctorecon/phantom.hpp"
#include "ctorecon/random.hpp"
#include "ctorecon/spectral.hpp"

namespace ctorecon {

namespace {

constexpr char kModelMagic[4] = {'C', 'T', 'O', 'M'};
constexpr std::uint32_t kModelVersion = 1;

std::size_t pow2(std::size_t k) { return std::size_t{1} << k; }

const char* padding_name(ThetaPadding p) { return p == ThetaPadding::Flipped ? "flipped" : "zero"; }

// ---------------------------------------------------------------------------
// caches

using OperatorKey = std::tuple<double, std::size_t, std::size_t, std::size_t, std::size_t, double, double, int, int,
                               std::size_t, std::size_t, double, double>;

std::mutex g_cacheMutex;
std::map<OperatorKey, std::shared_ptr<const BasisOperator>> g_operators;
std::map<std::size_t, std::shared_ptr<const spectral::CenteredDft>> g_dfts;
std::map<std::pair<std::size_t, double>, std::shared_ptr<const spectral::RampFilter>> g_ramps;

std::shared_ptr<const spectral::CenteredDft> cached_dft(std::size_t n) {
  std::lock_guard lock(g_cacheMutex);
  auto& slot = g_dfts[n];
  if (!slot) slot = std::make_shared<spectral::CenteredDft>(n);
  return slot;
}

std::shared_ptr<const spectral::RampFilter> cached_ramp(std::size_t n, double detSpacing) {
  std::lock_guard lock(g_cacheMutex);
  auto& slot = g_ramps[{n, detSpacing}];
  if (!slot) slot = std::make_shared<spectral::RampFilter>(n, detSpacing, 2);
  return slot;
}

// ---------------------------------------------------------------------------
// UDNO layout

struct Layer {
  std::string name;
  std::size_t level;
  std::size_t in;
};

std::vector<Layer> udno_layers(const UdnoConfig& cfg) {
  std::vector<Layer> layers;
  for (std::size_t l = 0; l < cfg.levels; ++l)
    for (std::size_t b = 0; b < 2; ++b)
      layers.push_back({"enc" + std::to_string(l) + "." + std::to_string(b), l,
                        (l == 0 && b == 0) ? cfg.inChannels : cfg.hidden});
  for (std::size_t b = 0; b < 2; ++b) layers.push_back({"mid." + std::to_string(b), cfg.levels, cfg.hidden});
  for (std::size_t l = cfg.levels; l-- > 0;)
    for (std::size_t b = 0; b < 2; ++b) layers.push_back({"dec" + std::to_string(l) + "." + std::to_string(b), l, cfg.hidden});
  return layers;
}

Var leaf(Tape& tape, const ParamTree& params, const std::string& name) {
  const auto& v = params.at(name);
  return tape.param(name, Tensor(1, 1, v.size(), v));
}

Var block(Tape& tape, const UdnoConfig& cfg, const std::string& prefix, const ParamTree& params, const Layer& layer,
          Var x, const UdnoRun& run) {
  const Tensor& xv = tape.value(x);
  const DiscoGrid grid{xv.rows, xv.cols, run.kernelPitchScale / static_cast<double>(xv.rows),
                       run.kernelPitchScale / static_cast<double>(xv.cols), cfg.pad0, cfg.pad1};
  auto table = cached_basis_operator(cfg.basis_at(layer.level), grid, grid.rows, grid.cols, grid.pitch0, grid.pitch1);
  const std::string base = prefix + "/" + layer.name;
  Var y = tape.disco_apply(x, leaf(tape, params, base + "/disco"), table, cfg.hidden, cfg.gain_at(layer.level));
  y = tape.channel_mix(y, leaf(tape, params, base + "/mix_w"), leaf(tape, params, base + "/mix_b"), cfg.hidden);
  return tape.relu(y);
}

void udno_leaf_shapes(const UdnoConfig& cfg, const std::string& prefix,
                      const std::function<void(const std::string&, std::size_t, double)>& visit) {
  const std::size_t L = 1 + cfg.basis.rings * cfg.basis.perRing;
  for (const Layer& layer : udno_layers(cfg)) {
    const std::string base = prefix + "/" + layer.name;
    visit(base + "/disco", cfg.hidden * layer.in * L, 1.0 / std::sqrt(static_cast<double>(layer.in * L)));
    visit(base + "/mix_w", cfg.hidden * cfg.hidden, 1.0 / std::sqrt(static_cast<double>(cfg.hidden)));
    visit(base + "/mix_b", cfg.hidden, 0.0);
  }
  visit(prefix + "/out/w", cfg.outChannels * cfg.hidden, 1.0 / std::sqrt(static_cast<double>(cfg.hidden)));
  visit(prefix + "/out/b", cfg.outChannels, 0.0);
}

// ---------------------------------------------------------------------------
// config text

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

double parse_double(const std::string& key, const std::string& v) {
  if (v == "pi") return std::numbers::pi;
  if (v == "2pi") return 2.0 * std::numbers::pi;
  std::size_t pos = 0;
  double d = 0.0;
  try {
    d = std::stod(v, &pos);
  } catch (const std::exception&) {
    throw std::invalid_argument("config: bad number for " + key + ": '" + v + "'");
  }
  if (pos != v.size() || !std::isfinite(d)) throw std::invalid_argument("config: bad number for " + key + ": '" + v + "'");
  return d;
}

std::size_t parse_size(const std::string& key, const std::string& v) {
  if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos)
    throw std::invalid_argument("config: bad integer for " + key + ": '" + v + "'");
  return static_cast<std::size_t>(std::stoull(v));
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// ---------------------------------------------------------------------------

Tensor image_tensor(const Image& img) { return Tensor(1, img.height, img.width, img.values); }
Tensor sino_tensor(const Sinogram& s) { return Tensor(1, s.views(), s.detCount, s.values); }

std::shared_ptr<const ProjectorConfig> projector_for(const CtoConfig& cfg, const Sinogram& sino, std::size_t scale) {
  if (sino.detCount != cfg.detCount || sino.detSpacing != cfg.detSpacing)
    throw std::invalid_argument("sinogram detector layout does not match the model config");
  auto proj = std::make_shared<ProjectorConfig>(cfg.projector(sino.views(), scale));
  proj->angles = sino.angleSet;
  proj->validate();
  return proj;
}

}  // namespace

// ---------------------------------------------------------------------------
// UdnoConfig

void UdnoConfig::validate() const {
  if (levels < 1) throw std::invalid_argument("UDNO: levels must be >= 1");
  if (hidden < 1 || inChannels < 1 || outChannels < 1) throw std::invalid_argument("UDNO: channel counts must be >= 1");
  if (!(basis.cutoff > 0.0)) throw std::invalid_argument("UDNO: cutoff must be > 0");
  if (pad1 == PaddingMode::FlippedCircularTheta) throw std::invalid_argument("UDNO: flipped padding only on axis 0");
}

KernelBasisConfig UdnoConfig::basis_at(std::size_t level) const {
  KernelBasisConfig b = basis;
  // With both axes pooled the cutoff tracks the pitch. With one pooled axis a
  // growing disk would widen the other axis without bound, so it stays fixed.
  if (pool0 && pool1) b.cutoff = basis.cutoff * static_cast<double>(pow2(level));
  return b;
}

double UdnoConfig::gain_at(std::size_t level) const {
  const double c = basis_at(level).cutoff;
  return static_cast<double>(1 + basis.rings * basis.perRing) / (std::numbers::pi * c * c);
}

void UdnoConfig::check_input(std::size_t rows, std::size_t cols) const {
  const std::size_t f = pow2(levels);
  if ((pool0 && rows % f != 0) || (pool1 && cols % f != 0))
    throw std::invalid_argument("UDNO: input dims " + std::to_string(rows) + "x" + std::to_string(cols) +
                                " not divisible by 2^levels = " + std::to_string(f));
  if (rows == 0 || cols == 0) throw std::invalid_argument("UDNO: empty input");
}

// ---------------------------------------------------------------------------
// CtoConfig

CtoConfig CtoConfig::mini() { return CtoConfig{}; }

CtoConfig CtoConfig::full() {
  CtoConfig c;
  c.imageSize = 256;
  c.spacing = 2.0 / 256.0;
  c.detCount = 300;
  c.detSpacing = 2.0 * std::sqrt(2.0) / 300.0 * 1.02;
  c.viewLadder = {9, 18, 36, 72};
  // 300 detectors are divisible by 4 only, so NO_s pools twice.
  c.sinoLevels = 2;
  c.imageLevels = 4;
  c.hidden = 32;
  c.basis = {0.02, 5, 7};
  return c;
}

void CtoConfig::validate() const {
  if (cascades < 1) throw std::invalid_argument("config: cascades must be >= 1");
  if (imageSize < 2) throw std::invalid_argument("config: image_size must be >= 2");
  if (!(spacing > 0.0) || !(detSpacing > 0.0)) throw std::invalid_argument("config: spacings must be > 0");
  if (detCount < 1) throw std::invalid_argument("config: det_count must be >= 1");
  if (!(stepFraction > 0.0)) throw std::invalid_argument("config: step_fraction must be > 0");
  if (!(period > 0.0)) throw std::invalid_argument("config: period must be > 0");
  if (!(dcNorm >= 0.0)) throw std::invalid_argument("config: dc_norm must be >= 0");
  if (viewLadder.empty()) throw std::invalid_argument("config: view ladder is empty");
  for (std::size_t v : viewLadder) {
    if (v == 0) throw std::invalid_argument("config: view counts must be >= 1");
    if (max_views() % v != 0) throw std::invalid_argument("config: every ladder entry must divide the largest");
  }
  nos_spatial().validate();
  nos_freq().validate();
  noi().validate();
  nos_spatial().check_input(max_views(), detCount);
  noi().check_input(imageSize, imageSize);
}

UdnoConfig CtoConfig::nos_spatial() const {
  UdnoConfig u;
  u.levels = sinoLevels;
  u.hidden = hidden;
  u.basis = basis;
  u.pad0 = thetaPadding == ThetaPadding::Flipped ? PaddingMode::FlippedCircularTheta : PaddingMode::Zero;
  u.pad1 = PaddingMode::Reflect;
  // View counts vary across the ladder, so only the detector axis is pooled.
  u.pool0 = false;
  u.pool1 = true;
  return u;
}

UdnoConfig CtoConfig::nos_freq() const {
  UdnoConfig u = nos_spatial();
  u.inChannels = 2;
  u.outChannels = 2;
  return u;
}

UdnoConfig CtoConfig::noi() const {
  UdnoConfig u;
  u.levels = imageLevels;
  u.hidden = hidden;
  u.basis = basis;
  return u;
}

std::size_t CtoConfig::max_views() const {
  std::size_t m = 0;
  for (std::size_t v : viewLadder) m = std::max(m, v);
  return m;
}

ProjectorConfig CtoConfig::projector(std::size_t views) const { return projector(views, 1); }

ProjectorConfig CtoConfig::projector(std::size_t views, std::size_t scale) const {
  if (scale < 1) throw std::invalid_argument("projector: scale must be >= 1");
  ProjectorConfig p;
  p.width = imageSize * scale;
  p.height = imageSize * scale;
  p.spacing = spacing / static_cast<double>(scale);
  p.detCount = detCount;
  p.detSpacing = detSpacing;
  p.angles = AngleSet::make_uniform(views, period);
  p.stepFraction = stepFraction;
  return p;
}

std::string CtoConfig::to_text() const {
  std::ostringstream os;
  os << "cascades=" << cascades << "\n";
  os << "image_size=" << imageSize << "\n";
  os << "spacing=" << fmt(spacing) << "\n";
  os << "det_count=" << detCount << "\n";
  os << "det_spacing=" << fmt(detSpacing) << "\n";
  os << "step_fraction=" << fmt(stepFraction) << "\n";
  os << "period=" << fmt(period) << "\n";
  os << "views=";
  for (std::size_t i = 0; i < viewLadder.size(); ++i) os << (i ? "," : "") << viewLadder[i];
  os << "\n";
  os << "sino_levels=" << sinoLevels << "\n";
  os << "image_levels=" << imageLevels << "\n";
  os << "hidden=" << hidden << "\n";
  os << "cutoff=" << fmt(basis.cutoff) << "\n";
  os << "rings=" << basis.rings << "\n";
  os << "per_ring=" << basis.perRing << "\n";
  os << "theta_padding=" << padding_name(thetaPadding) << "\n";
  os << "nos_residual=" << (nosResidual ? "true" : "false") << "\n";
  os << "eta_init=" << fmt(etaInit) << "\n";
  os << "lambda_init=" << fmt(lambdaInit) << "\n";
  os << "dc_norm=" << fmt(dcNorm) << "\n";
  return os.str();
}

CtoConfig CtoConfig::from_text(const std::string& text, const CtoConfig& base) {
  CtoConfig c = base;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("config: expected key=value, got '" + line + "'");
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    if (key == "cascades") c.cascades = parse_size(key, val);
    else if (key == "image_size") c.imageSize = parse_size(key, val);
    else if (key == "spacing") c.spacing = parse_double(key, val);
    else if (key == "det_count") c.detCount = parse_size(key, val);
    else if (key == "det_spacing") c.detSpacing = parse_double(key, val);
    else if (key == "step_fraction") c.stepFraction = parse_double(key, val);
    else if (key == "period") c.period = parse_double(key, val);
    else if (key == "views") {
      c.viewLadder.clear();
      std::istringstream vs(val);
      std::string tok;
      while (std::getline(vs, tok, ',')) c.viewLadder.push_back(parse_size(key, trim(tok)));
    } else if (key == "sino_levels") c.sinoLevels = parse_size(key, val);
    else if (key == "image_levels") c.imageLevels = parse_size(key, val);
    else if (key == "hidden") c.hidden = parse_size(key, val);
    else if (key == "cutoff") c.basis.cutoff = parse_double(key, val);
    else if (key == "rings") c.basis.rings = parse_size(key, val);
    else if (key == "per_ring") c.basis.perRing = parse_size(key, val);
    else if (key == "theta_padding") {
      if (val == "flipped") c.thetaPadding = ThetaPadding::Flipped;
      else if (val == "zero") c.thetaPadding = ThetaPadding::Zero;
      else throw std::invalid_argument("config: theta_padding must be flipped or zero");
    } else if (key == "nos_residual") {
      if (val == "true") c.nosResidual = true;
      else if (val == "false") c.nosResidual = false;
      else throw std::invalid_argument("config: nos_residual must be true or false");
    } else if (key == "eta_init") c.etaInit = parse_double(key, val);
    else if (key == "lambda_init") c.lambdaInit = parse_double(key, val);
    else if (key == "dc_norm") c.dcNorm = parse_double(key, val);
    else throw std::invalid_argument("config: unknown key '" + key + "'");
  }
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// caches

std::shared_ptr<const BasisOperator> cached_basis_operator(const KernelBasisConfig& basis, const DiscoGrid& in,
                                                           std::size_t outRows, std::size_t outCols, double outPitch0,
                                                           double outPitch1) {
  const OperatorKey key{basis.cutoff, basis.rings,   basis.perRing, in.rows, in.cols,   in.pitch0, in.pitch1,
                        static_cast<int>(in.pad0), static_cast<int>(in.pad1), outRows, outCols, outPitch0, outPitch1};
  {
    std::lock_guard lock(g_cacheMutex);
    auto it = g_operators.find(key);
    if (it != g_operators.end()) return it->second;
  }
  auto op = std::make_shared<const BasisOperator>(KernelBasis(basis), in, outRows, outCols, outPitch0, outPitch1);
  std::lock_guard lock(g_cacheMutex);
  return g_operators.emplace(key, op).first->second;
}

void clear_basis_cache() {
  std::lock_guard lock(g_cacheMutex);
  g_operators.clear();
}

// ---------------------------------------------------------------------------
// parameters

void init_udno_params(const UdnoConfig& cfg, const std::string& prefix, Philox& rng, ParamTree& params) {
  cfg.validate();
  udno_leaf_shapes(cfg, prefix, [&](const std::string& name, std::size_t n, double bound) {
    std::vector<double> v(n, 0.0);
    if (bound > 0.0)
      for (double& x : v) x = rng.uniform(-bound, bound);
    params.set(name, std::move(v));
  });
}

void zero_udno_params(const UdnoConfig& cfg, const std::string& prefix, ParamTree& params) {
  udno_leaf_shapes(cfg, prefix,
                   [&](const std::string& name, std::size_t n, double) { params.set(name, std::vector<double>(n, 0.0)); });
}

double dc_operator_norm(const ProjectorConfig& proj, std::size_t iterations) {
  proj.validate();
  Philox rng(0x5eed);
  std::vector<double> v(proj.image_size());
  for (double& x : v) x = rng.normal();
  std::vector<double> sino(proj.sinogram_size());
  std::vector<double> w(v.size());
  const double s = dc_scale(proj);
  double lambda = 0.0;
  for (std::size_t it = 0; it < iterations; ++it) {
    double n = 0.0;
    for (double x : v) n += x * x;
    n = std::sqrt(n);
    for (double& x : v) x /= n;
    forward_values(proj, v, sino);
    adjoint_values(proj, sino, w);
    lambda = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
      w[i] *= s;
      lambda += v[i] * w[i];
    }
    v.swap(w);
  }
  return lambda;
}

CtoModel init_model(const CtoConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  CtoModel m;
  m.config = cfg;
  if (m.config.dcNorm == 0.0) m.config.dcNorm = dc_operator_norm(cfg.projector(cfg.max_views()));
  Philox root(seed);
  Philox rs = root.split(1);
  init_udno_params(cfg.nos_spatial(), "nos_spatial", rs, m.params);
  Philox rf = root.split(2);
  init_udno_params(cfg.nos_freq(), "nos_freq", rf, m.params);
  for (std::size_t t = 0; t < cfg.cascades; ++t) {
    Philox ri = root.split(10 + t);
    init_udno_params(cfg.noi(), "noi" + std::to_string(t), ri, m.params);
    m.params.set("cascade" + std::to_string(t) + "/eta", {cfg.etaInit});
    m.params.set("cascade" + std::to_string(t) + "/lambda", {cfg.lambdaInit});
  }
  return m;
}

// ---------------------------------------------------------------------------
// forward passes

Var udno_forward(Tape& tape, const UdnoConfig& cfg, const std::string& prefix, const ParamTree& params, Var input,
                 const UdnoRun& run) {
  cfg.validate();
  const Tensor& in = tape.value(input);
  if (in.channels != cfg.inChannels) throw std::invalid_argument("UDNO: input channel count mismatch");
  cfg.check_input(in.rows, in.cols);

  const auto layers = udno_layers(cfg);
  std::size_t li = 0;
  Var x = input;
  std::vector<Var> skips;
  for (std::size_t l = 0; l < cfg.levels; ++l) {
    x = block(tape, cfg, prefix, params, layers[li++], x, run);
    x = block(tape, cfg, prefix, params, layers[li++], x, run);
    skips.push_back(x);
    x = tape.downsample2(x, cfg.pool0, cfg.pool1);
  }
  x = block(tape, cfg, prefix, params, layers[li++], x, run);
  x = block(tape, cfg, prefix, params, layers[li++], x, run);
  for (std::size_t l = cfg.levels; l-- > 0;) {
    x = tape.upsample2(x, cfg.pool0, cfg.pool1);
    x = tape.add(x, skips[l]);
    x = block(tape, cfg, prefix, params, layers[li++], x, run);
    x = block(tape, cfg, prefix, params, layers[li++], x, run);
  }
  return tape.channel_mix(x, leaf(tape, params, prefix + "/out/w"), leaf(tape, params, prefix + "/out/b"),
                          cfg.outChannels);
}

Tensor udno_forward(const UdnoConfig& cfg, const std::string& prefix, const ParamTree& params, const Tensor& input) {
  Tape tape;
  return tape.value(udno_forward(tape, cfg, prefix, params, tape.constant(input)));
}

Var nos_forward(Tape& tape, const CtoConfig& cfg, const ParamTree& params, Var sino) {
  const Tensor& s = tape.value(sino);
  if (s.channels != 1 || s.cols != cfg.detCount) throw std::invalid_argument("NO_s: sinogram shape mismatch");
  Var spatial = udno_forward(tape, cfg.nos_spatial(), "nos_spatial", params, sino);
  auto dft = cached_dft(cfg.detCount);
  Var spec = tape.fft_r(sino, dft);
  Var freq = tape.ifft_r(udno_forward(tape, cfg.nos_freq(), "nos_freq", params, spec), dft);
  Var mean = tape.scale(tape.add(spatial, freq), 0.5);
  return cfg.nosResidual ? tape.add(sino, mean) : mean;
}

Sinogram nos_forward(const CtoModel& model, const Sinogram& sino) {
  Tape tape;
  Var out = nos_forward(tape, model.config, model.params, tape.constant(sino_tensor(sino)));
  return Sinogram(sino.angleSet, sino.detCount, sino.detSpacing, tape.value(out).data);
}

double dc_scale(const ProjectorConfig& proj) { return 1.0 / (proj.spacing * proj.spacing); }

Var cascade_step(Tape& tape, const CtoConfig& cfg, const ParamTree& params, std::size_t t, Var x, Var sinoSub,
                 const std::shared_ptr<const ProjectorConfig>& proj, const UdnoRun& run) {
  if (t >= cfg.cascades) throw std::invalid_argument("cascade index out of range");
  const Tensor& xv = tape.value(x);
  const Tensor& sv = tape.value(sinoSub);
  if (xv.channels != 1 || xv.rows != proj->height || xv.cols != proj->width)
    throw std::invalid_argument("cascade: image grid does not match projector");
  if (sv.channels != 1 || sv.rows != proj->angles.size() || sv.cols != proj->detCount)
    throw std::invalid_argument("cascade: sinogram grid does not match projector");

  const std::string c = "cascade" + std::to_string(t);
  Var residual = tape.sub(tape.projector_forward(x, proj), sinoSub);
  if (!(cfg.dcNorm > 0.0)) throw std::invalid_argument("cascade: dc_norm is not set");
  Var dc = tape.scale(tape.projector_adjoint(residual, proj), dc_scale(*proj) / cfg.dcNorm);
  Var learned = udno_forward(tape, cfg.noi(), "noi" + std::to_string(t), params, x, run);
  Var y = tape.sub(x, tape.scale_by(leaf(tape, params, c + "/eta"), dc));
  return tape.add(y, tape.scale_by(leaf(tape, params, c + "/lambda"), learned));
}

Image cascade_step(const CtoModel& model, std::size_t t, const Image& x, const Sinogram& sinoSub) {
  auto proj = projector_for(model.config, sinoSub, 1);
  if (x.width != proj->width || x.height != proj->height) throw std::invalid_argument("cascade: image grid mismatch");
  Tape tape;
  Var out = cascade_step(tape, model.config, model.params, t, tape.constant(image_tensor(x)),
                         tape.constant(sino_tensor(sinoSub)), proj);
  return Image(x.width, x.height, x.spacing, tape.value(out).data);
}

namespace {

Var fbp_init(Tape& tape, const CtoConfig& cfg, const ParamTree& params, Var sinoSub,
             const std::shared_ptr<const ProjectorConfig>& proj) {
  Var p = nos_forward(tape, cfg, params, sinoSub);
  Var filtered = tape.ramp_filter(p, cached_ramp(proj->detCount, proj->detSpacing));
  return tape.scale(tape.projector_adjoint(filtered, proj), fbp_scale(*proj));
}

}  // namespace

Var cto_forward(Tape& tape, const CtoConfig& cfg, const ParamTree& params, Var sinoSub,
                const std::shared_ptr<const ProjectorConfig>& proj) {
  Var x = fbp_init(tape, cfg, params, sinoSub, proj);
  for (std::size_t t = 0; t < cfg.cascades; ++t) x = cascade_step(tape, cfg, params, t, x, sinoSub, proj);
  return x;
}

Image cto_forward(const CtoModel& model, const Sinogram& sinoSub) {
  auto proj = projector_for(model.config, sinoSub, 1);
  Tape tape;
  Var out = cto_forward(tape, model.config, model.params, tape.constant(sino_tensor(sinoSub)), proj);
  return Image(proj->width, proj->height, proj->spacing, tape.value(out).data);
}

Image infer_superres(const CtoModel& model, const Sinogram& sinoSub, std::size_t scale, bool fixedPixelSupport) {
  if (scale < 1) throw std::invalid_argument("infer_superres: scale must be >= 1");
  const CtoConfig& cfg = model.config;
  auto baseProj = projector_for(cfg, sinoSub, 1);
  Image x0;
  {
    Tape tape;
    Var x = fbp_init(tape, cfg, model.params, tape.constant(sino_tensor(sinoSub)), baseProj);
    x0 = Image(baseProj->width, baseProj->height, baseProj->spacing, tape.value(x).data);
  }
  auto fineProj = projector_for(cfg, sinoSub, scale);
  Image fine = resample_bilinear(x0, fineProj->width, fineProj->height);

  UdnoRun run;
  if (fixedPixelSupport) run.kernelPitchScale = static_cast<double>(scale);
  Tape tape;
  Var x = tape.constant(image_tensor(fine));
  Var s = tape.constant(sino_tensor(sinoSub));
  for (std::size_t t = 0; t < cfg.cascades; ++t) x = cascade_step(tape, cfg, model.params, t, x, s, fineProj, run);
  return Image(fineProj->width, fineProj->height, fineProj->spacing, tape.value(x).data);
}

// ---------------------------------------------------------------------------
// training

std::vector<Image> make_phantom_set(const CtoConfig& cfg, std::size_t count, std::uint64_t seed, std::size_t scale) {
  std::vector<Image> out;
  out.reserve(count);
  const Philox root(seed);
  for (std::size_t i = 0; i < count; ++i) {
    const auto words = root.block(i);
    const std::uint64_t s = (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
    out.push_back(rasterize(random_phantom(s), cfg.imageSize * scale, cfg.imageSize * scale,
                            cfg.spacing / static_cast<double>(scale)));
  }
  return out;
}

Sinogram simulate_sinogram(const CtoConfig& cfg, const Image& img, std::size_t views) {
  const std::size_t full = cfg.max_views();
  ProjectorConfig proj = cfg.projector(full);
  proj.width = img.width;
  proj.height = img.height;
  proj.spacing = img.spacing;
  const Sinogram s = forward(proj, img);
  return apply_mask(s, SampleMask::uniform_stride(full, views));
}

TrainHistory train(CtoModel& model, const std::vector<Image>& trainSet, const std::vector<Image>& valSet,
                   const TrainConfig& cfg, const TrainCallback& onEpoch) {
  if (trainSet.empty()) throw std::invalid_argument("train: dataset is empty");
  const CtoConfig& mc = model.config;
  mc.validate();
  for (const Image& img : trainSet)
    if (img.width != mc.imageSize || img.height != mc.imageSize)
      throw std::invalid_argument("train: phantom size does not match the model grid");

  // Sinograms are fixed per (phantom, views); compute them once.
  std::map<std::pair<std::size_t, std::size_t>, Sinogram> sinoCache;
  auto sinogram_for = [&](const std::vector<Image>& set, std::size_t offset, std::size_t idx, std::size_t views) {
    auto key = std::make_pair(offset + idx, views);
    auto it = sinoCache.find(key);
    if (it == sinoCache.end()) it = sinoCache.emplace(key, simulate_sinogram(mc, set[idx], views)).first;
    return it->second;
  };
  std::map<std::size_t, std::shared_ptr<const ProjectorConfig>> projs;
  for (std::size_t v : mc.viewLadder) projs[v] = std::make_shared<ProjectorConfig>(mc.projector(v));

  Philox rng = Philox(cfg.seed).split(0x7a11);
  AdamState state;
  const AdamConfig adam{cfg.lr, 0.9, 0.999, 1e-8};
  TrainHistory history;
  std::size_t sparsest = mc.viewLadder.front();
  for (std::size_t v : mc.viewLadder) sparsest = std::min(sparsest, v);

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    double lossSum = 0.0;
    for (std::size_t step = 0; step < cfg.stepsPerEpoch; ++step) {
      const std::size_t idx = rng.below(trainSet.size());
      const std::size_t views = mc.viewLadder[rng.below(mc.viewLadder.size())];
      Sinogram sino = sinogram_for(trainSet, 0, idx, views);
      if (cfg.noiseSigma > 0.0) sino = add_gaussian_noise(sino, cfg.noiseSigma, rng.below(~std::uint64_t{0}));

      Tape tape;
      Var out = cto_forward(tape, mc, model.params, tape.constant(sino_tensor(sino)), projs.at(views));
      Var loss = tape.mse_loss(out, tape.constant(image_tensor(trainSet[idx])));
      const double l = tape.value(loss).data[0];
      history.stepLoss.push_back(l);
      lossSum += l;
      adam_step(model.params, tape.grad(loss), state, adam);
    }

    EpochRecord rec;
    rec.epoch = epoch + 1;
    rec.trainLoss = cfg.stepsPerEpoch ? lossSum / static_cast<double>(cfg.stepsPerEpoch) : 0.0;
    if (!valSet.empty()) {
      double total = 0.0;
      for (std::size_t i = 0; i < valSet.size(); ++i) {
        const Sinogram s = sinogram_for(valSet, trainSet.size(), i, sparsest);
        total += psnr(cto_forward(model, s), valSet[i]).db;
      }
      rec.valPsnr = total / static_cast<double>(valSet.size());
    }
    history.epochs.push_back(rec);
    if (onEpoch) onEpoch(rec);
  }
  return history;
}

// ---------------------------------------------------------------------------
// serialization

void save_model(const std::filesystem::path& path, const CtoModel& model) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  os.write(kModelMagic, 4);
  binio::put<std::uint32_t>(os, kModelVersion);
  const std::string text = model.config.to_text();
  binio::put<std::uint64_t>(os, text.size());
  binio::put_bytes(os, text);
  for (const auto& [name, values] : model.params) {
    binio::put<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
    binio::put_bytes(os, name);
    binio::put<std::uint64_t>(os, values.size());
    for (double v : values) binio::put<double>(os, v);
  }
  os.flush();
  if (!os) throw std::runtime_error("write failed for " + path.string());
}

CtoModel load_model(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  const auto fileSize = static_cast<std::uint64_t>(std::filesystem::file_size(path));
  const std::string magic = binio::get_bytes(is, 4, "magic");
  if (magic != std::string(kModelMagic, 4)) throw FormatError("not a model file (bad magic)");
  const auto version = binio::get<std::uint32_t>(is, "version");
  if (version != kModelVersion)
    throw FormatError("unsupported model file version " + std::to_string(version));
  const auto textLen = binio::get<std::uint64_t>(is, "config length");
  if (textLen > fileSize) throw FormatError("model config block truncated");
  const std::string text = binio::get_bytes(is, static_cast<std::size_t>(textLen), "config");

  CtoModel m;
  try {
    m.config = CtoConfig::from_text(text);
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("corrupt model config: ") + e.what());
  }

  ParamTree loaded;
  while (is.peek() != std::char_traits<char>::eof()) {
    const auto nameLen = binio::get<std::uint32_t>(is, "leaf name length");
    if (nameLen > fileSize) throw FormatError("leaf name truncated");
    const std::string name = binio::get_bytes(is, nameLen, "leaf name");
    const auto count = binio::get<std::uint64_t>(is, "leaf size");
    if (count > fileSize / sizeof(double)) throw FormatError("leaf payload truncated");
    std::vector<double> values(static_cast<std::size_t>(count));
    for (double& v : values) v = binio::get<double>(is, "leaf values");
    if (loaded.contains(name)) throw FormatError("duplicate leaf '" + name + "'");
    loaded.set(name, std::move(values));
  }

  // The leaf set must be exactly the one the config implies.
  ParamTree expected;
  zero_udno_params(m.config.nos_spatial(), "nos_spatial", expected);
  zero_udno_params(m.config.nos_freq(), "nos_freq", expected);
  for (std::size_t t = 0; t < m.config.cascades; ++t) {
    zero_udno_params(m.config.noi(), "noi" + std::to_string(t), expected);
    expected.set("cascade" + std::to_string(t) + "/eta", {0.0});
    expected.set("cascade" + std::to_string(t) + "/lambda", {0.0});
  }
  if (expected.leaf_count() != loaded.leaf_count()) throw FormatError("model leaf set does not match its config");
  for (const auto& [name, values] : expected) {
    if (!loaded.contains(name)) throw FormatError("model is missing leaf '" + name + "'");
    if (loaded.at(name).size() != values.size()) throw FormatError("leaf '" + name + "' has the wrong size");
  }
  m.params = std::move(loaded);
  return m;
}

}  // namespace ctorecon

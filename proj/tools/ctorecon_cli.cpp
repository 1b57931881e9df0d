// ctorecon command-line front end.
//
// Exit codes: 0 success, 1 verification failed, 2 usage or validation error,
// 3 runtime or format error.

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numbers>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ctorecon/classical.hpp"
#include "ctorecon/core.hpp"
#include "ctorecon/grid_io.hpp"
#include "ctorecon/metrics.hpp"
#include "ctorecon/model.hpp"
#include "ctorecon/parallel.hpp"
#include "ctorecon/phantom.hpp"
#include "ctorecon/projector.hpp"
#include "ctorecon/verify.hpp"

namespace fs = std::filesystem;
using namespace ctorecon;

namespace {

constexpr int kExitVerifyFailed = 1;
constexpr int kExitUsage = 2;
constexpr int kExitRuntime = 3;

/// Thrown for option combinations CLI11 cannot express.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

double parse_period(const std::string& s) {
  if (s == "pi") return std::numbers::pi;
  if (s == "2pi") return 2.0 * std::numbers::pi;
  throw std::invalid_argument("period must be 'pi' or '2pi', got '" + s + "'");
}

void log_kv(const std::string& key, const std::string& value) { std::cout << key << "=" << value << "\n"; }
void log_kv(const std::string& key, double value) {
  std::ostringstream os;
  os << std::setprecision(17) << value;
  log_kv(key, os.str());
}

std::pair<double, double> value_range(const std::vector<double>& v) {
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  return {*lo, *hi};
}

// ---------------------------------------------------------------------------
// phantom

struct PhantomArgs {
  std::string spec;
  std::size_t size = 256;
  double spacing = 0.0;
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_phantom(const PhantomArgs& a) {
  if (a.size == 0) throw std::invalid_argument("--size must be > 0");
  const double spacing = a.spacing > 0.0 ? a.spacing : 2.0 / static_cast<double>(a.size);
  PhantomSpec spec;
  if (a.spec == "shepp-logan")
    spec = shepp_logan();
  else if (a.spec == "disk")
    spec = disk(0.8, 1.0);
  else if (a.spec == "random")
    spec = random_phantom(a.seed);
  else
    spec = read_phantom_spec(a.spec);
  log_kv("command", "phantom");
  log_kv("spec", a.spec);
  log_kv("size", static_cast<double>(a.size));
  log_kv("spacing", spacing);
  if (a.spec == "random") log_kv("seed", static_cast<double>(a.seed));
  const Image img = rasterize(spec, a.size, a.size, spacing);
  write_grid_file(a.out, img);
  const auto [lo, hi] = value_range(img.values);
  std::cout << "image " << img.width << "x" << img.height << " range [" << lo << ", " << hi << "] -> " << a.out << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// project

struct ProjectArgs {
  std::string in;
  std::size_t views = 720;
  std::size_t detectors = 300;
  double detSpacing = 0.0;
  std::string period = "pi";
  std::string analytic;
  double noiseSigma = 0.0;
  std::uint64_t seed = 0;
  double stepFraction = 0.5;
  std::string out;
};

int cmd_project(const ProjectArgs& a) {
  const Image img = read_image_file(a.in);
  if (a.views == 0) throw std::invalid_argument("--views must be > 0");
  if (a.detectors == 0) throw std::invalid_argument("--detectors must be > 0");
  if (a.noiseSigma < 0.0) throw std::invalid_argument("--noise-sigma must be >= 0");
  const double detSpacing = a.detSpacing > 0.0 ? a.detSpacing : img.spacing;
  const AngleSet angles = AngleSet::make_uniform(a.views, parse_period(a.period));
  log_kv("command", "project");
  log_kv("in", a.in);
  log_kv("views", static_cast<double>(a.views));
  log_kv("detectors", static_cast<double>(a.detectors));
  log_kv("det_spacing", detSpacing);
  log_kv("period", a.period);
  log_kv("step_fraction", a.stepFraction);
  log_kv("analytic", a.analytic.empty() ? "none" : a.analytic);
  log_kv("noise_sigma", a.noiseSigma);
  log_kv("seed", static_cast<double>(a.seed));
  Sinogram sino;
  if (!a.analytic.empty()) {
    sino = analytic_sinogram(read_phantom_spec(a.analytic), angles, a.detectors, detSpacing);
  } else {
    const ProjectorConfig cfg = ProjectorConfig::for_image(img, angles, a.detectors, detSpacing, a.stepFraction);
    sino = forward(cfg, img);
  }
  if (a.noiseSigma > 0.0) sino = add_gaussian_noise(sino, a.noiseSigma, a.seed);
  write_grid_file(a.out, sino);
  std::cout << "sinogram " << sino.views() << "x" << sino.detCount << " -> " << a.out << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// subsample

int cmd_subsample(const std::string& in, std::size_t views, const std::string& out) {
  const Sinogram full = read_sinogram_file(in);
  const SampleMask mask = SampleMask::uniform_stride(full.views(), views);
  log_kv("command", "subsample");
  log_kv("in", in);
  log_kv("views", static_cast<double>(views));
  log_kv("stride", static_cast<double>(full.views() / views));
  write_grid_file(out, apply_mask(full, mask));
  std::cout << "kept " << views << " of " << full.views() << " views -> " << out << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// recon

struct ReconArgs {
  std::string method = "fbp";
  std::string in;
  std::string model;
  std::size_t size = 0;
  double spacing = 0.0;
  std::string out;
  std::string filter = "ramp";
  std::size_t padFactor = 2;
  SartConfig sart;
  std::size_t scale = 1;
  bool fixedPixelSupport = false;
};

int cmd_recon(const ReconArgs& a) {
  const Sinogram sino = read_sinogram_file(a.in);
  log_kv("command", "recon");
  log_kv("method", a.method);
  log_kv("in", a.in);
  Image result;
  if (a.method == "cto") {
    if (a.model.empty()) throw UsageError("--method cto requires --model");
    const CtoModel model = load_model(a.model);
    if (a.scale == 0) throw std::invalid_argument("--scale must be >= 1");
    log_kv("model", a.model);
    log_kv("scale", static_cast<double>(a.scale));
    log_kv("fixed_pixel_support", a.fixedPixelSupport ? "true" : "false");
    std::istringstream cfg(model.config.to_text());
    for (std::string line; std::getline(cfg, line);) std::cout << "model." << line << "\n";
    const std::size_t expected = model.config.imageSize * a.scale;
    if (a.size != 0 && a.size != expected)
      throw std::invalid_argument("--size " + std::to_string(a.size) + " does not match the model grid " +
                                  std::to_string(expected));
    result = a.scale == 1 && !a.fixedPixelSupport ? cto_forward(model, sino)
                                                  : infer_superres(model, sino, a.scale, a.fixedPixelSupport);
  } else if (a.method == "fbp" || a.method == "sart") {
    if (a.size == 0) throw std::invalid_argument("--size must be > 0");
    const double spacing = a.spacing > 0.0 ? a.spacing : 2.0 / static_cast<double>(a.size);
    const ProjectorConfig proj = ProjectorConfig{a.size, a.size, spacing, sino.detCount, sino.detSpacing, sino.angleSet, 0.5};
    log_kv("size", static_cast<double>(a.size));
    log_kv("spacing", spacing);
    if (a.method == "fbp") {
      FbpConfig cfg;
      if (a.filter == "ramp")
        cfg.filter = FbpFilter::Ramp;
      else if (a.filter == "none")
        cfg.filter = FbpFilter::None;
      else
        throw std::invalid_argument("--filter must be ramp or none");
      cfg.padFactor = a.padFactor;
      log_kv("filter", a.filter);
      log_kv("pad_factor", static_cast<double>(a.padFactor));
      result = fbp(cfg, proj, sino);
    } else {
      a.sart.validate();
      std::cout << "iterations=" << a.sart.iterations << " relaxation=" << a.sart.relaxation << " clip=["
                << a.sart.clipMin << "," << a.sart.clipMax << "]\n";
      std::vector<double> residuals;
      result = sart(a.sart, proj, sino, std::nullopt, &residuals);
      for (std::size_t k = 0; k < residuals.size(); ++k)
        std::cout << "sweep " << k + 1 << " residual=" << std::setprecision(10) << residuals[k] << "\n";
    }
  } else {
    throw std::invalid_argument("--method must be fbp, sart or cto");
  }
  write_grid_file(a.out, result);
  const auto [lo, hi] = value_range(result.values);
  std::cout << "image " << result.width << "x" << result.height << " range [" << lo << ", " << hi << "] -> " << a.out
            << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// train

/// Training keys that may appear in the config file next to the model keys.
struct TrainFileKeys {
  std::optional<std::size_t> stepsPerEpoch;
  std::optional<double> lr;
  std::optional<double> noiseSigma;
  std::optional<std::size_t> valCount;
};

std::pair<std::string, TrainFileKeys> split_train_keys(const std::string& text) {
  std::istringstream in(text);
  std::ostringstream model;
  TrainFileKeys keys;
  for (std::string line; std::getline(in, line);) {
    const auto eq = line.find('=');
    std::string key = eq == std::string::npos ? "" : line.substr(0, eq);
    key.erase(0, key.find_first_not_of(" \t"));
    key.erase(key.find_last_not_of(" \t") + 1);
    std::string value = eq == std::string::npos ? "" : line.substr(eq + 1);
    value.erase(0, value.find_first_not_of(" \t"));
    value.erase(value.find_last_not_of(" \t\r") + 1);
    try {
      if (key == "steps_per_epoch") {
        keys.stepsPerEpoch = std::stoull(value);
        continue;
      }
      if (key == "lr") {
        keys.lr = std::stod(value);
        continue;
      }
      if (key == "noise_sigma") {
        keys.noiseSigma = std::stod(value);
        continue;
      }
      if (key == "val_count") {
        keys.valCount = std::stoull(value);
        continue;
      }
    } catch (const std::logic_error&) {
      throw std::invalid_argument("config: bad value for " + key + ": '" + value + "'");
    }
    model << line << "\n";
  }
  return {model.str(), keys};
}

struct TrainArgs {
  std::string config;
  std::string dataDir;
  std::size_t epochs = 20;
  std::uint64_t seed = 0;
  std::string out;
  std::string history;
  std::optional<std::size_t> stepsPerEpoch;
  std::optional<double> lr;
};

int cmd_train(const TrainArgs& a) {
  CtoConfig cfg = CtoConfig::mini();
  TrainFileKeys fileKeys;
  if (!a.config.empty()) {
    std::ifstream in(a.config);
    if (!in) throw std::invalid_argument("cannot read config " + a.config);
    std::stringstream ss;
    ss << in.rdbuf();
    auto [modelText, keys] = split_train_keys(ss.str());
    cfg = CtoConfig::from_text(modelText);
    fileKeys = keys;
  }
  TrainConfig tc;
  tc.epochs = a.epochs;
  tc.seed = a.seed;
  if (fileKeys.stepsPerEpoch) tc.stepsPerEpoch = *fileKeys.stepsPerEpoch;
  if (fileKeys.lr) tc.lr = *fileKeys.lr;
  if (fileKeys.noiseSigma) tc.noiseSigma = *fileKeys.noiseSigma;
  if (fileKeys.valCount) tc.valCount = *fileKeys.valCount;
  if (a.stepsPerEpoch) tc.stepsPerEpoch = *a.stepsPerEpoch;
  if (a.lr) tc.lr = *a.lr;
  if (tc.lr < 0.0) throw std::invalid_argument("lr must be >= 0");

  if (!fs::is_directory(a.dataDir)) throw std::invalid_argument("--data-dir is not a directory: " + a.dataDir);
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(a.dataDir))
    if (entry.is_regular_file()) files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  std::vector<Image> images;
  for (const auto& f : files) {
    Image img = read_image_file(f);
    if (img.width != cfg.imageSize || img.height != cfg.imageSize)
      throw std::invalid_argument(f.string() + ": expected " + std::to_string(cfg.imageSize) + "x" +
                                  std::to_string(cfg.imageSize) + " image");
    images.push_back(std::move(img));
  }
  if (images.size() <= tc.valCount)
    throw std::invalid_argument("--data-dir needs more than val_count = " + std::to_string(tc.valCount) + " images");
  // The last val_count files (in name order) are held out.
  const std::vector<Image> val(images.end() - static_cast<long>(tc.valCount), images.end());
  images.resize(images.size() - tc.valCount);

  CtoModel model = init_model(cfg, a.seed);
  log_kv("command", "train");
  std::istringstream cfgText(model.config.to_text());
  for (std::string line; std::getline(cfgText, line);) std::cout << "model." << line << "\n";
  log_kv("train.epochs", static_cast<double>(tc.epochs));
  log_kv("train.steps_per_epoch", static_cast<double>(tc.stepsPerEpoch));
  log_kv("train.lr", tc.lr);
  log_kv("train.noise_sigma", tc.noiseSigma);
  log_kv("train.val_count", static_cast<double>(tc.valCount));
  log_kv("train.seed", static_cast<double>(tc.seed));
  log_kv("train.images", static_cast<double>(images.size()));

  const std::string historyPath = a.history.empty() ? a.out + ".history" : a.history;
  std::ofstream hist(historyPath, std::ios::trunc);
  if (!hist) throw std::runtime_error("cannot open " + historyPath);
  hist << "# epoch train_loss val_psnr\n" << std::setprecision(17);
  train(model, images, val, tc, [&](const EpochRecord& r) {
    hist << r.epoch << " " << r.trainLoss << " " << r.valPsnr << "\n";
    hist.flush();
    std::cout << "epoch " << r.epoch << " loss=" << std::setprecision(8) << r.trainLoss << " val_psnr=" << r.valPsnr
              << "\n";
  });
  save_model(a.out, model);
  std::cout << "model -> " << a.out << ", history -> " << historyPath << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// verify

int cmd_verify(const std::string& suite, const std::string& reportPath) {
  if (suite != "all" && std::find(verify::suite_names().begin(), verify::suite_names().end(), suite) ==
                            verify::suite_names().end())
    throw std::invalid_argument("unknown suite '" + suite + "'");
  log_kv("command", "verify");
  log_kv("suite", suite);
  const auto reports = verify::run_suites(suite);
  verify::write_report(std::cout, reports);
  if (!reportPath.empty()) {
    std::ofstream os(reportPath, std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open " + reportPath);
    verify::write_report(os, reports);
  }
  const bool ok = std::all_of(reports.begin(), reports.end(), [](const auto& r) { return r.passed(); });
  return ok ? 0 : kExitVerifyFailed;
}

// ---------------------------------------------------------------------------
// metrics

struct MetricsArgs {
  std::string test;
  std::string ref;
  std::optional<double> muWater;
  std::string unit;
  std::optional<double> peak;
  std::string out;
  std::string kv;
};

int cmd_metrics(const MetricsArgs& a) {
  double mu = 0.0;
  if (a.unit == "mm")
    mu = kMuWaterPerMm;
  else if (a.unit == "cm")
    mu = kMuWaterPerCm;
  else
    throw std::invalid_argument("--unit must be mm or cm");
  if (a.muWater) mu = *a.muWater;

  std::vector<std::pair<std::string, std::pair<fs::path, fs::path>>> pairs;
  if (fs::is_directory(a.test)) {
    if (!fs::is_directory(a.ref)) throw std::invalid_argument("--ref must be a directory when --test is");
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(a.test))
      if (e.is_regular_file()) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      const fs::path r = fs::path(a.ref) / f.filename();
      if (!fs::exists(r)) throw std::invalid_argument("no reference for " + f.filename().string());
      pairs.push_back({f.filename().string(), {f, r}});
    }
    if (pairs.empty()) throw std::invalid_argument("--test directory has no files");
  } else {
    pairs.push_back({fs::path(a.test).filename().string(), {a.test, a.ref}});
  }

  log_kv("command", "metrics");
  log_kv("unit", a.unit);
  log_kv("mu_water", mu);
  log_kv("peak", a.peak ? std::to_string(*a.peak) : std::string("reference max"));
  std::vector<std::string> names;
  std::vector<MetricSample> samples;
  for (const auto& [name, files] : pairs) {
    const Image t = read_image_file(files.first);
    const Image r = read_image_file(files.second);
    const double peak = a.peak ? *a.peak : *std::max_element(r.values.begin(), r.values.end());
    names.push_back(name);
    samples.push_back(evaluate(t, r, mu, peak));
  }
  const MetricReport report = make_report(names, samples);
  write_report_text(std::cout, report);
  std::ofstream os(a.out, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open " + a.out);
  write_report_text(os, report);
  const std::string kvPath = a.kv.empty() ? a.out + ".kv" : a.kv;
  std::ofstream kvs(kvPath, std::ios::trunc);
  if (!kvs) throw std::runtime_error("cannot open " + kvPath);
  write_report_kv(kvs, report);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ctorecon: sparse-view CT reconstruction toolkit"};
  app.require_subcommand(1);
  std::size_t threads = thread_count();
  app.add_option("--threads", threads, "worker threads (default: CTO_THREADS or 1)")->check(CLI::PositiveNumber);

  PhantomArgs ph;
  auto* phantom = app.add_subcommand("phantom", "rasterise a phantom");
  phantom->add_option("--spec", ph.spec, "shepp-logan | disk | random | <spec file>")->required();
  phantom->add_option("--size", ph.size, "grid size N (N x N)");
  phantom->add_option("--spacing", ph.spacing, "pixel spacing (default 2/N)");
  phantom->add_option("--seed", ph.seed, "seed for --spec random");
  phantom->add_option("--out", ph.out, "output grid file")->required();

  ProjectArgs pr;
  auto* project = app.add_subcommand("project", "forward-project an image");
  project->add_option("--in", pr.in, "input image grid")->required();
  project->add_option("--views", pr.views, "number of views");
  project->add_option("--detectors", pr.detectors, "detector count");
  project->add_option("--det-spacing", pr.detSpacing, "detector pitch (default: image spacing)");
  project->add_option("--period", pr.period, "angular range: pi | 2pi");
  project->add_option("--analytic", pr.analytic, "phantom spec file for an analytic sinogram");
  project->add_option("--noise-sigma", pr.noiseSigma, "additive Gaussian noise level");
  project->add_option("--seed", pr.seed, "noise seed");
  project->add_option("--step-fraction", pr.stepFraction, "ray step as a fraction of the pixel spacing");
  project->add_option("--out", pr.out, "output sinogram grid")->required();

  std::string subIn, subOut;
  std::size_t subViews = 0;
  auto* subsample = app.add_subcommand("subsample", "keep a uniform subset of views");
  subsample->add_option("--in", subIn, "input sinogram")->required();
  subsample->add_option("--views", subViews, "views to keep (must divide the input count)")->required();
  subsample->add_option("--out", subOut, "output sinogram")->required();

  ReconArgs rc;
  auto* recon = app.add_subcommand("recon", "reconstruct an image");
  recon->add_option("--method", rc.method, "fbp | sart | cto");
  recon->add_option("--in", rc.in, "input sinogram")->required();
  recon->add_option("--model", rc.model, "model file (cto)");
  recon->add_option("--size", rc.size, "output grid size N");
  recon->add_option("--spacing", rc.spacing, "pixel spacing (default 2/N)");
  recon->add_option("--out", rc.out, "output image grid")->required();
  recon->add_option("--filter", rc.filter, "fbp filter: ramp | none");
  recon->add_option("--pad-factor", rc.padFactor, "fbp zero-pad multiple");
  recon->add_option("--iterations", rc.sart.iterations, "sart sweeps");
  recon->add_option("--relaxation", rc.sart.relaxation, "sart relaxation");
  recon->add_option("--clip-min", rc.sart.clipMin, "sart lower clip");
  recon->add_option("--clip-max", rc.sart.clipMax, "sart upper clip");
  recon->add_option("--scale", rc.scale, "cto super-resolution factor");
  recon->add_flag("--fixed-pixel-support", rc.fixedPixelSupport, "cto: keep kernel pixel support when upscaling");

  TrainArgs tr;
  auto* trainCmd = app.add_subcommand("train", "train a CTO model");
  trainCmd->add_option("--config", tr.config, "config file (model and training keys)");
  trainCmd->add_option("--data-dir", tr.dataDir, "directory of phantom image grids")->required();
  trainCmd->add_option("--epochs", tr.epochs, "epochs");
  trainCmd->add_option("--seed", tr.seed, "seed");
  trainCmd->add_option("--steps-per-epoch", tr.stepsPerEpoch, "Adam steps per epoch");
  trainCmd->add_option("--lr", tr.lr, "Adam learning rate");
  trainCmd->add_option("--history", tr.history, "history file (default: <out>.history)");
  trainCmd->add_option("--out", tr.out, "output model file")->required();

  std::string suite = "all", reportPath;
  auto* verifyCmd = app.add_subcommand("verify", "run the property suites");
  verifyCmd->add_option("--suite", suite, "adjoint | equivariance | slice | disco | gradcheck | all");
  verifyCmd->add_option("--report", reportPath, "report file");

  MetricsArgs mt;
  auto* metrics = app.add_subcommand("metrics", "image-quality metrics");
  metrics->add_option("--test", mt.test, "test image grid or directory")->required();
  metrics->add_option("--ref", mt.ref, "reference image grid or directory")->required();
  metrics->add_option("--mu-water", mt.muWater, "water attenuation (default 0.0192/mm or 0.192/cm)");
  metrics->add_option("--unit", mt.unit, "attenuation unit: mm | cm")->required();
  metrics->add_option("--peak", mt.peak, "PSNR peak (default: reference maximum)");
  metrics->add_option("--out", mt.out, "text report")->required();
  metrics->add_option("--kv", mt.kv, "key-value report (default: <out>.kv)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    set_thread_count(threads);
    std::cout << "threads=" << threads << "\n";
    if (phantom->parsed()) return cmd_phantom(ph);
    if (project->parsed()) return cmd_project(pr);
    if (subsample->parsed()) return cmd_subsample(subIn, subViews, subOut);
    if (recon->parsed()) return cmd_recon(rc);
    if (trainCmd->parsed()) return cmd_train(tr);
    if (verifyCmd->parsed()) return cmd_verify(suite, reportPath);
    if (metrics->parsed()) return cmd_metrics(mt);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid argument: " << e.what() << "\n";
    return kExitUsage;
  } catch (const FormatError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}

#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>

#include "ctorecon/grid_io.hpp"
#include "ctorecon/metrics.hpp"
#include "ctorecon/model.hpp"
#include "ctorecon/phantom.hpp"

namespace fs = std::filesystem;
using namespace ctorecon;

namespace {

// Reference run: disk phantom at 128x128, 720 views x 300 detectors, ramp FBP.
constexpr double kGoldenDiskFbpDb = 28.5394;

const fs::path& workdir() {
  static const fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / "ctorecon_cli_test";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string at(const std::string& name) { return (workdir() / name).string(); }

struct Result {
  int code = -1;
  std::string out;
};

Result run(const std::string& args, const std::string& env = "") {
  const std::string log = at("last.log");
  const std::string cmd = env + " " + CTORECON_CLI_PATH + " " + args + " > " + log + " 2>&1";
  const int status = std::system(cmd.c_str());
  Result r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream in(log);
  r.out.assign(std::istreambuf_iterator<char>(in), {});
  return r;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST(CliPhantom, WritesGrid) {
  const Result r = run("phantom --spec shepp-logan --size 64 --out " + at("sl64.ctog"));
  ASSERT_EQ(r.code, 0) << r.out;
  const Image img = read_image_file(at("sl64.ctog"));
  EXPECT_EQ(img.width, 64u);
  EXPECT_NE(r.out.find("range"), std::string::npos);
}

TEST(CliPhantom, UsageErrors) {
  EXPECT_EQ(run("phantom --spec shepp-logan --size 64").code, 2);
  EXPECT_EQ(run("phantom --spec shepp-logan --size 0 --out " + at("x.ctog")).code, 2);
  EXPECT_EQ(run("nonsense").code, 2);
  EXPECT_EQ(run("--help").code, 0);
}

TEST(CliPhantom, SpecFileAndMissingFile) {
  std::ofstream(at("blob.txt")) << "# x0 y0 a b alpha rho\n0.1 0 0.3 0.2 0.5 1.0\n";
  EXPECT_EQ(run("phantom --spec " + at("blob.txt") + " --size 32 --out " + at("blob.ctog")).code, 0);
  EXPECT_EQ(run("phantom --spec " + at("missing.txt") + " --size 32 --out " + at("blob.ctog")).code, 3);
}

TEST(CliProject, DefaultGeometry) {
  ASSERT_EQ(run("phantom --spec disk --size 128 --out " + at("disk.ctog")).code, 0);
  const Result r = run("project --in " + at("disk.ctog") + " --out " + at("disk720.ctog"));
  ASSERT_EQ(r.code, 0) << r.out;
  const Sinogram s = read_sinogram_file(at("disk720.ctog"));
  EXPECT_EQ(s.views(), 720u);
  EXPECT_EQ(s.detCount, 300u);
  EXPECT_NE(r.out.find("views=720"), std::string::npos);
}

TEST(CliProject, SingleViewAndNoiseDeterminism) {
  ASSERT_EQ(run("phantom --spec disk --size 32 --out " + at("d32.ctog")).code, 0);
  ASSERT_EQ(run("project --in " + at("d32.ctog") + " --views 1 --detectors 48 --out " + at("one.ctog")).code, 0);
  EXPECT_EQ(read_sinogram_file(at("one.ctog")).views(), 1u);
  for (const std::string sigma : {"0", "0.01"}) {
    const std::string base = "project --in " + at("d32.ctog") + " --views 12 --detectors 48 --seed 3 --noise-sigma " + sigma;
    ASSERT_EQ(run(base + " --out " + at("n1.ctog")).code, 0);
    ASSERT_EQ(run(base + " --out " + at("n2.ctog")).code, 0);
    EXPECT_EQ(slurp(at("n1.ctog")), slurp(at("n2.ctog")));
  }
}

TEST(CliProject, AnalyticSinogram) {
  std::ofstream(at("disk.txt")) << "0 0 0.5 0.5 0 1\n";
  ASSERT_EQ(run("phantom --spec disk --size 32 --out " + at("d32a.ctog")).code, 0);
  ASSERT_EQ(run("project --in " + at("d32a.ctog") + " --views 8 --detectors 48 --period 2pi --analytic " + at("disk.txt") +
                " --out " + at("an.ctog"))
                .code,
            0);
  const Sinogram s = read_sinogram_file(at("an.ctog"));
  const PhantomSpec spec = read_phantom_spec(at("disk.txt"));
  ASSERT_EQ(s.views(), 8u);
  for (std::size_t v = 0; v < s.views(); ++v)
    for (std::size_t d = 0; d < s.detCount; ++d)
      EXPECT_NEAR(s.at(v, d), analytic_projection(spec, s.angleSet.angles[v], s.r_of(d)), 1e-12);
  EXPECT_EQ(run("project --in " + at("d32a.ctog") + " --period 3pi --out " + at("x.ctog")).code, 2);
}

TEST(CliSubsample, StrideAndErrors) {
  ASSERT_EQ(run("phantom --spec disk --size 32 --out " + at("d.ctog")).code, 0);
  ASSERT_EQ(run("project --in " + at("d.ctog") + " --detectors 48 --out " + at("full.ctog")).code, 0);
  ASSERT_EQ(run("subsample --in " + at("full.ctog") + " --views 18 --out " + at("s18.ctog")).code, 0);
  const Sinogram full = read_sinogram_file(at("full.ctog"));
  const Sinogram s = read_sinogram_file(at("s18.ctog"));
  ASSERT_EQ(s.views(), 18u);
  for (std::size_t k = 0; k < 18; ++k) EXPECT_EQ(s.angleSet.angles[k], full.angleSet.angles[40 * k]);
  ASSERT_EQ(run("subsample --in " + at("full.ctog") + " --views 720 --out " + at("same.ctog")).code, 0);
  EXPECT_EQ(slurp(at("same.ctog")), slurp(at("full.ctog")));
  EXPECT_EQ(run("subsample --in " + at("full.ctog") + " --views 7 --out " + at("bad.ctog")).code, 2);
}

TEST(CliRecon, FbpMatchesGolden) {
  ASSERT_EQ(run("phantom --spec disk --size 128 --out " + at("rdisk.ctog")).code, 0);
  ASSERT_EQ(run("project --in " + at("rdisk.ctog") + " --out " + at("rdisk720.ctog")).code, 0);
  const Result r = run("recon --method fbp --in " + at("rdisk720.ctog") + " --size 128 --out " + at("rfbp.ctog"));
  ASSERT_EQ(r.code, 0) << r.out;
  const double db = psnr(read_image_file(at("rfbp.ctog")), read_image_file(at("rdisk.ctog"))).db;
  EXPECT_NEAR(db, kGoldenDiskFbpDb, 0.05);
}

TEST(CliRecon, SartLogAndCtoNeedsModel) {
  ASSERT_EQ(run("phantom --spec disk --size 32 --out " + at("sd.ctog")).code, 0);
  ASSERT_EQ(run("project --in " + at("sd.ctog") + " --views 36 --detectors 48 --out " + at("s36.ctog")).code, 0);
  const Result r = run("recon --method sart --in " + at("s36.ctog") + " --size 32 --out " + at("sart.ctog"));
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("iterations=5 relaxation=0.15 clip=[0,0.549]"), std::string::npos) << r.out;
  EXPECT_EQ(run("recon --method cto --in " + at("s36.ctog") + " --out " + at("cto.ctog")).code, 2);
  EXPECT_EQ(run("recon --method magic --in " + at("s36.ctog") + " --size 32 --out " + at("m.ctog")).code, 2);
  EXPECT_EQ(run("recon --method fbp --in " + at("sd.ctog") + " --size 32 --out " + at("m.ctog")).code, 3);
}

class CliTrain : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    fs::create_directories(at("data"));
    for (int k = 0; k < 8; ++k)
      ASSERT_EQ(run("phantom --spec random --seed " + std::to_string(k) + " --size 64 --out " + at("data/p" + std::to_string(k) + ".ctog")).code, 0);
  }
};

TEST_F(CliTrain, ZeroEpochsWritesInitialModel) {
  ASSERT_EQ(run("train --data-dir " + at("data") + " --epochs 0 --seed 4 --out " + at("m0.ctom")).code, 0);
  const CtoModel m = load_model(at("m0.ctom"));
  EXPECT_EQ(m.params, init_model(CtoConfig::mini(), 4).params);
}

TEST_F(CliTrain, SameSeedByteIdentical) {
  const std::string args = "train --data-dir " + at("data") + " --epochs 1 --steps-per-epoch 3 --seed 9 --out ";
  ASSERT_EQ(run(args + at("a.ctom") + " --history " + at("a.hist")).code, 0);
  ASSERT_EQ(run(args + at("b.ctom") + " --history " + at("b.hist")).code, 0);
  EXPECT_EQ(slurp(at("a.ctom")), slurp(at("b.ctom")));
  EXPECT_EQ(slurp(at("a.hist")), slurp(at("b.hist")));
}

TEST_F(CliTrain, ConfigFileAndLossDecreases) {
  std::ofstream(at("mini.cfg")) << "# mini model with training keys\nhidden=8\nsteps_per_epoch=50\nval_count=2\n";
  const Result r = run("train --config " + at("mini.cfg") + " --data-dir " + at("data") + " --epochs 4 --seed 1 --out " +
                       at("t.ctom") + " --history " + at("t.hist"));
  ASSERT_EQ(r.code, 0) << r.out;
  std::istringstream hist(slurp(at("t.hist")));
  std::string line;
  std::vector<double> losses;
  while (std::getline(hist, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream f(line);
    std::size_t epoch;
    double loss, val;
    f >> epoch >> loss >> val;
    losses.push_back(loss);
  }
  ASSERT_EQ(losses.size(), 4u);
  EXPECT_LT(losses.back(), losses.front());
  // Reconstruct with the trained model.
  ASSERT_EQ(run("project --in " + at("data/p0.ctog") + " --views 60 --detectors 96 --out " + at("p60.ctog")).code, 0);
  ASSERT_EQ(run("subsample --in " + at("p60.ctog") + " --views 15 --out " + at("p15.ctog")).code, 0);
  const Result rc = run("recon --method cto --model " + at("t.ctom") + " --in " + at("p15.ctog") + " --out " + at("c.ctog"));
  ASSERT_EQ(rc.code, 0) << rc.out;
  EXPECT_EQ(read_image_file(at("c.ctog")).width, 64u);
}

TEST_F(CliTrain, BadInputs) {
  EXPECT_EQ(run("train --data-dir " + at("nope") + " --out " + at("x.ctom")).code, 2);
  std::ofstream(at("bad.cfg")) << "hidden=eight\n";
  EXPECT_EQ(run("train --config " + at("bad.cfg") + " --data-dir " + at("data") + " --out " + at("x.ctom")).code, 2);
}

TEST(CliVerify, AdjointSuitePassesAndWritesReport) {
  const Result r = run("verify --suite adjoint --report " + at("adj.txt"));
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_NE(slurp(at("adj.txt")).find("PASS"), std::string::npos);
  EXPECT_EQ(run("verify --suite nonsense").code, 2);
}

TEST(CliVerify, AllSuitesPass) {
  const Result r = run("verify --suite all --report " + at("all.txt"));
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_EQ(slurp(at("all.txt")).find("FAIL"), std::string::npos);
}

TEST(CliMetrics, IdenticalInputs) {
  ASSERT_EQ(run("phantom --spec shepp-logan --size 32 --out " + at("m.ctog")).code, 0);
  const Result r = run("metrics --test " + at("m.ctog") + " --ref " + at("m.ctog") + " --unit cm --out " + at("rep.txt"));
  ASSERT_EQ(r.code, 0) << r.out;
  const std::string kv = slurp(at("rep.txt.kv"));
  EXPECT_NE(kv.find("psnr 99 0 1"), std::string::npos) << kv;
  EXPECT_NE(kv.find("ssim 1 0 1"), std::string::npos) << kv;
  EXPECT_NE(kv.find("rmseHU 0 0 1"), std::string::npos) << kv;
}

TEST(CliMetrics, UnitIsRequired) {
  ASSERT_EQ(run("phantom --spec shepp-logan --size 32 --out " + at("m2.ctog")).code, 0);
  EXPECT_EQ(run("metrics --test " + at("m2.ctog") + " --ref " + at("m2.ctog") + " --out " + at("r.txt")).code, 2);
}

TEST(CliMetrics, BatchDirectory) {
  fs::create_directories(at("test")), fs::create_directories(at("ref"));
  for (int k = 0; k < 3; ++k) {
    const std::string n = "/i" + std::to_string(k) + ".ctog";
    ASSERT_EQ(run("phantom --spec random --seed " + std::to_string(k) + " --size 32 --out " + at("ref") + n).code, 0);
    ASSERT_EQ(run("phantom --spec random --seed " + std::to_string(k + 10) + " --size 32 --out " + at("test") + n).code, 0);
  }
  const Result r = run("metrics --test " + at("test") + " --ref " + at("ref") + " --unit mm --out " + at("batch.txt"));
  ASSERT_EQ(r.code, 0) << r.out;
  const std::string text = slurp(at("batch.txt"));
  EXPECT_NE(text.find("psnr mean="), std::string::npos);
  EXPECT_NE(text.find("n=3"), std::string::npos) << text;
}

TEST(CliDeterminism, RepeatedCommandsAreByteIdentical) {
  for (int k = 0; k < 2; ++k) {
    const std::string s = std::to_string(k);
    ASSERT_EQ(run("phantom --spec random --seed 5 --size 48 --out " + at("det" + s + ".ctog"), "CTO_THREADS=1").code, 0);
    ASSERT_EQ(run("--threads 1 project --in " + at("det" + s + ".ctog") + " --views 30 --detectors 72 --noise-sigma 0.01 --seed 2 --out " +
                  at("dets" + s + ".ctog"))
                  .code,
              0);
    ASSERT_EQ(run("--threads 1 recon --method sart --in " + at("dets" + s + ".ctog") + " --size 48 --out " + at("detr" + s + ".ctog")).code, 0);
  }
  EXPECT_EQ(slurp(at("det0.ctog")), slurp(at("det1.ctog")));
  EXPECT_EQ(slurp(at("dets0.ctog")), slurp(at("dets1.ctog")));
  EXPECT_EQ(slurp(at("detr0.ctog")), slurp(at("detr1.ctog")));
}

TEST(CliThreads, EnvironmentDefaultAndFlag) {
  EXPECT_NE(run("phantom --spec disk --size 16 --out " + at("t.ctog"), "CTO_THREADS=3").out.find("threads=3"), std::string::npos);
  EXPECT_NE(run("--threads 2 phantom --spec disk --size 16 --out " + at("t.ctog")).out.find("threads=2"), std::string::npos);
  EXPECT_EQ(run("--threads 0 phantom --spec disk --size 16 --out " + at("t.ctog")).code, 2);
}

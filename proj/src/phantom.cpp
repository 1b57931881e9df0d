#include "ctorecon/phantom.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "ctorecon/random.hpp"

namespace ctorecon {

namespace {

constexpr double deg(double d) { return d * std::numbers::pi / 180.0; }

bool inside(const Ellipse& e, double x, double y) {
  const double dx = x - e.x0;
  const double dy = y - e.y0;
  const double c = std::cos(e.rotation);
  const double s = std::sin(e.rotation);
  const double u = (dx * c + dy * s) / e.a;
  const double v = (-dx * s + dy * c) / e.b;
  return u * u + v * v <= 1.0;
}

}  // namespace

PhantomSpec shepp_logan() {
  PhantomSpec spec;
  spec.canonical = true;
  spec.ellipses = {
      {0.0, 0.0, 0.69, 0.92, 0.0, 1.0},
      {0.0, -0.0184, 0.6624, 0.874, 0.0, -0.8},
      {0.22, 0.0, 0.11, 0.31, deg(-18.0), -0.2},
      {-0.22, 0.0, 0.16, 0.41, deg(18.0), -0.2},
      {0.0, 0.35, 0.21, 0.25, 0.0, 0.1},
      {0.0, 0.1, 0.046, 0.046, 0.0, 0.1},
      {0.0, -0.1, 0.046, 0.046, 0.0, 0.1},
      {-0.08, -0.605, 0.046, 0.023, 0.0, 0.1},
      {0.0, -0.606, 0.023, 0.023, 0.0, 0.1},
      {0.06, -0.605, 0.023, 0.046, 0.0, 0.1},
  };
  return spec;
}

PhantomSpec disk(double radius, double density) {
  PhantomSpec spec;
  spec.ellipses = {{0.0, 0.0, radius, radius, 0.0, density}};
  return spec;
}

PhantomSpec random_phantom(std::uint64_t seed) {
  Philox rng(seed);
  PhantomSpec spec;
  const double bodyA = rng.uniform(0.6, 0.85);
  const double bodyB = rng.uniform(0.5, 0.8);
  const double bodyRot = rng.uniform(0.0, std::numbers::pi);
  const double bodyDensity = rng.uniform(0.15, 0.25);
  spec.ellipses.push_back({0.0, 0.0, bodyA, bodyB, bodyRot, bodyDensity});

  const std::size_t inclusions = 3 + rng.below(4);
  const double cb = std::cos(bodyRot);
  const double sb = std::sin(bodyRot);
  for (std::size_t k = 0; k < inclusions; ++k) {
    // Centre drawn inside the body, in body coordinates.
    const double radius = std::sqrt(rng.uniform(0.0, 1.0)) * 0.6;
    const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double u = radius * bodyA * std::cos(angle);
    const double v = radius * bodyB * std::sin(angle);
    Ellipse e;
    e.x0 = u * cb - v * sb;
    e.y0 = u * sb + v * cb;
    e.a = rng.uniform(0.05, 0.25);
    e.b = rng.uniform(0.05, 0.25);
    e.rotation = rng.uniform(0.0, std::numbers::pi);
    e.density = rng.uniform(0.02, 0.08);
    spec.ellipses.push_back(e);
  }
  return spec;
}

PhantomSpec scaled(const PhantomSpec& spec, double factor) {
  PhantomSpec out = spec;
  for (auto& e : out.ellipses) {
    e.x0 *= factor;
    e.y0 *= factor;
    e.a *= factor;
    e.b *= factor;
  }
  return out;
}

PhantomSpec rotated(const PhantomSpec& spec, double phi) {
  PhantomSpec out = spec;
  out.canonical = false;
  const double c = std::cos(phi);
  const double s = std::sin(phi);
  for (auto& e : out.ellipses) {
    const double x = e.x0 * c - e.y0 * s;
    const double y = e.x0 * s + e.y0 * c;
    e.x0 = x;
    e.y0 = y;
    e.rotation += phi;
  }
  return out;
}

PhantomSpec parse_phantom_spec(const std::string& text) {
  PhantomSpec spec;
  std::istringstream in(text);
  std::string line;
  std::size_t lineNo = 0;
  while (std::getline(in, line)) {
    ++lineNo;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream fields(line);
    Ellipse e;
    if (!(fields >> e.x0)) continue;  // blank or comment-only line
    if (!(fields >> e.y0 >> e.a >> e.b >> e.rotation >> e.density))
      throw std::invalid_argument("phantom spec line " + std::to_string(lineNo) + ": expected 6 fields");
    std::string extra;
    if (fields >> extra) throw std::invalid_argument("phantom spec line " + std::to_string(lineNo) + ": trailing fields");
    if (!(e.a > 0.0 && e.b > 0.0)) throw std::invalid_argument("phantom spec line " + std::to_string(lineNo) + ": semi-axes must be > 0");
    spec.ellipses.push_back(e);
  }
  if (spec.ellipses.empty()) throw std::invalid_argument("phantom spec contains no ellipses");
  return spec;
}

PhantomSpec read_phantom_spec(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open phantom spec " + path.string());
  std::stringstream buf;
  buf << is.rdbuf();
  return parse_phantom_spec(buf.str());
}

std::string format_phantom_spec(const PhantomSpec& spec) {
  std::ostringstream os;
  os.precision(17);
  os << "# x0 y0 a b alpha rho\n";
  for (const auto& e : spec.ellipses)
    os << e.x0 << ' ' << e.y0 << ' ' << e.a << ' ' << e.b << ' ' << e.rotation << ' ' << e.density << '\n';
  return os.str();
}

Image rasterize(const PhantomSpec& spec, std::size_t width, std::size_t height, double spacing) {
  if (width < 2 || height < 2) throw std::invalid_argument("rasterize: dimensions must be >= 2");
  Image img(width, height, spacing);
  for (std::size_t j = 0; j < height; ++j) {
    const double y = img.y_of(j);
    for (std::size_t i = 0; i < width; ++i) {
      const double x = img.x_of(i);
      double v = 0.0;
      for (const auto& e : spec.ellipses)
        if (inside(e, x, y)) v += e.density;
      img.at(i, j) = v;
    }
  }
  return img;
}

double analytic_projection(const PhantomSpec& spec, double theta, double r) {
  const double ct = std::cos(theta);
  const double st = std::sin(theta);
  double total = 0.0;
  for (const auto& e : spec.ellipses) {
    const double s = r - (e.x0 * ct + e.y0 * st);
    const double gamma = theta - e.rotation;
    const double cg = std::cos(gamma);
    const double sg = std::sin(gamma);
    const double h2 = e.a * e.a * cg * cg + e.b * e.b * sg * sg;
    const double d = h2 - s * s;
    if (d > 0.0) total += 2.0 * e.density * e.a * e.b * std::sqrt(d) / h2;
  }
  return total;
}

Sinogram analytic_sinogram(const PhantomSpec& spec, const AngleSet& angles, std::size_t detCount, double detSpacing) {
  Sinogram sino(angles, detCount, detSpacing);
  for (std::size_t k = 0; k < angles.size(); ++k)
    for (std::size_t d = 0; d < detCount; ++d) sino.at(k, d) = analytic_projection(spec, angles.angles[k], sino.r_of(d));
  return sino;
}

}  // namespace ctorecon

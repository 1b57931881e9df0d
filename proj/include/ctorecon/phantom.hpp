#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ctorecon/core.hpp"

namespace ctorecon {

struct Ellipse {
  double x0 = 0.0;
  double y0 = 0.0;
  double a = 1.0;  // semi-axis along the rotated x direction
  double b = 1.0;
  double rotation = 0.0;  // radians, counter-clockwise
  double density = 1.0;   // additive attenuation
};

struct PhantomSpec {
  std::vector<Ellipse> ellipses;
  bool canonical = false;
};

/// Modified (high-contrast) Shepp-Logan, 10 ellipses on [-1, 1]^2.
PhantomSpec shepp_logan();

/// Single centred disk.
PhantomSpec disk(double radius, double density);

/// Random soft-tissue-like phantom on [-1, 1]^2: a body ellipse plus a few
/// inclusions. All densities are non-negative.
PhantomSpec random_phantom(std::uint64_t seed);

/// Scales every length by `factor` (e.g. normalised units -> physical).
PhantomSpec scaled(const PhantomSpec& spec, double factor);

/// Rotates the whole object by phi about the origin.
PhantomSpec rotated(const PhantomSpec& spec, double phi);

/// Text format: one ellipse per line "x0 y0 a b alpha rho", '#' starts a comment.
PhantomSpec parse_phantom_spec(const std::string& text);
PhantomSpec read_phantom_spec(const std::filesystem::path& path);
std::string format_phantom_spec(const PhantomSpec& spec);

Image rasterize(const PhantomSpec& spec, std::size_t width, std::size_t height, double spacing);

/// Closed-form line integral along the ray {x : x . (cos theta, sin theta) = r}.
double analytic_projection(const PhantomSpec& spec, double theta, double r);

Sinogram analytic_sinogram(const PhantomSpec& spec, const AngleSet& angles, std::size_t detCount, double detSpacing);

}  // namespace ctorecon

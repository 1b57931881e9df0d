#pragma once

#include <filesystem>
#include <variant>

#include "ctorecon/core.hpp"

namespace ctorecon {

/// Little-endian "CTOG" container:
///   magic "CTOG" | version u32 (=1) | kind u8 (0 image, 1 sinogram)
///   image:    width u32 | height u32 | spacing f64
///   sinogram: angleCount u32 | detCount u32 | detSpacing f64 | period f64 | angles f64[angleCount]
///   payload f64 values, row-major
using GridData = std::variant<Image, Sinogram>;

inline constexpr std::uint32_t kGridFormatVersion = 1;

void write_grid_file(const std::filesystem::path& path, const Image& img);
void write_grid_file(const std::filesystem::path& path, const Sinogram& sino);
GridData read_grid_file(const std::filesystem::path& path);

/// Convenience readers; throw FormatError when the file holds the other kind.
Image read_image_file(const std::filesystem::path& path);
Sinogram read_sinogram_file(const std::filesystem::path& path);

}  // namespace ctorecon

#include "ctorecon/grid_io.hpp"

#include <fstream>
#include <limits>

#include "ctorecon/binary_io.hpp"

namespace ctorecon {

namespace {

constexpr char kMagic[4] = {'C', 'T', 'O', 'G'};

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  os.write(kMagic, 4);
  binio::put<std::uint32_t>(os, kGridFormatVersion);
  return os;
}

void put_values(std::ostream& os, const std::vector<double>& values) {
  for (double v : values) binio::put<double>(os, v);
}

std::vector<double> get_values(std::istream& is, std::uint64_t count, std::uint64_t remaining) {
  if (count > remaining / sizeof(double)) throw FormatError("grid payload truncated or dimensions overflow");
  std::vector<double> values(static_cast<std::size_t>(count));
  for (auto& v : values) v = binio::get<double>(is, "payload");
  return values;
}

std::uint64_t checked_product(std::uint32_t a, std::uint32_t b) {
  const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
  if (a != 0 && p / a != b) throw FormatError("grid dimensions overflow");
  return p;
}

void finish(std::ofstream& os, const std::filesystem::path& path) {
  os.flush();
  if (!os) throw std::runtime_error("write failed for " + path.string());
}

}  // namespace

void write_grid_file(const std::filesystem::path& path, const Image& img) {
  if (img.width > std::numeric_limits<std::uint32_t>::max() || img.height > std::numeric_limits<std::uint32_t>::max())
    throw std::invalid_argument("image too large for grid format");
  auto os = open_out(path);
  binio::put<std::uint8_t>(os, 0);
  binio::put<std::uint32_t>(os, static_cast<std::uint32_t>(img.width));
  binio::put<std::uint32_t>(os, static_cast<std::uint32_t>(img.height));
  binio::put<double>(os, img.spacing);
  put_values(os, img.values);
  finish(os, path);
}

void write_grid_file(const std::filesystem::path& path, const Sinogram& sino) {
  if (sino.views() > std::numeric_limits<std::uint32_t>::max() || sino.detCount > std::numeric_limits<std::uint32_t>::max())
    throw std::invalid_argument("sinogram too large for grid format");
  auto os = open_out(path);
  binio::put<std::uint8_t>(os, 1);
  binio::put<std::uint32_t>(os, static_cast<std::uint32_t>(sino.views()));
  binio::put<std::uint32_t>(os, static_cast<std::uint32_t>(sino.detCount));
  binio::put<double>(os, sino.detSpacing);
  binio::put<double>(os, sino.angleSet.period);
  for (double a : sino.angleSet.angles) binio::put<double>(os, a);
  put_values(os, sino.values);
  finish(os, path);
}

GridData read_grid_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  is.seekg(0, std::ios::end);
  const auto fileSize = static_cast<std::uint64_t>(is.tellg());
  is.seekg(0, std::ios::beg);

  char magic[4];
  if (!is.read(magic, 4) || std::string(magic, 4) != std::string(kMagic, 4)) throw FormatError("bad magic: not a CTOG grid file");
  const auto version = binio::get<std::uint32_t>(is, "version");
  if (version != kGridFormatVersion) throw FormatError("unsupported grid format version " + std::to_string(version));
  const auto kind = binio::get<std::uint8_t>(is, "kind");

  try {
    if (kind == 0) {
      const auto width = binio::get<std::uint32_t>(is, "width");
      const auto height = binio::get<std::uint32_t>(is, "height");
      const auto spacing = binio::get<double>(is, "spacing");
      const std::uint64_t count = checked_product(width, height);
      const std::uint64_t pos = static_cast<std::uint64_t>(is.tellg());
      auto values = get_values(is, count, fileSize - pos);
      return Image(width, height, spacing, std::move(values));
    }
    if (kind == 1) {
      const auto views = binio::get<std::uint32_t>(is, "angleCount");
      const auto det = binio::get<std::uint32_t>(is, "detCount");
      const auto detSpacing = binio::get<double>(is, "detSpacing");
      const auto period = binio::get<double>(is, "period");
      std::uint64_t pos = static_cast<std::uint64_t>(is.tellg());
      auto angles = get_values(is, views, fileSize - pos);
      const std::uint64_t count = checked_product(views, det);
      pos = static_cast<std::uint64_t>(is.tellg());
      auto values = get_values(is, count, fileSize - pos);
      AngleSet set(std::move(angles), period);
      if (views > 0) {
        const AngleSet ref = AngleSet::make_uniform(views, period);
        set.uniform = ref.angles == set.angles;
      }
      return Sinogram(std::move(set), det, detSpacing, std::move(values));
    }
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("invalid grid header: ") + e.what());
  }
  throw FormatError("unknown grid kind " + std::to_string(kind));
}

Image read_image_file(const std::filesystem::path& path) {
  auto data = read_grid_file(path);
  if (auto* img = std::get_if<Image>(&data)) return std::move(*img);
  throw FormatError(path.string() + " holds a sinogram, expected an image");
}

Sinogram read_sinogram_file(const std::filesystem::path& path) {
  auto data = read_grid_file(path);
  if (auto* s = std::get_if<Sinogram>(&data)) return std::move(*s);
  throw FormatError(path.string() + " holds an image, expected a sinogram");
}

}  // namespace ctorecon

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace decomesh {

struct Rgba8Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  ///< row-major RGBA
};

std::vector<std::uint8_t> encode_png(const Rgba8Image& image);
/// Decodes any PNG libpng understands, expanded to 8-bit RGBA.
Rgba8Image decode_png(std::span<const std::uint8_t> bytes);

void write_png(const std::filesystem::path& path, const Rgba8Image& image);
Rgba8Image read_png(const std::filesystem::path& path);

}  // namespace decomesh

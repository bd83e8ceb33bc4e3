#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "decomesh/image_io.hpp"
#include "decomesh/raster.hpp"

namespace decomesh {

/// Boolean image indexed (y, x).
using Mask = ImageArray<bool>;

struct Click {
  int x = 0;
  int y = 0;
  bool positive = true;
};

struct ClickPrompt {
  std::vector<Click> clicks;

  /// Requires at least one positive click and every click inside the image.
  void validate(int width, int height) const;
};

inline constexpr double kDefaultTau2d = 0.85;

/// Feature flood fill from the positive clicks.
///
/// The prototype is the re-normalized mean of the clicked features. A pixel
/// joins when it is hit, 4-connected to the fill and cos(prototype, f) > tau_2d.
/// Each negative click floods the mask with its own feature and removes the
/// pixels that are closer to it than to the prototype. Components that no
/// longer contain a positive click are dropped.
Mask click_to_mask(const RasterBuffers& buffers, const ClickPrompt& prompt,
                   double tau_2d = kDefaultTau2d);

/// Pixels whose rasterized vertex label equals `label`.
Mask mask_from_labels(const RasterBuffers& buffers, std::uint32_t label);

std::size_t mask_count(const Mask& mask);
std::vector<Pixel> mask_pixels(const Mask& mask);

/// Mask pixels with at least one non-mask 8-neighbor; the image border counts
/// as non-mask. Row-major order.
std::vector<Pixel> mask_contour(const Mask& mask);

/// Non-mask pixels with at least one mask pixel among their 8 neighbors.
std::vector<Pixel> mask_outer_ring(const Mask& mask);

enum class BoundaryMode {
  kOuterRing,  ///< B_o from the pixels just outside the mask
  kContour,    ///< B_o from the mask's own contour pixels
};

struct SegmentationSeed {
  Mask mask;
  std::vector<Pixel> contour;
  std::vector<VertexIndex> seeds;     ///< S_o, ascending
  std::vector<VertexIndex> boundary;  ///< B_o, ascending, disjoint from seeds
  std::string view_id;
};

/// Maps mask pixels to seed vertices and boundary pixels to fence vertices.
/// Vertices landing in both sets stay in the boundary only.
SegmentationSeed build_seed(const RasterBuffers& buffers, const Mask& mask,
                            BoundaryMode mode = BoundaryMode::kOuterRing,
                            std::string view_id = {});

/// Row-major run-length code of the true pixels: runs = [start, length, ...].
struct MaskRle {
  int width = 0;
  int height = 0;
  std::vector<std::uint64_t> runs;
};

MaskRle encode_rle(const Mask& mask);
Mask decode_rle(const MaskRle& rle);
std::string rle_to_json(const MaskRle& rle);
MaskRle parse_rle_json(const std::string& text);

/// 0/255 grayscale rendering of the mask as RGBA.
Rgba8Image mask_to_image(const Mask& mask);
/// Any pixel with red channel >= 128 is in the mask.
Mask mask_from_image(const Rgba8Image& image);
void write_mask_png(const std::filesystem::path& path, const Mask& mask);
Mask read_mask_png(const std::filesystem::path& path);

}  // namespace decomesh

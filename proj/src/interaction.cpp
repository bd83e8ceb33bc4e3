#include "decomesh/interaction.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

#include "json.hpp"

namespace decomesh {

void ClickPrompt::validate(int width, int height) const {
  bool any_positive = false;
  for (const auto& c : clicks) {
    if (c.x < 0 || c.y < 0 || c.x >= width || c.y >= height) {
      throw Error(ErrorCode::kInvalidArgument, "click (" + std::to_string(c.x) + ", " +
                                                   std::to_string(c.y) + ") is outside the image");
    }
    any_positive = any_positive || c.positive;
  }
  if (!any_positive) throw Error(ErrorCode::kInvalidArgument, "prompt needs at least one positive click");
}

namespace {

Eigen::VectorXd unit_feature(const RasterBuffers& b, int x, int y) {
  Eigen::VectorXd f = b.features.row(b.row(x, y)).transpose().cast<double>();
  const double n = f.norm();
  return n > 0.0 ? Eigen::VectorXd(f / n) : f;
}

double cosine_to(const RasterBuffers& b, const Eigen::VectorXd& unit, int x, int y) {
  const Eigen::VectorXd f = b.features.row(b.row(x, y)).transpose().cast<double>();
  const double n = f.norm();
  return n > 0.0 ? unit.dot(f) / n : 0.0;
}

constexpr int kDx4[4] = {1, -1, 0, 0};
constexpr int kDy4[4] = {0, 0, 1, -1};

template <typename Accept>
void flood(Mask& out, int w, int h, const std::vector<Pixel>& starts, Accept accept) {
  std::deque<Pixel> queue;
  for (const auto& p : starts) {
    if (!out(p.y, p.x)) {
      out(p.y, p.x) = true;
      queue.push_back(p);
    }
  }
  while (!queue.empty()) {
    const Pixel p = queue.front();
    queue.pop_front();
    for (int k = 0; k < 4; ++k) {
      const int x = p.x + kDx4[k], y = p.y + kDy4[k];
      if (x < 0 || y < 0 || x >= w || y >= h || out(y, x) || !accept(x, y)) continue;
      out(y, x) = true;
      queue.push_back({x, y});
    }
  }
}

}  // namespace

Mask click_to_mask(const RasterBuffers& buffers, const ClickPrompt& prompt, double tau_2d) {
  const int w = buffers.width, h = buffers.height;
  prompt.validate(w, h);
  if (buffers.features.cols() == 0) throw Error(ErrorCode::kMissingFeatures, "buffers carry no feature map");
  if (!std::isfinite(tau_2d)) throw Error(ErrorCode::kInvalidArgument, "tau_2d must be finite");
  for (const auto& c : prompt.clicks) {
    if (!buffers.hit(c.x, c.y)) {
      throw Error(ErrorCode::kMissedPixel, "click (" + std::to_string(c.x) + ", " + std::to_string(c.y) +
                                               ") does not hit geometry");
    }
  }

  std::vector<Pixel> positives;
  Eigen::VectorXd proto = Eigen::VectorXd::Zero(buffers.features.cols());
  for (const auto& c : prompt.clicks) {
    if (!c.positive) continue;
    positives.push_back({c.x, c.y});
    proto += unit_feature(buffers, c.x, c.y);
  }
  if (proto.norm() > 0.0) proto.normalize();

  Mask mask = Mask::Constant(h, w, false);
  flood(mask, w, h, positives, [&](int x, int y) {
    return buffers.hit(x, y) && cosine_to(buffers, proto, x, y) > tau_2d;
  });

  for (const auto& c : prompt.clicks) {
    if (c.positive) continue;
    const Eigen::VectorXd neg = unit_feature(buffers, c.x, c.y);
    Mask carved = Mask::Constant(h, w, false);
    flood(carved, w, h, {{c.x, c.y}}, [&](int x, int y) {
      if (!mask(y, x)) return false;
      const double cn = cosine_to(buffers, neg, x, y);
      return cn > tau_2d && cn > cosine_to(buffers, proto, x, y);
    });
    mask = mask && !carved;
  }
  for (const auto& p : positives) mask(p.y, p.x) = true;

  Mask kept = Mask::Constant(h, w, false);
  flood(kept, w, h, positives, [&](int x, int y) { return mask(y, x); });
  return kept;
}

Mask mask_from_labels(const RasterBuffers& buffers, std::uint32_t label) {
  return buffers.label == label && buffers.vertex_id != kMissIndex;
}

std::size_t mask_count(const Mask& mask) { return static_cast<std::size_t>(mask.count()); }

std::vector<Pixel> mask_pixels(const Mask& mask) {
  std::vector<Pixel> out;
  for (int y = 0; y < mask.rows(); ++y)
    for (int x = 0; x < mask.cols(); ++x)
      if (mask(y, x)) out.push_back({x, y});
  return out;
}

namespace {

bool mask_at(const Mask& m, int x, int y) {
  return x >= 0 && y >= 0 && x < m.cols() && y < m.rows() && m(y, x);
}

}  // namespace

std::vector<Pixel> mask_contour(const Mask& mask) {
  if (mask_count(mask) == 0) throw Error(ErrorCode::kEmptySet, "mask is empty");
  std::vector<Pixel> out;
  for (int y = 0; y < mask.rows(); ++y) {
    for (int x = 0; x < mask.cols(); ++x) {
      if (!mask(y, x)) continue;
      bool edge = false;
      for (int dy = -1; dy <= 1 && !edge; ++dy)
        for (int dx = -1; dx <= 1 && !edge; ++dx)
          if ((dx || dy) && !mask_at(mask, x + dx, y + dy)) edge = true;
      if (edge) out.push_back({x, y});
    }
  }
  return out;
}

std::vector<Pixel> mask_outer_ring(const Mask& mask) {
  std::vector<Pixel> out;
  for (int y = 0; y < mask.rows(); ++y) {
    for (int x = 0; x < mask.cols(); ++x) {
      if (mask(y, x)) continue;
      bool touches = false;
      for (int dy = -1; dy <= 1 && !touches; ++dy)
        for (int dx = -1; dx <= 1 && !touches; ++dx)
          if ((dx || dy) && mask_at(mask, x + dx, y + dy)) touches = true;
      if (touches) out.push_back({x, y});
    }
  }
  return out;
}

SegmentationSeed build_seed(const RasterBuffers& buffers, const Mask& mask, BoundaryMode mode,
                            std::string view_id) {
  if (mask.rows() != buffers.height || mask.cols() != buffers.width) {
    throw Error(ErrorCode::kDimMismatch, "mask size does not match the view");
  }
  SegmentationSeed seed;
  seed.mask = mask;
  seed.view_id = std::move(view_id);
  const auto inside = mask_pixels(mask);
  if (inside.empty()) throw Error(ErrorCode::kEmptySeed, "mask is empty");
  seed.contour = mask_contour(mask);
  auto seeds = pixels_to_vertices(buffers, inside);
  const auto ring = mode == BoundaryMode::kContour ? seed.contour : mask_outer_ring(mask);
  seed.boundary = pixels_to_vertices(buffers, ring);
  std::set_difference(seeds.begin(), seeds.end(), seed.boundary.begin(), seed.boundary.end(),
                      std::back_inserter(seed.seeds));
  if (seed.seeds.empty()) throw Error(ErrorCode::kEmptySeed, "mask maps to no seed vertices");
  return seed;
}

MaskRle encode_rle(const Mask& mask) {
  MaskRle rle{static_cast<int>(mask.cols()), static_cast<int>(mask.rows()), {}};
  const std::uint64_t n = std::uint64_t(mask.size());
  std::uint64_t i = 0;
  while (i < n) {
    if (!mask.data()[i]) {
      ++i;
      continue;
    }
    const std::uint64_t start = i;
    while (i < n && mask.data()[i]) ++i;
    rle.runs.push_back(start);
    rle.runs.push_back(i - start);
  }
  return rle;
}

Mask decode_rle(const MaskRle& rle) {
  if (rle.width <= 0 || rle.height <= 0) throw Error(ErrorCode::kInvalidArgument, "RLE size must be positive");
  if (rle.runs.size() % 2 != 0) throw Error(ErrorCode::kParseError, "RLE runs must come in pairs");
  Mask mask = Mask::Constant(rle.height, rle.width, false);
  const std::uint64_t n = std::uint64_t(mask.size());
  for (std::size_t k = 0; k < rle.runs.size(); k += 2) {
    const std::uint64_t start = rle.runs[k], len = rle.runs[k + 1];
    if (start > n || len > n - start) throw Error(ErrorCode::kIndexOutOfRange, "RLE run exceeds the image");
    std::fill_n(mask.data() + start, len, true);
  }
  return mask;
}

std::string rle_to_json(const MaskRle& rle) {
  nlohmann::ordered_json j{{"width", rle.width}, {"height", rle.height}, {"runs", rle.runs}};
  return j.dump();
}

MaskRle parse_rle_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    MaskRle rle{j.at("width").get<int>(), j.at("height").get<int>(),
                j.at("runs").get<std::vector<std::uint64_t>>()};
    decode_rle(rle);
    return rle;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParseError, std::string("RLE JSON: ") + e.what());
  }
}

Rgba8Image mask_to_image(const Mask& mask) {
  Rgba8Image img{static_cast<int>(mask.cols()), static_cast<int>(mask.rows()), {}};
  img.pixels.resize(std::size_t(mask.size()) * 4);
  for (Eigen::Index i = 0; i < mask.size(); ++i) {
    const std::uint8_t v = mask.data()[i] ? 255 : 0;
    img.pixels[4 * i] = img.pixels[4 * i + 1] = img.pixels[4 * i + 2] = v;
    img.pixels[4 * i + 3] = 255;
  }
  return img;
}

Mask mask_from_image(const Rgba8Image& image) {
  Mask mask(image.height, image.width);
  for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = image.pixels[4 * i] >= 128;
  return mask;
}

void write_mask_png(const std::filesystem::path& path, const Mask& mask) {
  write_png(path, mask_to_image(mask));
}

Mask read_mask_png(const std::filesystem::path& path) { return mask_from_image(read_png(path)); }

}  // namespace decomesh

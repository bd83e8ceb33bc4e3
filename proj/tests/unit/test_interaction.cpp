#include <filesystem>
#include <random>
#include <set>

#include "doctest.h"
#include "decomesh/fixtures.hpp"
#include "decomesh/interaction.hpp"

using namespace decomesh;

namespace {

/// Buffers whose pixel (x, y) with label L > 0 hits vertex y*w + x and carries
/// feature row `features[L]`. Label 0 is a miss.
RasterBuffers synthetic(const ImageArray<std::uint32_t>& labels, const Eigen::MatrixXf& features) {
  RasterBuffers b;
  b.height = static_cast<int>(labels.rows());
  b.width = static_cast<int>(labels.cols());
  b.depth = ImageArray<float>::Constant(b.height, b.width, std::numeric_limits<float>::infinity());
  b.vertex_id = ImageArray<std::uint32_t>::Constant(b.height, b.width, kMissIndex);
  b.face_id = b.vertex_id;
  b.label = b.vertex_id;
  b.features = FeatureMatrix::Zero(b.width * b.height, features.cols());
  b.normal.setZero(b.width * b.height, 3);
  b.color.setZero(b.width * b.height, 3);
  for (int y = 0; y < b.height; ++y) {
    for (int x = 0; x < b.width; ++x) {
      const auto l = labels(y, x);
      if (l == 0) continue;
      b.depth(y, x) = 1.0f;
      b.vertex_id(y, x) = static_cast<std::uint32_t>(b.row(x, y));
      b.label(y, x) = l;
      b.features.row(b.row(x, y)) = features.row(l);
    }
  }
  return b;
}

/// 20 x 12 image: object 1 on the left (x < 8), object 2 on the right
/// (x >= 10), a gap between them, and a handle (label 3) at the top of object 1.
ImageArray<std::uint32_t> layout() {
  ImageArray<std::uint32_t> l = ImageArray<std::uint32_t>::Zero(12, 20);
  for (int y = 1; y < 11; ++y) {
    for (int x = 1; x < 8; ++x) l(y, x) = y < 4 ? 3 : 1;
    for (int x = 10; x < 19; ++x) l(y, x) = 2;
  }
  return l;
}

Eigen::MatrixXf part_features() {
  Eigen::MatrixXf f = Eigen::MatrixXf::Zero(4, 3);
  f.row(1) << 1, 0, 0;
  f.row(2) << 0, 1, 0;
  f.row(3) << 0.95f, 0.31224990f, 0;
  return f;
}

Mask label_mask(const ImageArray<std::uint32_t>& l, std::set<std::uint32_t> keep) {
  Mask m(l.rows(), l.cols());
  for (int y = 0; y < l.rows(); ++y)
    for (int x = 0; x < l.cols(); ++x) m(y, x) = keep.count(l(y, x)) > 0;
  return m;
}

/// Brute-force contour: every mask pixel with a non-mask 8-neighbour or on the border.
std::set<std::pair<int, int>> brute_contour(const Mask& m) {
  std::set<std::pair<int, int>> out;
  for (int y = 0; y < m.rows(); ++y) {
    for (int x = 0; x < m.cols(); ++x) {
      if (!m(y, x)) continue;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const int xx = x + dx, yy = y + dy;
          const bool inside = xx >= 0 && yy >= 0 && xx < m.cols() && yy < m.rows();
          if (!inside || !m(yy, xx)) out.insert({x, y});
        }
      }
    }
  }
  return out;
}

int components4(const Mask& m) {
  Mask seen = Mask::Constant(m.rows(), m.cols(), false);
  int n = 0;
  for (int y = 0; y < m.rows(); ++y) {
    for (int x = 0; x < m.cols(); ++x) {
      if (!m(y, x) || seen(y, x)) continue;
      ++n;
      std::vector<std::pair<int, int>> stack{{x, y}};
      seen(y, x) = true;
      while (!stack.empty()) {
        auto [cx, cy] = stack.back();
        stack.pop_back();
        const int d[4][2] = {{1, 0}, {-1, 0}, {0, 1}, {0, -1}};
        for (auto& o : d) {
          const int xx = cx + o[0], yy = cy + o[1];
          if (xx >= 0 && yy >= 0 && xx < m.cols() && yy < m.rows() && m(yy, xx) && !seen(yy, xx)) {
            seen(yy, xx) = true;
            stack.push_back({xx, yy});
          }
        }
      }
    }
  }
  return n;
}

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return ErrorCode::kInvalidArgument;
}

}  // namespace

TEST_SUITE("interaction") {

TEST_CASE("click on an object with orthogonal features selects exactly it") {
  const auto l = layout();
  const RasterBuffers b = synthetic(l, part_features());
  const Mask m = click_to_mask(b, {{{4, 6, true}}}, 0.5);
  CHECK((m == label_mask(l, {1, 3})).all());
  const Mask r = click_to_mask(b, {{{12, 6, true}}}, 0.5);
  CHECK((r == label_mask(l, {2})).all());
}

TEST_CASE("threshold of -1 fills the connected hit region") {
  const auto l = layout();
  const RasterBuffers b = synthetic(l, part_features());
  const Mask m = click_to_mask(b, {{{4, 6, true}}}, -1.0);
  CHECK((m == label_mask(l, {1, 3})).all());  // object 2 is across a gap
}

TEST_CASE("negative click carves out the handle") {
  const auto l = layout();
  const RasterBuffers b = synthetic(l, part_features());
  const Mask m = click_to_mask(b, {{{4, 6, true}, {4, 2, false}}}, 0.5);
  CHECK((m == label_mask(l, {1})).all());
}

TEST_CASE("multiple positive clicks use the mean prototype") {
  const auto l = layout();
  const RasterBuffers b = synthetic(l, part_features());
  const Mask m = click_to_mask(b, {{{4, 6, true}, {12, 6, true}}}, 0.5);
  CHECK((m == label_mask(l, {1, 2, 3})).all());
  // Prototype (1,1,0)/sqrt2 has cosine 0.707 to each object, so 0.8 keeps only the clicked pixels.
  const Mask tight = click_to_mask(b, {{{4, 6, true}, {12, 6, true}}}, 0.8);
  CHECK(mask_count(tight) == 2);
  CHECK(tight(6, 4));
  CHECK(tight(6, 12));
}

TEST_CASE("click errors") {
  const auto l = layout();
  const RasterBuffers b = synthetic(l, part_features());
  CHECK(code_of([&] { click_to_mask(b, {{{0, 0, true}}}); }) == ErrorCode::kMissedPixel);
  CHECK(code_of([&] { click_to_mask(b, {{{4, 6, false}}}); }) == ErrorCode::kInvalidArgument);
  CHECK(code_of([&] { click_to_mask(b, {{{40, 6, true}}}); }) == ErrorCode::kInvalidArgument);
  CHECK(code_of([&] { click_to_mask(b, {{}}); }) == ErrorCode::kInvalidArgument);
}

TEST_CASE("random prompts keep clicks and stay 4-connected") {
  std::mt19937 rng(17);
  ImageArray<std::uint32_t> l(24, 24);
  Eigen::MatrixXf f = Eigen::MatrixXf::Random(6, 4);
  std::uniform_int_distribution<int> lab(0, 5);
  for (int y = 0; y < 24; ++y)
    for (int x = 0; x < 24; ++x) l(y, x) = static_cast<std::uint32_t>(lab(rng));
  const RasterBuffers b = synthetic(l, f);
  std::uniform_int_distribution<int> coord(0, 23);
  std::uniform_real_distribution<double> tau(-0.5, 0.95);
  for (int trial = 0; trial < 200; ++trial) {
    ClickPrompt p;
    while (p.clicks.size() < 3) {
      const int x = coord(rng), y = coord(rng);
      if (l(y, x) != 0) p.clicks.push_back({x, y, p.clicks.empty() || coord(rng) % 2 == 0});
    }
    const Mask m = click_to_mask(b, p, tau(rng));
    int positive_count = 0;
    for (const auto& c : p.clicks) {
      if (!c.positive) continue;
      ++positive_count;
      CHECK(m(c.y, c.x));
    }
    CHECK(components4(m) <= positive_count);
    for (int y = 0; y < 24; ++y)
      for (int x = 0; x < 24; ++x)
        if (m(y, x)) CHECK(b.hit(x, y));
    const Mask again = click_to_mask(b, p, 0.3);
    CHECK((again == click_to_mask(b, p, 0.3)).all());
  }
}

TEST_CASE("contour examples") {
  Mask m = Mask::Constant(7, 7, false);
  m.block(2, 2, 3, 3).setConstant(true);
  const auto c = mask_contour(m);
  CHECK(c.size() == 8);
  CHECK(std::find(c.begin(), c.end(), Pixel{3, 3}) == c.end());
  Mask one = Mask::Constant(5, 5, false);
  one(2, 3) = true;
  CHECK(mask_contour(one) == std::vector<Pixel>{{3, 2}});
  Mask full = Mask::Constant(4, 4, true);
  CHECK(mask_contour(full).size() == 12);
  CHECK(code_of([&] { mask_contour(Mask::Constant(3, 3, false)); }) == ErrorCode::kEmptySet);
}

TEST_CASE("contour equals brute-force scan on random blobs") {
  std::mt19937 rng(23);
  std::bernoulli_distribution coin(0.6);
  for (int trial = 0; trial < 50; ++trial) {
    Mask m(13, 17);
    for (int y = 0; y < 13; ++y)
      for (int x = 0; x < 17; ++x) m(y, x) = coin(rng);
    if (mask_count(m) == 0) continue;
    std::set<std::pair<int, int>> got;
    for (const auto& p : mask_contour(m)) got.insert({p.x, p.y});
    CHECK(got == brute_contour(m));
    const auto ring = mask_outer_ring(m);
    for (const auto& p : ring) {
      CHECK_FALSE(m(p.y, p.x));
      bool touches = false;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const int xx = p.x + dx, yy = p.y + dy;
          if (xx >= 0 && yy >= 0 && xx < 17 && yy < 13 && m(yy, xx)) touches = true;
        }
      CHECK(touches);
    }
  }
}

TEST_CASE("build seed on a full-frame triangle") {
  PositionMatrix p(3, 3);
  p << -10, -10, 2, 10, -10, 2, 0, 20, 2;
  NeuralMesh m(p, {{0, 1, 2}});
  Camera cam;
  cam.width = 32;
  cam.height = 24;
  cam.fx = cam.fy = 30;
  cam.cx = 16;
  cam.cy = 12;
  const RasterBuffers b = rasterize(m, cam);
  // All pixels map to the same nearest vertex here, so the boundary rule empties the seeds.
  const Mask all = Mask::Constant(24, 32, true);
  try {
    const SegmentationSeed s = build_seed(b, all, BoundaryMode::kContour);
    CHECK(s.seeds.size() <= 3);
    CHECK(s.boundary.size() <= 3);
    for (auto v : s.seeds) CHECK(std::find(s.boundary.begin(), s.boundary.end(), v) == s.boundary.end());
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kEmptySeed);
  }
}

TEST_CASE("mask that misses geometry gives empty seed") {
  const auto l = layout();
  const RasterBuffers b = synthetic(l, part_features());
  Mask m = Mask::Constant(12, 20, false);
  m(0, 0) = true;
  m(0, 1) = true;
  CHECK(code_of([&] { build_seed(b, m); }) == ErrorCode::kEmptySeed);
  CHECK(code_of([&] { build_seed(b, Mask::Constant(3, 3, true)); }) == ErrorCode::kDimMismatch);
}

TEST_CASE("seed and boundary sets follow the design rule") {
  const auto l = layout();
  const RasterBuffers b = synthetic(l, part_features());
  const Mask m = label_mask(l, {1, 3});
  SUBCASE("contour mode") {
    const SegmentationSeed s = build_seed(b, m, BoundaryMode::kContour, "v0");
    CHECK(s.view_id == "v0");
    // Pixels map to distinct vertices, so S_o is the interior and B_o the contour.
    CHECK(s.boundary.size() == mask_contour(m).size());
    CHECK(s.seeds.size() == mask_count(m) - s.boundary.size());
  }
  SUBCASE("outer ring mode") {
    const SegmentationSeed s = build_seed(b, m, BoundaryMode::kOuterRing);
    CHECK(s.seeds.size() == mask_count(m));
    // The ring around object 1 only touches the gap and the image border, none of which hit geometry.
    CHECK(s.boundary.empty());
  }
  const SegmentationSeed a = build_seed(b, m), c = build_seed(b, m);
  CHECK(a.seeds == c.seeds);
  CHECK(a.boundary == c.boundary);
  CHECK(std::is_sorted(a.seeds.begin(), a.seeds.end()));
}

TEST_CASE("sphere oracle mask seeds only sphere vertices") {
  const FixtureBundle fx = generate(two_spheres_spec());
  const RasterBuffers b = rasterize(fx.foreground, fx.cameras[0]);
  const Mask m = mask_from_labels(b, 1);
  REQUIRE(mask_count(m) > 0);
  const SegmentationSeed s = build_seed(b, m, BoundaryMode::kContour);
  const auto& labels = *fx.foreground.labels();
  for (auto v : s.seeds) CHECK(labels[v] == 1u);
  for (auto v : s.boundary) CHECK(labels[v] == 1u);
  const SegmentationSeed o = build_seed(b, m);
  for (auto v : o.seeds) CHECK(labels[v] == 1u);
  for (auto v : o.boundary) CHECK(labels[v] != 1u);
}

TEST_CASE("RLE round trip") {
  std::mt19937 rng(3);
  std::bernoulli_distribution coin(0.3);
  for (int trial = 0; trial < 20; ++trial) {
    Mask m(9, 14);
    for (int y = 0; y < 9; ++y)
      for (int x = 0; x < 14; ++x) m(y, x) = coin(rng);
    const MaskRle r = encode_rle(m);
    CHECK((decode_rle(r) == m).all());
    const MaskRle j = parse_rle_json(rle_to_json(r));
    CHECK(j.runs == r.runs);
    CHECK(j.width == 14);
    std::uint64_t total = 0;
    for (std::size_t k = 1; k < r.runs.size(); k += 2) total += r.runs[k];
    CHECK(total == mask_count(m));
  }
  Mask row = Mask::Constant(2, 4, false);
  row(0, 3) = row(1, 0) = row(1, 1) = true;
  CHECK(encode_rle(row).runs == std::vector<std::uint64_t>{3, 3});
  CHECK_THROWS_AS(decode_rle({2, 2, {3, 5}}), Error);
  CHECK_THROWS_AS(decode_rle({2, 2, {1}}), Error);
  CHECK_THROWS_AS(parse_rle_json("{\"width\": 2}"), Error);
}

TEST_CASE("mask PNG round trip") {
  Mask m = Mask::Constant(5, 7, false);
  m(1, 2) = m(4, 6) = m(0, 0) = true;
  const auto path = std::filesystem::temp_directory_path() / "decomesh_unit_mask.png";
  write_mask_png(path, m);
  CHECK((read_mask_png(path) == m).all());
  const Rgba8Image img = mask_to_image(m);
  CHECK(img.pixels[0] == 255);
  CHECK(img.pixels[4] == 0);
  CHECK(img.pixels[3] == 255);
  CHECK_THROWS_AS(decode_png(std::vector<std::uint8_t>{1, 2, 3}), Error);
}

}

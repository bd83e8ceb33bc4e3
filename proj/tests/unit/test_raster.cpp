#include <cmath>
#include <set>

#include "doctest.h"
#include "decomesh/fixtures.hpp"
#include "decomesh/raster.hpp"
#include "support/oracles.hpp"

using namespace decomesh;

namespace {

/// 64 x 48 camera at the origin looking down +z.
Camera front_camera(int w = 64, int h = 48) {
  Camera c;
  c.width = w;
  c.height = h;
  c.fx = c.fy = 50.0;
  c.cx = 0.5 * w;
  c.cy = 0.5 * h;
  return c;
}

NeuralMesh big_triangle(double z) {
  PositionMatrix p(3, 3);
  p << -10, -10, z, 10, -10, z, 0, 20, z;
  return NeuralMesh(p, {{0, 1, 2}});
}

}  // namespace

TEST_SUITE("raster") {

TEST_CASE("camera validation and look_at") {
  Camera c = front_camera();
  CHECK_NOTHROW(c.validate());
  c.fx = 0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = front_camera();
  c.world_from_camera(0, 0) = 1.01;
  CHECK_THROWS_AS(c.validate(), Error);
  const Camera l = Camera::look_at(Vec3(3, 0, 1), Vec3(0, 0, 1), Vec3::UnitZ(), 40, 30, 60);
  CHECK_NOTHROW(l.validate());
  CHECK((l.rotation().col(2) - Vec3(-1, 0, 0)).norm() < 1e-12);
  CHECK(l.rotation().col(1).z() < 0.0);  // +y of the image points down
  const Ray centre = l.pixel_ray(20, 15, 0.0, 1.0);
  CHECK(centre.direction.dot(Vec3(-1, 0, 0)) > 0.999);
  CHECK(l.to_camera(Vec3(0, 0, 1)).z() == doctest::Approx(3.0));
}

TEST_CASE("camera JSON round trip") {
  const Camera a = Camera::look_at(Vec3(1, 2, 3), Vec3(0, 0, 0.5), Vec3::UnitZ(), 64, 48, 55);
  const Camera b = parse_camera_json(camera_to_json(a));
  CHECK(b.world_from_camera == a.world_from_camera);
  CHECK(b.fx == a.fx);
  CHECK(b.width == 64);
  const std::vector<Camera> cams{a, front_camera()};
  const auto back = parse_cameras_json(cameras_to_json(cams));
  REQUIRE(back.size() == 2);
  CHECK(back[1].cx == 32.0);
  CHECK_THROWS_AS(parse_camera_json("{\"fx\": 1}"), Error);
}

TEST_CASE("frame-filling triangle") {
  const NeuralMesh m = big_triangle(2.0);
  const RasterBuffers b = rasterize(m, front_camera());
  CHECK(b.hit_count() == 64u * 48u);
  for (int y = 0; y < 48; ++y) {
    for (int x = 0; x < 64; ++x) {
      CHECK(b.depth(y, x) == doctest::Approx(2.0).epsilon(1e-6));
      CHECK(b.vertex_id(y, x) < 3u);
      CHECK(b.face_id(y, x) == 0u);
    }
  }
  std::vector<Pixel> all;
  for (int y = 0; y < 48; ++y)
    for (int x = 0; x < 64; ++x) all.push_back({x, y});
  const auto v = pixels_to_vertices(b, all);
  CHECK(!v.empty());
  CHECK(v.size() <= 3);
  for (auto id : v) CHECK(id < 3u);
}

TEST_CASE("nearer triangle wins the depth test") {
  PositionMatrix p(6, 3);
  p << -10, -10, 3, 10, -10, 3, 0, 20, 3,  //
      -1, -1, 1.5, 1, -1, 1.5, 0, 1, 1.5;
  for (const std::vector<Face>& order : {std::vector<Face>{{0, 1, 2}, {3, 4, 5}}, std::vector<Face>{{3, 4, 5}, {0, 1, 2}}}) {
    const RasterBuffers b = rasterize(NeuralMesh(p, order), front_camera());
    int near_hits = 0;
    for (int y = 0; y < 48; ++y) {
      for (int x = 0; x < 64; ++x) {
        const Ray r = front_camera().pixel_ray(x, y, 0, 10);
        const auto t = oracle::ray_triangle(r.origin, r.direction, Vec3(-1, -1, 1.5), Vec3(1, -1, 1.5), Vec3(0, 1, 1.5));
        if (t && b.vertex_id(y, x) >= 3u) {
          CHECK(b.depth(y, x) == doctest::Approx(1.5).epsilon(1e-6));
          ++near_hits;
        }
      }
    }
    CHECK(near_hits > 100);
  }
}

TEST_CASE("geometry behind the camera is not drawn") {
  const RasterBuffers b = rasterize(big_triangle(-2.0), front_camera());
  CHECK(b.hit_count() == 0);
  std::vector<Pixel> px{{0, 0}, {10, 10}};
  CHECK(pixels_to_vertices(b, px).empty());
  for (int y = 0; y < 48; ++y) CHECK(std::isinf(b.depth(y, 5)));
  CHECK(b.features.size() == 0);
  std::vector<Pixel> outside{{64, 0}};
  CHECK_THROWS_AS(pixels_to_vertices(b, outside), Error);
}

TEST_CASE("interpolated position features land on the ray-cast point") {
  const NeuralMesh s = icosphere(Vec3::Zero(), 1.0, 3);
  FeatureMatrix f = s.positions().cast<float>();
  const NeuralMesh m = s.with_features(f);
  const Camera cam = Camera::look_at(Vec3(0, -3, 0.5), Vec3::Zero(), Vec3::UnitZ(), 96, 72, 50);
  const RasterBuffers b = rasterize(m, cam);
  const double footprint = 3.0 / cam.fy;
  int checked = 0, ok = 0;
  for (int y = 0; y < cam.height; ++y) {
    for (int x = 0; x < cam.width; ++x) {
      if (!b.hit(x, y)) continue;
      const Ray r = cam.pixel_ray(x, y, 0, 10);
      const auto t = oracle::ray_mesh(m, r.origin, r.direction);
      if (!t) continue;
      ++checked;
      const Vec3 p = r.at(*t);
      const Vec3 feat = b.features.row(b.row(x, y)).cast<double>().transpose();
      ok += (feat - p).norm() < 2.0 * footprint;
    }
  }
  CHECK(checked > 1000);
  CHECK(ok == checked);
}

TEST_CASE("depth agrees with independent ray casting") {
  const FixtureBundle fx = generate(two_spheres_spec());
  for (std::size_t v = 0; v < fx.cameras.size(); v += 3) {
    const Camera& cam = fx.cameras[v];
    const RasterBuffers b = rasterize(fx.foreground, cam);
    const Vec3 forward = cam.rotation().col(2);
    std::size_t hits = 0, good = 0;
    for (int y = 0; y < cam.height; y += 2) {
      for (int x = 0; x < cam.width; x += 2) {
        if (!b.hit(x, y)) continue;
        ++hits;
        const Ray r = cam.pixel_ray(x, y, 0, 20);
        const auto t = oracle::ray_mesh(fx.foreground, r.origin, r.direction);
        if (t && std::abs(*t * r.direction.dot(forward) - b.depth(y, x)) < 1e-3) ++good;
      }
    }
    CHECK(hits > 100);
    CHECK(static_cast<double>(good) >= 0.99 * static_cast<double>(hits));
  }
}

TEST_CASE("visible hemisphere maps to front-facing vertices") {
  const NeuralMesh s = icosphere(Vec3::Zero(), 1.0, 3);
  const Camera cam = Camera::look_at(Vec3(0, 0, -4), Vec3::Zero(), Vec3::UnitY(), 80, 60, 45);
  const RasterBuffers b = rasterize(s, cam);
  std::vector<Pixel> px;
  for (int y = 0; y < 60; ++y)
    for (int x = 0; x < 80; ++x) px.push_back({x, y});
  const auto verts = pixels_to_vertices(b, px);
  CHECK(verts.size() > 50);
  const double edge = s.mean_edge_length();
  for (VertexIndex v : verts) {
    const Vec3 p = s.position(v);
    // Normal at p is p itself; silhouette vertices may sit one edge past the horizon.
    CHECK(p.dot(cam.center() - p) > -1.5 * edge);
  }
}

TEST_CASE("rasterize is deterministic and reports labels") {
  const FixtureBundle fx = generate(two_spheres_spec());
  const RasterBuffers a = rasterize(fx.foreground, fx.cameras[1]);
  const RasterBuffers b = rasterize(fx.foreground, fx.cameras[1]);
  CHECK((a.depth == b.depth).all());
  CHECK((a.vertex_id == b.vertex_id).all());
  CHECK(a.features == b.features);
  CHECK(a.normal == b.normal);
  CHECK(a.color == b.color);
  for (int y = 0; y < a.height; ++y) {
    for (int x = 0; x < a.width; ++x) {
      if (a.hit(x, y)) {
        CHECK(std::isfinite(a.depth(y, x)));
        CHECK(a.label(y, x) == (*fx.foreground.labels())[a.vertex_id(y, x)]);
      } else {
        CHECK(a.features.row(a.row(x, y)).isZero());
      }
    }
  }
  const auto rgba = color_rgba(a);
  CHECK(rgba.size() == std::size_t(a.width) * a.height * 4);
}

}

#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "decomesh/mesh.hpp"
#include "decomesh/render.hpp"

namespace decomesh {

/// Pinhole camera looking along +z of its frame, +x right, +y down.
struct Camera {
  double fx = 1.0, fy = 1.0, cx = 0.5, cy = 0.5;
  int width = 1, height = 1;
  Eigen::Matrix4d world_from_camera = Eigen::Matrix4d::Identity();

  void validate() const;
  Eigen::Matrix3d rotation() const { return world_from_camera.topLeftCorner<3, 3>(); }
  Vec3 center() const { return world_from_camera.topRightCorner<3, 1>(); }
  Vec3 to_camera(const Vec3& world) const { return rotation().transpose() * (world - center()); }
  /// Unit world-space ray through the pixel center (x + 0.5, y + 0.5).
  Ray pixel_ray(int x, int y, double t_near, double t_far) const;

  static Camera look_at(const Vec3& eye, const Vec3& target, const Vec3& up, int width, int height,
                        double vertical_fov_deg);
};

std::string cameras_to_json(std::span<const Camera> cameras);
std::vector<Camera> parse_cameras_json(const std::string& text);
std::string camera_to_json(const Camera& camera);
Camera parse_camera_json(const std::string& text);

inline constexpr std::uint32_t kMissIndex = std::numeric_limits<std::uint32_t>::max();

struct Pixel {
  int x = 0;
  int y = 0;
  friend bool operator==(const Pixel&, const Pixel&) = default;
  friend auto operator<=>(const Pixel& a, const Pixel& b) {
    return a.y != b.y ? a.y <=> b.y : a.x <=> b.x;
  }
};

template <typename T>
using ImageArray = Eigen::Array<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Per-pixel outputs of `rasterize`. Image arrays are indexed (y, x);
/// per-pixel vectors are rows y * width + x.
struct RasterBuffers {
  int width = 0;
  int height = 0;
  ImageArray<float> depth;                 ///< camera z in meters, +inf on miss
  ImageArray<std::uint32_t> vertex_id;     ///< kMissIndex on miss
  ImageArray<std::uint32_t> face_id;       ///< kMissIndex on miss
  ImageArray<std::uint32_t> label;         ///< kMissIndex on miss or unlabeled mesh
  FeatureMatrix features;                  ///< (H*W) x D, zero on miss
  Eigen::Matrix<float, Eigen::Dynamic, 3, Eigen::RowMajor> normal;  ///< world face normal
  Eigen::Matrix<float, Eigen::Dynamic, 3, Eigen::RowMajor> color;

  bool in_bounds(int x, int y) const { return x >= 0 && y >= 0 && x < width && y < height; }
  bool hit(int x, int y) const { return vertex_id(y, x) != kMissIndex; }
  Eigen::Index row(int x, int y) const { return Eigen::Index{y} * width + x; }
  std::size_t hit_count() const;
};

/// Z-buffered perspective rasterization with one sample per pixel center.
/// Triangles crossing the near plane are clipped; back faces are kept.
RasterBuffers rasterize(const NeuralMesh& mesh, const Camera& camera);

/// Distinct vertex ids under the given pixels (ascending); misses are skipped.
std::vector<VertexIndex> pixels_to_vertices(const RasterBuffers& buffers,
                                            std::span<const Pixel> pixels);

/// 8-bit RGBA preview of the color buffer (misses transparent black).
std::vector<std::uint8_t> color_rgba(const RasterBuffers& buffers);

}  // namespace decomesh

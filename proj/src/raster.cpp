#include "decomesh/raster.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Geometry>

#include "json.hpp"

namespace decomesh {

void Camera::validate() const {
  if (!(fx > 0.0 && fy > 0.0)) throw Error(ErrorCode::kInvalidArgument, "focal lengths must be positive");
  if (width <= 0 || height <= 0) throw Error(ErrorCode::kInvalidArgument, "image size must be positive");
  const Eigen::Matrix3d r = rotation();
  if (((r.transpose() * r) - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > 1e-6) {
    throw Error(ErrorCode::kInvalidArgument, "camera rotation is not orthonormal");
  }
}

Ray Camera::pixel_ray(int x, int y, double t_near, double t_far) const {
  const Vec3 dir_cam((x + 0.5 - cx) / fx, (y + 0.5 - cy) / fy, 1.0);
  return {center(), (rotation() * dir_cam).normalized(), t_near, t_far};
}

Camera Camera::look_at(const Vec3& eye, const Vec3& target, const Vec3& up, int width,
                       int height, double vertical_fov_deg) {
  const Vec3 forward = (target - eye).normalized();
  Vec3 right = forward.cross(up);
  if (right.norm() < 1e-12) right = forward.unitOrthogonal();
  right.normalize();
  const Vec3 down = forward.cross(right);
  Camera cam;
  cam.width = width;
  cam.height = height;
  cam.fy = 0.5 * height / std::tan(0.5 * vertical_fov_deg * std::numbers::pi / 180.0);
  cam.fx = cam.fy;
  cam.cx = 0.5 * width;
  cam.cy = 0.5 * height;
  cam.world_from_camera.setIdentity();
  cam.world_from_camera.block<3, 1>(0, 0) = right;
  cam.world_from_camera.block<3, 1>(0, 1) = down;
  cam.world_from_camera.block<3, 1>(0, 2) = forward;
  cam.world_from_camera.block<3, 1>(0, 3) = eye;
  return cam;
}

namespace {

nlohmann::json camera_json(const Camera& c) {
  std::vector<double> m(16);
  for (int r = 0; r < 4; ++r)
    for (int k = 0; k < 4; ++k) m[r * 4 + k] = c.world_from_camera(r, k);
  return {{"fx", c.fx}, {"fy", c.fy}, {"cx", c.cx}, {"cy", c.cy},
          {"width", c.width}, {"height", c.height}, {"world_from_camera", m}};
}

Camera camera_from(const nlohmann::json& j) {
  Camera c;
  try {
    c.fx = j.at("fx").get<double>();
    c.fy = j.at("fy").get<double>();
    c.cx = j.at("cx").get<double>();
    c.cy = j.at("cy").get<double>();
    c.width = j.at("width").get<int>();
    c.height = j.at("height").get<int>();
    const auto m = j.at("world_from_camera").get<std::vector<double>>();
    if (m.size() != 16) throw Error(ErrorCode::kParseError, "world_from_camera needs 16 values");
    for (int r = 0; r < 4; ++r)
      for (int k = 0; k < 4; ++k) c.world_from_camera(r, k) = m[r * 4 + k];
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParseError, std::string("camera JSON: ") + e.what());
  }
  c.validate();
  return c;
}

}  // namespace

std::string camera_to_json(const Camera& camera) { return camera_json(camera).dump(2); }

Camera parse_camera_json(const std::string& text) {
  try {
    return camera_from(nlohmann::json::parse(text));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParseError, std::string("camera JSON: ") + e.what());
  }
}

std::string cameras_to_json(std::span<const Camera> cameras) {
  nlohmann::json j;
  j["cameras"] = nlohmann::json::array();
  for (const auto& c : cameras) j["cameras"].push_back(camera_json(c));
  return j.dump(2);
}

std::vector<Camera> parse_cameras_json(const std::string& text) {
  std::vector<Camera> out;
  try {
    const auto j = nlohmann::json::parse(text);
    for (const auto& c : j.at("cameras")) out.push_back(camera_from(c));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParseError, std::string("cameras JSON: ") + e.what());
  }
  return out;
}

std::size_t RasterBuffers::hit_count() const {
  return static_cast<std::size_t>((vertex_id != kMissIndex).count());
}

namespace {

constexpr double kNearPlane = 1e-3;

/// Clip-space vertex: camera position plus barycentric weights with respect
/// to the source triangle.
struct ClipVertex {
  Vec3 pos;
  Vec3 bary;
};

int clip_near(const ClipVertex (&in)[3], ClipVertex (&out)[4]) {
  int n = 0;
  for (int i = 0; i < 3; ++i) {
    const ClipVertex& a = in[i];
    const ClipVertex& b = in[(i + 1) % 3];
    const bool a_in = a.pos.z() >= kNearPlane;
    const bool b_in = b.pos.z() >= kNearPlane;
    if (a_in) out[n++] = a;
    if (a_in != b_in) {
      const double s = (kNearPlane - a.pos.z()) / (b.pos.z() - a.pos.z());
      out[n++] = {a.pos + s * (b.pos - a.pos), a.bary + s * (b.bary - a.bary)};
    }
  }
  return n;
}

struct Fragment {
  float depth;
  std::uint32_t face;
  Eigen::Vector3f bary;
};

}  // namespace

RasterBuffers rasterize(const NeuralMesh& mesh, const Camera& camera) {
  camera.validate();
  if (mesh.vertex_count() == 0) throw Error(ErrorCode::kEmptySet, "cannot rasterize an empty mesh");
  const int w = camera.width, h = camera.height;
  const std::size_t npix = std::size_t(w) * h;
  std::vector<Fragment> frags(npix, {std::numeric_limits<float>::infinity(), kMissIndex, Eigen::Vector3f::Zero()});

  const Eigen::Matrix3d rt = camera.rotation().transpose();
  const Vec3 eye = camera.center();
  PositionMatrix cam_pos(mesh.vertex_count(), 3);
  for (Eigen::Index v = 0; v < mesh.vertex_count(); ++v) {
    cam_pos.row(v) = (rt * (mesh.position(static_cast<VertexIndex>(v)) - eye)).transpose();
  }

  for (std::size_t f = 0; f < mesh.face_count(); ++f) {
    const Face& face = mesh.faces()[f];
    const ClipVertex tri[3] = {{cam_pos.row(face[0]).transpose(), Vec3::UnitX()},
                               {cam_pos.row(face[1]).transpose(), Vec3::UnitY()},
                               {cam_pos.row(face[2]).transpose(), Vec3::UnitZ()}};
    if (tri[0].pos.z() < kNearPlane && tri[1].pos.z() < kNearPlane && tri[2].pos.z() < kNearPlane) continue;
    ClipVertex poly[4];
    const int count = clip_near(tri, poly);
    for (int k = 1; k + 1 < count; ++k) {
      const ClipVertex* sub[3] = {&poly[0], &poly[k], &poly[k + 1]};
      Eigen::Vector2d s[3];
      double inv_z[3];
      for (int i = 0; i < 3; ++i) {
        inv_z[i] = 1.0 / sub[i]->pos.z();
        s[i] = {camera.fx * sub[i]->pos.x() * inv_z[i] + camera.cx,
                camera.fy * sub[i]->pos.y() * inv_z[i] + camera.cy};
      }
      const double area = (s[1] - s[0]).x() * (s[2] - s[0]).y() - (s[1] - s[0]).y() * (s[2] - s[0]).x();
      if (area == 0.0 || !std::isfinite(area)) continue;
      const double min_x = std::min({s[0].x(), s[1].x(), s[2].x()});
      const double max_x = std::max({s[0].x(), s[1].x(), s[2].x()});
      const double min_y = std::min({s[0].y(), s[1].y(), s[2].y()});
      const double max_y = std::max({s[0].y(), s[1].y(), s[2].y()});
      const int x0 = std::max(0, static_cast<int>(std::floor(min_x - 0.5)));
      const int x1 = std::min(w - 1, static_cast<int>(std::ceil(max_x - 0.5)));
      const int y0 = std::max(0, static_cast<int>(std::floor(min_y - 0.5)));
      const int y1 = std::min(h - 1, static_cast<int>(std::ceil(max_y - 0.5)));
      for (int y = y0; y <= y1; ++y) {
        for (int x = x0; x <= x1; ++x) {
          const Eigen::Vector2d p(x + 0.5, y + 0.5);
          double lambda[3];
          for (int i = 0; i < 3; ++i) {
            const auto& a = s[(i + 1) % 3];
            const auto& b = s[(i + 2) % 3];
            lambda[i] = ((b - a).x() * (p - a).y() - (b - a).y() * (p - a).x()) / area;
          }
          if (lambda[0] < 0.0 || lambda[1] < 0.0 || lambda[2] < 0.0) continue;
          const double denom = lambda[0] * inv_z[0] + lambda[1] * inv_z[1] + lambda[2] * inv_z[2];
          const double z = 1.0 / denom;
          Fragment& frag = frags[std::size_t(y) * w + x];
          if (!(static_cast<float>(z) < frag.depth)) continue;
          Vec3 bary = Vec3::Zero();
          for (int i = 0; i < 3; ++i) bary += (lambda[i] * inv_z[i] * z) * sub[i]->bary;
          frag = {static_cast<float>(z), static_cast<std::uint32_t>(f), bary.cast<float>()};
        }
      }
    }
  }

  RasterBuffers out;
  out.width = w;
  out.height = h;
  out.depth.resize(h, w);
  out.vertex_id.resize(h, w);
  out.face_id.resize(h, w);
  out.label.resize(h, w);
  out.features = FeatureMatrix::Zero(static_cast<Eigen::Index>(npix), mesh.feature_dim());
  out.normal.setZero(static_cast<Eigen::Index>(npix), 3);
  out.color.setZero(static_cast<Eigen::Index>(npix), 3);

  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const Fragment& frag = frags[std::size_t(y) * w + x];
      out.depth(y, x) = frag.depth;
      out.face_id(y, x) = frag.face;
      if (frag.face == kMissIndex) {
        out.vertex_id(y, x) = kMissIndex;
        out.label(y, x) = kMissIndex;
        continue;
      }
      const Face& face = mesh.faces()[frag.face];
      // Largest barycentric weight; ties go to the lowest vertex index.
      int best = 0;
      for (int i = 1; i < 3; ++i) {
        if (frag.bary[i] > frag.bary[best] ||
            (frag.bary[i] == frag.bary[best] && face[i] < face[best])) {
          best = i;
        }
      }
      const VertexIndex vid = face[best];
      out.vertex_id(y, x) = vid;
      out.label(y, x) = mesh.labels() ? (*mesh.labels())[vid] : kMissIndex;
      const Eigen::Index r = out.row(x, y);
      if (mesh.has_features()) {
        for (int i = 0; i < 3; ++i) out.features.row(r) += frag.bary[i] * mesh.features().row(face[i]);
      }
      const Vec3 a = mesh.position(face[0]), b = mesh.position(face[1]), c = mesh.position(face[2]);
      Vec3 n = (b - a).cross(c - a);
      if (n.norm() > 0.0) n.normalize();
      out.normal.row(r) = n.cast<float>().transpose();
      Eigen::Vector3f base = Eigen::Vector3f::Constant(0.8f);
      if (mesh.colors()) {
        base.setZero();
        for (int i = 0; i < 3; ++i) base += frag.bary[i] * mesh.colors()->row(face[i]).transpose();
      }
      const Vec3 view = camera.pixel_ray(x, y, 0.0, 1.0).direction;
      const float shade = 0.25f + 0.75f * static_cast<float>(std::abs(n.dot(view)));
      out.color.row(r) = (shade * base).transpose();
    }
  }
  return out;
}

std::vector<VertexIndex> pixels_to_vertices(const RasterBuffers& buffers, std::span<const Pixel> pixels) {
  std::vector<VertexIndex> out;
  for (const Pixel& p : pixels) {
    if (!buffers.in_bounds(p.x, p.y)) {
      throw Error(ErrorCode::kInvalidArgument,
                  "pixel (" + std::to_string(p.x) + "," + std::to_string(p.y) + ") outside image");
    }
    if (buffers.hit(p.x, p.y)) out.push_back(buffers.vertex_id(p.y, p.x));
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::vector<std::uint8_t> color_rgba(const RasterBuffers& buffers) {
  std::vector<std::uint8_t> rgba(std::size_t(buffers.width) * buffers.height * 4, 0);
  for (int y = 0; y < buffers.height; ++y) {
    for (int x = 0; x < buffers.width; ++x) {
      if (!buffers.hit(x, y)) continue;
      const auto r = buffers.row(x, y);
      std::uint8_t* px = &rgba[static_cast<std::size_t>(r) * 4];
      for (int c = 0; c < 3; ++c) {
        px[c] = static_cast<std::uint8_t>(std::lround(std::clamp(buffers.color(r, c), 0.0f, 1.0f) * 255.0f));
      }
      px[3] = 255;
    }
  }
  return rgba;
}

}  // namespace decomesh

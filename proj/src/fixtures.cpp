#include "decomesh/fixtures.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <random>
#include <unordered_map>

#include "decomesh/detail/bytes.hpp"
#include "decomesh/detail/mc_tables.hpp"
#include "decomesh/interaction.hpp"
#include "json.hpp"

namespace decomesh {

namespace {

constexpr int kCorner[8][3] = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
                               {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}};
constexpr int kEdgeCorners[12][2] = {{0, 1}, {1, 2}, {2, 3}, {3, 0}, {4, 5}, {5, 6},
                                     {6, 7}, {7, 4}, {0, 4}, {1, 5}, {2, 6}, {3, 7}};

NeuralMesh build_mesh(const std::vector<Vec3>& vertices, const std::vector<Face>& faces) {
  PositionMatrix pos(static_cast<Eigen::Index>(vertices.size()), 3);
  for (std::size_t i = 0; i < vertices.size(); ++i) pos.row(static_cast<Eigen::Index>(i)) = vertices[i].transpose();
  return NeuralMesh(std::move(pos), faces);
}

Vec3 face_normal(const std::vector<Vec3>& v, const Face& f) {
  return (v[f[1]] - v[f[0]]).cross(v[f[2]] - v[f[0]]);
}

/// Deterministic generator with a portable uniform and normal stream.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double normal() {
    if (spare_) {
      const double out = *spare_;
      spare_.reset();
      return out;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * std::numbers::pi * u2);
    return r * std::cos(2.0 * std::numbers::pi * u2);
  }
  Eigen::VectorXd unit_vector(int dim) {
    Eigen::VectorXd v(dim);
    do {
      for (int i = 0; i < dim; ++i) v[i] = normal();
    } while (v.norm() == 0.0);
    return v.normalized();
  }

 private:
  std::mt19937_64 engine_;
  std::optional<double> spare_;
};

}  // namespace

NeuralMesh marching_cubes(const std::function<double(const Vec3&)>& f, const Vec3& lo, const Vec3& hi,
                          double spacing) {
  if (!(spacing > 0.0)) throw Error(ErrorCode::kInvalidArgument, "grid spacing must be positive");
  if (!((hi - lo).minCoeff() > 0.0)) throw Error(ErrorCode::kInvalidArgument, "grid box is empty");
  const Eigen::Vector3i cells = ((hi - lo) / spacing).array().ceil().cast<int>().cwiseMax(1);
  const Eigen::Vector3i nodes = cells.array() + 1;
  auto node_id = [&](int i, int j, int k) {
    return static_cast<std::uint64_t>(i) +
           static_cast<std::uint64_t>(nodes.x()) * (static_cast<std::uint64_t>(j) + static_cast<std::uint64_t>(nodes.y()) * k);
  };
  auto node_pos = [&](int i, int j, int k) { return Vec3(lo + spacing * Vec3(i, j, k)); };

  std::vector<double> values(static_cast<std::size_t>(nodes.prod()));
  for (int k = 0; k < nodes.z(); ++k)
    for (int j = 0; j < nodes.y(); ++j)
      for (int i = 0; i < nodes.x(); ++i) {
        double v = f(node_pos(i, j, k));
        if (v == 0.0) v = 1e-12;
        values[node_id(i, j, k)] = v;
      }

  std::vector<Vec3> vertices;
  std::vector<Face> faces;
  std::unordered_map<std::uint64_t, std::uint32_t> welded;
  for (int k = 0; k < cells.z(); ++k) {
    for (int j = 0; j < cells.y(); ++j) {
      for (int i = 0; i < cells.x(); ++i) {
        std::uint64_t ids[8];
        double val[8];
        int cube = 0;
        for (int c = 0; c < 8; ++c) {
          ids[c] = node_id(i + kCorner[c][0], j + kCorner[c][1], k + kCorner[c][2]);
          val[c] = values[ids[c]];
          if (val[c] < 0.0) cube |= 1 << c;
        }
        if (detail::kMcEdgeTable[cube] == 0) continue;
        std::uint32_t edge_vertex[12];
        for (int e = 0; e < 12; ++e) {
          if (!(detail::kMcEdgeTable[cube] & (1 << e))) continue;
          const int a = kEdgeCorners[e][0], b = kEdgeCorners[e][1];
          const std::uint64_t key = std::min(ids[a], ids[b]) * 3 +
                                    (kCorner[a][0] != kCorner[b][0] ? 0 : kCorner[a][1] != kCorner[b][1] ? 1 : 2);
          auto [it, inserted] = welded.try_emplace(key, static_cast<std::uint32_t>(vertices.size()));
          if (inserted) {
            const double t = std::clamp(val[a] / (val[a] - val[b]), 1e-4, 1.0 - 1e-4);
            const Vec3 pa = node_pos(i + kCorner[a][0], j + kCorner[a][1], k + kCorner[a][2]);
            const Vec3 pb = node_pos(i + kCorner[b][0], j + kCorner[b][1], k + kCorner[b][2]);
            vertices.push_back(pa + t * (pb - pa));
          }
          edge_vertex[e] = it->second;
        }
        for (int n = 0; detail::kMcTriTable[cube][n] != -1; n += 3) {
          faces.push_back({edge_vertex[detail::kMcTriTable[cube][n]], edge_vertex[detail::kMcTriTable[cube][n + 1]],
                           edge_vertex[detail::kMcTriTable[cube][n + 2]]});
        }
      }
    }
  }
  if (faces.empty()) throw Error(ErrorCode::kEmptySet, "the zero level set does not cross the grid");

  double agreement = 0.0;
  for (const auto& face : faces) {
    const Vec3 centroid = (vertices[face[0]] + vertices[face[1]] + vertices[face[2]]) / 3.0;
    agreement += face_normal(vertices, face).dot(sdf_gradient(f, centroid, 1e-3 * spacing));
  }
  if (agreement < 0.0) {
    for (auto& face : faces) std::swap(face[1], face[2]);
  }
  return build_mesh(vertices, faces);
}

NeuralMesh icosphere(const Vec3& center, double radius, int subdivisions) {
  if (!(radius > 0.0) || subdivisions < 0) throw Error(ErrorCode::kInvalidArgument, "invalid icosphere");
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Vec3> v = {{-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
                         {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
  for (auto& p : v) p.normalize();
  std::vector<Face> faces = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
                             {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
                             {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
                             {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};
  for (int s = 0; s < subdivisions; ++s) {
    std::map<std::pair<std::uint32_t, std::uint32_t>, std::uint32_t> midpoint;
    auto mid = [&](std::uint32_t a, std::uint32_t b) {
      const auto key = std::minmax(a, b);
      auto [it, inserted] = midpoint.try_emplace(key, static_cast<std::uint32_t>(v.size()));
      if (inserted) v.push_back((v[a] + v[b]).normalized());
      return it->second;
    };
    std::vector<Face> next;
    next.reserve(faces.size() * 4);
    for (const auto& f : faces) {
      const auto ab = mid(f[0], f[1]), bc = mid(f[1], f[2]), ca = mid(f[2], f[0]);
      next.push_back({f[0], ab, ca});
      next.push_back({f[1], bc, ab});
      next.push_back({f[2], ca, bc});
      next.push_back({ab, bc, ca});
    }
    faces = std::move(next);
  }
  for (auto& f : faces) {
    if (face_normal(v, f).dot(v[f[0]] + v[f[1]] + v[f[2]]) < 0.0) std::swap(f[1], f[2]);
  }
  for (auto& p : v) p = center + radius * p;
  return build_mesh(v, faces);
}

NeuralMesh room_mesh(const Vec3& lo, const Vec3& hi, int cells) {
  if (cells < 1 || !((hi - lo).minCoeff() > 0.0)) throw Error(ErrorCode::kInvalidArgument, "invalid room box");
  std::vector<Vec3> v;
  std::vector<Face> faces;
  for (int axis = 0; axis < 3; ++axis) {
    for (int side = 0; side < 2; ++side) {
      const int u_axis = (axis + 1) % 3, w_axis = (axis + 2) % 3;
      Vec3 origin = lo;
      origin[axis] = side ? hi[axis] : lo[axis];
      Vec3 du = Vec3::Zero(), dw = Vec3::Zero();
      du[u_axis] = (hi[u_axis] - lo[u_axis]) / cells;
      dw[w_axis] = (hi[w_axis] - lo[w_axis]) / cells;
      const auto base = static_cast<std::uint32_t>(v.size());
      for (int j = 0; j <= cells; ++j)
        for (int i = 0; i <= cells; ++i) v.push_back(origin + i * du + j * dw);
      Vec3 inward = Vec3::Zero();
      inward[axis] = side ? -1.0 : 1.0;
      const bool flip = du.cross(dw).dot(inward) < 0.0;
      auto id = [&](int i, int j) { return base + static_cast<std::uint32_t>(j * (cells + 1) + i); };
      for (int j = 0; j < cells; ++j) {
        for (int i = 0; i < cells; ++i) {
          Face a{id(i, j), id(i + 1, j), id(i + 1, j + 1)};
          Face b{id(i, j), id(i + 1, j + 1), id(i, j + 1)};
          if (flip) {
            std::swap(a[1], a[2]);
            std::swap(b[1], b[2]);
          }
          faces.push_back(a);
          faces.push_back(b);
        }
      }
    }
  }
  return build_mesh(v, faces);
}

void FixtureSpec::validate() const {
  if (objects.empty()) throw Error(ErrorCode::kInvalidArgument, "fixture needs at least one object");
  if (feature_dim < 1) throw Error(ErrorCode::kInvalidArgument, "feature_dim must be >= 1");
  if (!(feature_noise >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "feature_noise must be >= 0");
  if (resolution < 4) throw Error(ErrorCode::kInvalidArgument, "resolution must be >= 4");
  if (room_cells < 1) throw Error(ErrorCode::kInvalidArgument, "room_cells must be >= 1");
  if (cameras.count < 1 || cameras.width < 1 || cameras.height_px < 1 || !(cameras.radius > 0.0) ||
      !(cameras.vertical_fov_deg > 0.0 && cameras.vertical_fov_deg < 180.0)) {
    throw Error(ErrorCode::kInvalidArgument, "invalid camera ring");
  }
  if (room && !(room->minCoeff() > 0.0)) throw Error(ErrorCode::kInvalidArgument, "room size must be positive");
  std::vector<std::uint32_t> ids;
  for (std::size_t i = 0; i < objects.size(); ++i) {
    const auto& o = objects[i];
    if (std::holds_alternative<Plane>(o.shape)) {
      throw Error(ErrorCode::kInvalidArgument, "foreground objects must be spheres or boxes");
    }
    if (o.id == 0) throw Error(ErrorCode::kInvalidArgument, "object id 0 is reserved for the background");
    ids.push_back(o.id);
    const auto earlier = [&](int ref) { return ref >= 0 && static_cast<std::size_t>(ref) < i; };
    if (o.share_prototype >= 0 && !earlier(o.share_prototype)) {
      throw Error(ErrorCode::kInvalidArgument, "share_prototype must reference an earlier object");
    }
    if (o.correlate_with >= 0 && (!earlier(o.correlate_with) || !(std::abs(o.correlation) <= 1.0))) {
      throw Error(ErrorCode::kInvalidArgument, "correlate_with must reference an earlier object with |correlation| <= 1");
    }
  }
  std::sort(ids.begin(), ids.end());
  if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) {
    throw Error(ErrorCode::kInvalidArgument, "object ids must be unique");
  }
  if (!(max_prototype_cosine > 0.0 && max_prototype_cosine <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "max_prototype_cosine must lie in (0, 1]");
  }
}

namespace {

using nlohmann::json;
using ojson = nlohmann::ordered_json;

Vec3 vec3_from(const json& j) {
  const auto v = j.get<std::vector<double>>();
  if (v.size() != 3) throw Error(ErrorCode::kParseError, "expected a 3-vector");
  return {v[0], v[1], v[2]};
}

std::vector<double> vec3_to(const Vec3& v) { return {v.x(), v.y(), v.z()}; }

void bounds_of(const Shape& shape, Vec3& lo, Vec3& hi) {
  if (const auto* s = std::get_if<Sphere>(&shape)) {
    lo = s->center.array() - s->radius;
    hi = s->center.array() + s->radius;
  } else {
    const auto& b = std::get<Box>(shape);
    lo = b.center - b.half_extents;
    hi = b.center + b.half_extents;
  }
}

}  // namespace

FixtureSpec parse_fixture_spec_json(const std::string& text) {
  FixtureSpec spec;
  try {
    const auto j = json::parse(text);
    spec.name = j.value("name", spec.name);
    for (const auto& o : j.at("objects")) {
      FixtureObject obj;
      const auto type = o.at("type").get<std::string>();
      if (type == "sphere") {
        obj.shape = Sphere{vec3_from(o.at("center")), o.at("radius").get<double>()};
      } else if (type == "box") {
        obj.shape = Box{vec3_from(o.at("center")), vec3_from(o.at("half_extents"))};
      } else {
        throw Error(ErrorCode::kParseError, "unknown object type '" + type + "'");
      }
      obj.id = o.at("id").get<std::uint32_t>();
      if (o.contains("color")) obj.color = vec3_from(o.at("color"));
      obj.share_prototype = o.value("share_prototype", -1);
      obj.correlate_with = o.value("correlate_with", -1);
      obj.correlation = o.value("correlation", 0.0);
      spec.objects.push_back(std::move(obj));
    }
    if (j.contains("room") && !j.at("room").is_null()) spec.room = vec3_from(j.at("room"));
    spec.room_cells = j.value("room_cells", spec.room_cells);
    spec.feature_dim = j.value("feature_dim", spec.feature_dim);
    spec.feature_noise = j.value("feature_noise", spec.feature_noise);
    spec.resolution = j.value("resolution", spec.resolution);
    spec.seed = j.value("seed", spec.seed);
    spec.disjoint = j.value("disjoint", spec.disjoint);
    spec.max_prototype_cosine = j.value("max_prototype_cosine", spec.max_prototype_cosine);
    if (j.contains("cameras")) {
      const auto& c = j.at("cameras");
      auto& r = spec.cameras;
      r.count = c.value("count", r.count);
      r.radius = c.value("radius", r.radius);
      r.height = c.value("height", r.height);
      if (c.contains("target") && !c.at("target").is_null()) r.target = vec3_from(c.at("target"));
      r.width = c.value("width", r.width);
      r.height_px = c.value("height_px", r.height_px);
      r.vertical_fov_deg = c.value("vertical_fov_deg", r.vertical_fov_deg);
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParseError, std::string("fixture spec: ") + e.what());
  }
  spec.validate();
  return spec;
}

std::string fixture_spec_to_json(const FixtureSpec& spec) {
  ojson j;
  j["name"] = spec.name;
  j["objects"] = ojson::array();
  for (const auto& o : spec.objects) {
    ojson e;
    if (const auto* s = std::get_if<Sphere>(&o.shape)) {
      e["type"] = "sphere";
      e["center"] = vec3_to(s->center);
      e["radius"] = s->radius;
    } else if (const auto* b = std::get_if<Box>(&o.shape)) {
      e["type"] = "box";
      e["center"] = vec3_to(b->center);
      e["half_extents"] = vec3_to(b->half_extents);
    }
    e["id"] = o.id;
    e["color"] = vec3_to(o.color);
    if (o.share_prototype >= 0) e["share_prototype"] = o.share_prototype;
    if (o.correlate_with >= 0) {
      e["correlate_with"] = o.correlate_with;
      e["correlation"] = o.correlation;
    }
    j["objects"].push_back(e);
  }
  j["room"] = spec.room ? ojson(vec3_to(*spec.room)) : ojson(nullptr);
  j["room_cells"] = spec.room_cells;
  j["feature_dim"] = spec.feature_dim;
  j["feature_noise"] = spec.feature_noise;
  j["resolution"] = spec.resolution;
  ojson cams{{"count", spec.cameras.count},
             {"radius", spec.cameras.radius},
             {"height", spec.cameras.height},
             {"target", spec.cameras.target ? ojson(vec3_to(*spec.cameras.target)) : ojson(nullptr)},
             {"width", spec.cameras.width},
             {"height_px", spec.cameras.height_px},
             {"vertical_fov_deg", spec.cameras.vertical_fov_deg}};
  j["cameras"] = cams;
  j["seed"] = spec.seed;
  j["disjoint"] = spec.disjoint;
  j["max_prototype_cosine"] = spec.max_prototype_cosine;
  return j.dump(2);
}

namespace {

bool independent(const FixtureObject& o) { return o.share_prototype < 0 && o.correlate_with < 0; }

/// Row 0 background, row k + 1 object k. Returns false when two independent
/// prototypes are too similar.
bool draw_prototypes(const FixtureSpec& spec, std::uint64_t seed, Eigen::MatrixXd& out) {
  Rng rng(seed);
  const int d = spec.feature_dim;
  out.resize(static_cast<Eigen::Index>(spec.objects.size()) + 1, d);
  out.row(0) = rng.unit_vector(d).transpose();
  for (std::size_t i = 0; i < spec.objects.size(); ++i) {
    const auto& o = spec.objects[i];
    const auto row = static_cast<Eigen::Index>(i) + 1;
    if (o.share_prototype >= 0) {
      out.row(row) = out.row(o.share_prototype + 1);
    } else if (o.correlate_with >= 0) {
      const Eigen::VectorXd ref = out.row(o.correlate_with + 1).transpose();
      Eigen::VectorXd perp = rng.unit_vector(d);
      perp -= perp.dot(ref) * ref;
      if (perp.norm() < 1e-9) return false;
      perp.normalize();
      const double c = o.correlation;
      out.row(row) = (c * ref + std::sqrt(std::max(0.0, 1.0 - c * c)) * perp).transpose();
    } else {
      out.row(row) = rng.unit_vector(d).transpose();
    }
  }
  std::vector<Eigen::Index> free_rows{0};
  for (std::size_t i = 0; i < spec.objects.size(); ++i)
    if (independent(spec.objects[i])) free_rows.push_back(static_cast<Eigen::Index>(i) + 1);
  for (std::size_t a = 0; a < free_rows.size(); ++a)
    for (std::size_t b = a + 1; b < free_rows.size(); ++b)
      if (std::abs(out.row(free_rows[a]).dot(out.row(free_rows[b]))) >= spec.max_prototype_cosine) return false;
  return true;
}

FeatureMatrix noisy_features(const Eigen::MatrixXd& prototypes, const std::vector<Eigen::Index>& rows,
                             double sigma, Rng& rng) {
  FeatureMatrix out(static_cast<Eigen::Index>(rows.size()), prototypes.cols());
  for (std::size_t v = 0; v < rows.size(); ++v) {
    Eigen::VectorXd f = prototypes.row(rows[v]).transpose();
    if (sigma > 0.0) {
      for (Eigen::Index k = 0; k < f.size(); ++k) f[k] += sigma * rng.normal();
      f.normalize();
    }
    out.row(static_cast<Eigen::Index>(v)) = f.cast<float>().transpose();
  }
  return out;
}

ColorMatrix color_rows(const std::vector<Vec3>& colors) {
  ColorMatrix out(static_cast<Eigen::Index>(colors.size()), 3);
  for (std::size_t i = 0; i < colors.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = colors[i].transpose().cast<float>();
  return out;
}

std::vector<Primitive> room_planes(const Vec3& size, const Eigen::VectorXd& feature) {
  const double hx = 0.5 * size.x(), hy = 0.5 * size.y();
  std::vector<Primitive> out;
  auto add = [&](Vec3 normal, double offset, int cls) {
    Primitive p;
    p.shape = Plane{normal, offset};
    p.class_id = cls;
    p.object_id = 0;
    p.color = Vec3::Constant(0.6);
    p.feature = feature;
    out.push_back(std::move(p));
  };
  add(Vec3(0, 0, 1), 0.0, kClassFloor);
  add(Vec3(0, 0, -1), -size.z(), kClassCeiling);
  add(Vec3(1, 0, 0), -hx, kClassWall);
  add(Vec3(-1, 0, 0), -hx, kClassWall);
  add(Vec3(0, 1, 0), -hy, kClassWall);
  add(Vec3(0, -1, 0), -hy, kClassWall);
  return out;
}

}  // namespace

FixtureBundle generate(const FixtureSpec& spec) {
  spec.validate();
  FixtureBundle bundle;
  bundle.spec = spec;

  constexpr int kMaxSeedAttempts = 1000;
  std::uint64_t seed = spec.seed;
  bool ok = draw_prototypes(spec, seed, bundle.prototypes);
  for (int attempt = 1; attempt < kMaxSeedAttempts && !ok; ++attempt) {
    ok = draw_prototypes(spec, ++seed, bundle.prototypes);
  }
  if (!ok) throw Error(ErrorCode::kInvalidArgument, "no seed satisfies the prototype separation bound");
  bundle.seed_used = seed;

  std::vector<Primitive> fg;
  for (std::size_t i = 0; i < spec.objects.size(); ++i) {
    const auto& o = spec.objects[i];
    Primitive p;
    p.shape = o.shape;
    p.class_id = kClassObject;
    p.object_id = o.id;
    p.color = o.color;
    p.feature = bundle.prototypes.row(static_cast<Eigen::Index>(i) + 1).transpose();
    fg.push_back(std::move(p));
  }
  bundle.scene.foreground = SdfField(fg);
  if (spec.room) bundle.scene.background = SdfField(room_planes(*spec.room, bundle.prototypes.row(0).transpose()));
  bundle.scene.feature_dim = spec.feature_dim;
  bundle.scene.validate();

  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity()), hi = -lo;
  for (const auto& o : spec.objects) {
    Vec3 a, b;
    bounds_of(o.shape, a, b);
    lo = lo.cwiseMin(a);
    hi = hi.cwiseMax(b);
  }
  const double spacing = (hi - lo).maxCoeff() / spec.resolution;
  const Vec3 pad = Vec3::Constant(2.0 * spacing);

  if (spec.disjoint) {
    const Eigen::Vector3i n = ((hi - lo) / spacing).array().ceil().cast<int>() + 1;
    for (int k = 0; k < n.z(); ++k)
      for (int j = 0; j < n.y(); ++j)
        for (int i = 0; i < n.x(); ++i) {
          const Vec3 p = lo + spacing * Vec3(i, j, k);
          int inside = 0;
          for (const auto& prim : fg) inside += prim.distance(p) < 0.0;
          if (inside > 1) throw Error(ErrorCode::kInvalidArgument, "objects overlap but the spec is flagged disjoint");
          if (inside == 1 && spec.room && !(bundle.scene.background(p) > 0.0)) {
            throw Error(ErrorCode::kInvalidArgument, "object leaves the room but the spec is flagged disjoint");
          }
        }
  }

  const SdfField& fg_field = bundle.scene.foreground;
  NeuralMesh fg_mesh = marching_cubes([&](const Vec3& p) { return fg_field(p); }, lo - pad, hi + pad, spacing);

  Rng noise(bundle.seed_used ^ 0x9E3779B97F4A7C15ull);
  const auto nv = static_cast<std::size_t>(fg_mesh.vertex_count());
  std::vector<std::uint32_t> labels(nv);
  std::vector<Eigen::Index> proto_rows(nv);
  std::vector<Vec3> colors(nv);
  for (std::size_t v = 0; v < nv; ++v) {
    const auto nearest = fg_field.nearest(fg_mesh.position(static_cast<VertexIndex>(v)));
    labels[v] = spec.objects[nearest.index].id;
    proto_rows[v] = static_cast<Eigen::Index>(nearest.index) + 1;
    colors[v] = spec.objects[nearest.index].color;
  }
  bundle.foreground = fg_mesh.with_features(noisy_features(bundle.prototypes, proto_rows, spec.feature_noise, noise))
                          .with_labels(labels)
                          .with_colors(color_rows(colors));

  for (const auto& prim : fg) {
    Vec3 a, b;
    bounds_of(prim.shape, a, b);
    bundle.object_meshes.push_back(
        marching_cubes([&](const Vec3& p) { return prim.distance(p); }, a - pad, b + pad, spacing));
  }

  if (spec.room) {
    const Vec3 room_lo(-0.5 * spec.room->x(), -0.5 * spec.room->y(), 0.0);
    const Vec3 room_hi(0.5 * spec.room->x(), 0.5 * spec.room->y(), spec.room->z());
    NeuralMesh bg = room_mesh(room_lo, room_hi, spec.room_cells);
    const auto nb = static_cast<std::size_t>(bg.vertex_count());
    bundle.background = bg.with_features(noisy_features(bundle.prototypes, std::vector<Eigen::Index>(nb, 0),
                                                        spec.feature_noise, noise))
                            .with_labels(std::vector<std::uint32_t>(nb, 0))
                            .with_colors(color_rows(std::vector<Vec3>(nb, Vec3::Constant(0.6))));
  }

  const auto& ring = spec.cameras;
  const Vec3 target = ring.target.value_or(0.5 * (lo + hi));
  for (int c = 0; c < ring.count; ++c) {
    const double angle = 2.0 * std::numbers::pi * c / ring.count;
    const Vec3 eye(target.x() + ring.radius * std::cos(angle), target.y() + ring.radius * std::sin(angle),
                   ring.height);
    if (spec.room && !(bundle.scene.background(eye) > 0.0)) {
      throw Error(ErrorCode::kInvalidArgument, "camera " + std::to_string(c) + " lies outside the room");
    }
    Camera cam = Camera::look_at(eye, target, Vec3::UnitZ(), ring.width, ring.height_px, ring.vertical_fov_deg);
    const RasterBuffers buffers = rasterize(bundle.foreground, cam);
    if (buffers.hit_count() == 0) {
      throw Error(ErrorCode::kInvalidArgument, "camera " + std::to_string(c) + " sees no foreground object");
    }
    bundle.cameras.push_back(cam);
    bundle.view_labels.push_back(buffers.label);
  }
  return bundle;
}

std::filesystem::path write_bundle(const FixtureBundle& bundle, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir / "objects", ec);
  fs::create_directories(dir / "masks", ec);
  if (ec) throw Error(ErrorCode::kIoError, "cannot create " + dir.string() + ": " + ec.message());

  detail::write_text_file(dir / "scene.json", scene_to_json(bundle.scene));
  detail::write_text_file(dir / "spec.json", fixture_spec_to_json(bundle.spec));
  save_mesh_with_sidecars(dir / "foreground.ply", bundle.foreground);
  if (bundle.background.vertex_count() > 0) save_mesh_with_sidecars(dir / "background.ply", bundle.background);
  detail::write_text_file(dir / "cameras.json", cameras_to_json(bundle.cameras));

  ojson manifest;
  manifest["name"] = bundle.spec.name;
  manifest["seed"] = bundle.seed_used;
  manifest["scene"] = "scene.json";
  manifest["spec"] = "spec.json";
  manifest["fg_mesh"] = "foreground.ply";
  manifest["bg_mesh"] = bundle.background.vertex_count() > 0 ? ojson("background.ply") : ojson(nullptr);
  manifest["cameras"] = "cameras.json";
  manifest["mean_edge_length"] = bundle.foreground.mean_edge_length();
  manifest["objects"] = ojson::array();
  for (std::size_t i = 0; i < bundle.object_meshes.size(); ++i) {
    const auto id = bundle.spec.objects[i].id;
    const std::string rel = "objects/object_" + std::to_string(id) + ".ply";
    save_mesh(dir / rel, bundle.object_meshes[i]);
    manifest["objects"].push_back({{"id", id}, {"mesh", rel}});
  }
  manifest["masks"] = ojson::array();
  for (std::size_t v = 0; v < bundle.view_labels.size(); ++v) {
    const auto& labels = bundle.view_labels[v];
    Rgba8Image img{static_cast<int>(labels.cols()), static_cast<int>(labels.rows()), {}};
    img.pixels.resize(std::size_t(labels.size()) * 4);
    for (Eigen::Index i = 0; i < labels.size(); ++i) {
      const std::uint32_t l = labels.data()[i];
      const std::uint8_t value = l == kMissIndex ? 0 : static_cast<std::uint8_t>(std::min<std::uint32_t>(l, 255));
      img.pixels[4 * i] = img.pixels[4 * i + 1] = img.pixels[4 * i + 2] = value;
      img.pixels[4 * i + 3] = 255;
    }
    const std::string rel = "masks/view_" + std::to_string(v) + ".png";
    write_png(dir / rel, img);
    manifest["masks"].push_back(rel);
  }
  const fs::path path = dir / "manifest.json";
  detail::write_text_file(path, manifest.dump(2));
  return path;
}

FixtureSpec two_spheres_spec(double feature_noise, std::uint64_t seed) {
  FixtureSpec spec;
  spec.name = "two_spheres";
  spec.objects.push_back({Sphere{Vec3(-0.55, 0.0, 0.5), 0.35}, 1, Vec3(0.85, 0.3, 0.25)});
  spec.objects.push_back({Sphere{Vec3(0.55, 0.0, 0.5), 0.35}, 2, Vec3(0.25, 0.45, 0.85)});
  spec.room = Vec3(4.0, 4.0, 3.0);
  spec.feature_noise = feature_noise;
  spec.resolution = 40;
  spec.cameras = {8, 1.8, 1.2, Vec3(0.0, 0.0, 0.5), 128, 96, 60.0};
  spec.seed = seed;
  return spec;
}

FixtureSpec adjacent_twins_spec(double feature_noise, std::uint64_t seed) {
  FixtureSpec spec;
  spec.name = "adjacent_twins";
  spec.objects.push_back({Sphere{Vec3(0.0, 0.0, 0.77), 0.25}, 1, Vec3(0.85, 0.3, 0.25)});
  FixtureObject table{Box{Vec3(0.0, 0.0, 0.3), Vec3(0.4, 0.4, 0.3)}, 2, Vec3(0.55, 0.4, 0.3)};
  table.correlate_with = 0;
  table.correlation = 0.7;
  spec.objects.push_back(table);
  FixtureObject twin{Sphere{Vec3(1.3, 0.0, 0.25), 0.25}, 3, Vec3(0.85, 0.3, 0.25)};
  twin.share_prototype = 0;
  spec.objects.push_back(twin);
  spec.room = Vec3(7.0, 7.0, 3.0);
  spec.feature_noise = feature_noise;
  spec.resolution = 48;
  spec.disjoint = false;
  spec.cameras = {8, 2.6, 1.3, Vec3(0.5, 0.0, 0.45), 160, 120, 55.0};
  spec.seed = seed;
  return spec;
}

}  // namespace decomesh

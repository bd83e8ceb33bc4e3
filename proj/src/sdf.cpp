#include "decomesh/sdf.hpp"

#include "json.hpp"

#include "decomesh/detail/bytes.hpp"

namespace decomesh {

namespace {

struct DistanceVisitor {
  Vec3 p;
  double operator()(const Sphere& s) const { return sdf::sphere<double>(p, s.center, s.radius); }
  double operator()(const Box& b) const { return sdf::box<double>(p, b.center, b.half_extents); }
  double operator()(const Plane& pl) const { return sdf::plane<double>(p, pl.normal, pl.offset); }
};

struct GradientVisitor {
  Vec3 p;
  Vec3 operator()(const Sphere& s) const {
    const Vec3 r = p - s.center;
    const double n = r.norm();
    return n > 0.0 ? Vec3(r / n) : Vec3::UnitZ();
  }
  Vec3 operator()(const Box& b) const {
    const Vec3 local = p - b.center;
    const Vec3 q = local.cwiseAbs() - b.half_extents;
    const Vec3 sign = local.unaryExpr([](double x) { return x < 0.0 ? -1.0 : 1.0; });
    if (q.maxCoeff() > 0.0) {
      const Vec3 outside = q.cwiseMax(0.0);
      return Vec3(outside.cwiseProduct(sign) / outside.norm());
    }
    Eigen::Index axis = 0;
    q.maxCoeff(&axis);
    Vec3 g = Vec3::Zero();
    g[axis] = sign[axis];
    return g;
  }
  Vec3 operator()(const Plane& pl) const { return pl.normal; }
};

}  // namespace

double Primitive::distance(const Vec3& p) const {
  return std::visit(DistanceVisitor{p - translation}, shape);
}

Vec3 Primitive::gradient(const Vec3& p) const {
  return std::visit(GradientVisitor{p - translation}, shape);
}

SdfField::Nearest SdfField::nearest(const Vec3& p) const {
  Nearest best;
  for (std::size_t i = 0; i < primitives_.size(); ++i) {
    const double d = primitives_[i].distance(p);
    if (d < best.distance) best = {d, i};
  }
  return best;
}

Vec3 SdfField::analytic_gradient(const Vec3& p) const {
  if (primitives_.empty()) return Vec3::Zero();
  return primitives_[nearest(p).index].gradient(p);
}

SdfField translated(const SdfField& field, const Vec3& offset) {
  auto primitives = field.primitives();
  for (auto& prim : primitives) prim.translation += offset;
  return SdfField(std::move(primitives));
}

double ComposedScene::operator()(const Vec3& p) const { return scene_sdf(*this, p).distance; }

void ComposedScene::validate() const {
  if (!(beta > 0.0)) throw Error(ErrorCode::kInvalidArgument, "beta must be positive");
  if (num_classes < 1) throw Error(ErrorCode::kInvalidArgument, "num_classes must be >= 1");
  for (const SdfField* field : {&foreground, &background}) {
    for (const auto& prim : field->primitives()) {
      if (prim.class_id < 0 || prim.class_id >= num_classes) {
        throw Error(ErrorCode::kInvalidArgument,
                    "primitive class " + std::to_string(prim.class_id) + " outside [0, num_classes)");
      }
      if (feature_dim > 0 && prim.feature.size() != 0 && prim.feature.size() != feature_dim) {
        throw Error(ErrorCode::kDimMismatch, "primitive feature has wrong dimension");
      }
    }
  }
}

SceneSample scene_sdf(const ComposedScene& scene, const Vec3& p) {
  const auto fg = scene.foreground.nearest(p);
  const auto bg = scene.background.nearest(p);
  if (fg.distance <= bg.distance) return {fg.distance, FieldTag::kForeground, fg.index};
  return {bg.distance, FieldTag::kBackground, bg.index};
}

const Primitive& nearest_primitive(const ComposedScene& scene, const Vec3& p) {
  const SceneSample s = scene_sdf(scene, p);
  const SdfField& field = s.field == FieldTag::kForeground ? scene.foreground : scene.background;
  if (field.empty()) throw Error(ErrorCode::kInvalidArgument, "scene has no primitives");
  return field.primitives()[s.primitive];
}

int semantic_query(const ComposedScene& scene, const Vec3& p) {
  return nearest_primitive(scene, p).class_id;
}

// ---------------------------------------------------------------------------
// JSON

namespace {

using nlohmann::json;

Vec3 vec3_from(const json& j, const char* key) {
  const auto& a = j.at(key);
  if (!a.is_array() || a.size() != 3) {
    throw Error(ErrorCode::kParseError, std::string("'") + key + "' must be a 3-vector");
  }
  return {a[0].get<double>(), a[1].get<double>(), a[2].get<double>()};
}

json to_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

Primitive primitive_from(const json& j) {
  Primitive prim;
  const auto type = j.at("type").get<std::string>();
  if (type == "sphere") {
    prim.shape = Sphere{vec3_from(j, "center"), j.at("radius").get<double>()};
  } else if (type == "box") {
    prim.shape = Box{vec3_from(j, "center"), vec3_from(j, "half_extents")};
  } else if (type == "plane") {
    Vec3 n = vec3_from(j, "normal");
    if (n.norm() == 0.0) throw Error(ErrorCode::kParseError, "plane normal must be non-zero");
    prim.shape = Plane{n.normalized(), j.at("offset").get<double>()};
  } else {
    throw Error(ErrorCode::kParseError, "unknown primitive type '" + type + "'");
  }
  if (j.contains("translation")) prim.translation = vec3_from(j, "translation");
  prim.class_id = j.value("class", kClassOther);
  prim.object_id = j.value("object_id", 0u);
  if (j.contains("color")) prim.color = vec3_from(j, "color");
  if (j.contains("feature")) {
    const auto f = j.at("feature").get<std::vector<double>>();
    prim.feature = Eigen::Map<const Eigen::VectorXd>(f.data(), static_cast<Eigen::Index>(f.size()));
  }
  return prim;
}

json primitive_to_json(const Primitive& prim, FieldTag tag) {
  json j;
  j["field"] = to_string(tag);
  std::visit(
      [&](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, Sphere>) {
          j["type"] = "sphere";
          j["center"] = to_json(s.center);
          j["radius"] = s.radius;
        } else if constexpr (std::is_same_v<T, Box>) {
          j["type"] = "box";
          j["center"] = to_json(s.center);
          j["half_extents"] = to_json(s.half_extents);
        } else {
          j["type"] = "plane";
          j["normal"] = to_json(s.normal);
          j["offset"] = s.offset;
        }
      },
      prim.shape);
  if (!prim.translation.isZero()) j["translation"] = to_json(prim.translation);
  j["class"] = prim.class_id;
  j["object_id"] = prim.object_id;
  j["color"] = to_json(prim.color);
  if (prim.feature.size() > 0) {
    j["feature"] = std::vector<double>(prim.feature.data(), prim.feature.data() + prim.feature.size());
  }
  return j;
}

}  // namespace

ComposedScene parse_scene_json(const std::string& text) {
  ComposedScene scene;
  try {
    const json j = json::parse(text);
    if (j.contains("params")) {
      const auto& params = j.at("params");
      scene.beta = params.value("beta", kDefaultBeta);
      scene.num_classes = params.value("num_classes", scene.num_classes);
      scene.feature_dim = params.value("feature_dim", 0);
    }
    std::vector<Primitive> fg, bg;
    for (const auto& pj : j.at("primitives")) {
      const auto tag = pj.at("field").get<std::string>();
      if (tag == "foreground") {
        fg.push_back(primitive_from(pj));
      } else if (tag == "background") {
        bg.push_back(primitive_from(pj));
      } else {
        throw Error(ErrorCode::kParseError, "field must be 'foreground' or 'background'");
      }
    }
    scene.foreground = SdfField(std::move(fg));
    scene.background = SdfField(std::move(bg));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParseError, std::string("scene JSON: ") + e.what());
  }
  scene.validate();
  return scene;
}

std::string scene_to_json(const ComposedScene& scene) {
  json j;
  j["version"] = 1;
  j["params"] = {{"beta", scene.beta},
                 {"num_classes", scene.num_classes},
                 {"feature_dim", scene.feature_dim}};
  j["primitives"] = json::array();
  for (const auto& p : scene.foreground.primitives()) j["primitives"].push_back(primitive_to_json(p, FieldTag::kForeground));
  for (const auto& p : scene.background.primitives()) j["primitives"].push_back(primitive_to_json(p, FieldTag::kBackground));
  return j.dump(2);
}

ComposedScene load_scene(const std::string& path) {
  return parse_scene_json(detail::read_text_file(path));
}

}  // namespace decomesh

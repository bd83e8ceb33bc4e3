#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "decomesh/error.hpp"

namespace decomesh {

using Vec3 = Eigen::Vector3d;

// Semantic classes shared by the scene description and the losses.
inline constexpr int kClassOther = 0;
inline constexpr int kClassFloor = 1;
inline constexpr int kClassWall = 2;
inline constexpr int kClassCeiling = 3;
inline constexpr int kClassObject = 4;

inline constexpr double kDefaultBeta = 0.05;
inline constexpr double kDefaultGradientStep = 1e-4;

namespace sdf {

template <typename Scalar>
Scalar sphere(const Eigen::Matrix<Scalar, 3, 1>& p,
              const Eigen::Matrix<Scalar, 3, 1>& center, Scalar radius) {
  return (p - center).norm() - radius;
}

/// Exact distance to an axis-aligned box.
template <typename Scalar>
Scalar box(const Eigen::Matrix<Scalar, 3, 1>& p,
           const Eigen::Matrix<Scalar, 3, 1>& center,
           const Eigen::Matrix<Scalar, 3, 1>& half_extents) {
  const Eigen::Matrix<Scalar, 3, 1> q = (p - center).cwiseAbs() - half_extents;
  const Scalar outside = q.cwiseMax(Scalar(0)).norm();
  const Scalar inside = std::min(q.maxCoeff(), Scalar(0));
  return outside + inside;
}

/// Half-space {n.p <= offset} with unit normal n pointing out of the solid.
template <typename Scalar>
Scalar plane(const Eigen::Matrix<Scalar, 3, 1>& p,
             const Eigen::Matrix<Scalar, 3, 1>& normal, Scalar offset) {
  return normal.dot(p) - offset;
}

}  // namespace sdf

/// Laplace density. Continuous at d = 0 where both branches
/// give 1 / (2 beta).
template <typename Scalar>
Scalar density(Scalar d, Scalar beta) {
  if (!(beta > Scalar(0))) {
    throw Error(ErrorCode::kInvalidArgument, "beta must be positive");
  }
  const Scalar half_inv = Scalar(0.5) / beta;
  if (d >= Scalar(0)) return half_inv * std::exp(-d / beta);
  return Scalar(1) / beta - half_inv * std::exp(d / beta);
}

struct Sphere {
  Vec3 center = Vec3::Zero();
  double radius = 1.0;
};

struct Box {
  Vec3 center = Vec3::Zero();
  Vec3 half_extents = Vec3::Ones();
};

struct Plane {
  Vec3 normal = Vec3::UnitZ();
  double offset = 0.0;
};

using Shape = std::variant<Sphere, Box, Plane>;

/// One analytic primitive plus the per-primitive constants used as rendering
/// attributes (color, semantic class, feature).
struct Primitive {
  Shape shape;
  Vec3 translation = Vec3::Zero();
  int class_id = kClassOther;
  std::uint32_t object_id = 0;
  Vec3 color = Vec3::Constant(0.5);
  Eigen::VectorXd feature;

  double distance(const Vec3& p) const;
  /// Analytic gradient of `distance`; on medial sets an arbitrary valid
  /// subgradient direction is returned.
  Vec3 gradient(const Vec3& p) const;
};

/// Union (pointwise min) of primitives. An empty field is +inf everywhere.
class SdfField {
 public:
  SdfField() = default;
  explicit SdfField(std::vector<Primitive> primitives) : primitives_(std::move(primitives)) {}

  struct Nearest {
    double distance = std::numeric_limits<double>::infinity();
    std::size_t index = 0;  ///< valid only when the field is non-empty
  };

  double operator()(const Vec3& p) const { return nearest(p).distance; }
  /// Minimum over primitives; ties go to the lowest index.
  Nearest nearest(const Vec3& p) const;
  Vec3 analytic_gradient(const Vec3& p) const;

  const std::vector<Primitive>& primitives() const { return primitives_; }
  bool empty() const { return primitives_.empty(); }

 private:
  std::vector<Primitive> primitives_;
};

SdfField translated(const SdfField& field, const Vec3& offset);

enum class FieldTag { kForeground, kBackground };

constexpr const char* to_string(FieldTag tag) {
  return tag == FieldTag::kForeground ? "foreground" : "background";
}

/// Foreground and background fields composed by min.
struct ComposedScene {
  SdfField foreground;
  SdfField background;
  double beta = kDefaultBeta;
  int num_classes = 5;
  int feature_dim = 0;

  /// d_Omega(p); makes the scene usable wherever an SDF callable is expected.
  double operator()(const Vec3& p) const;
  void validate() const;
};

struct SceneSample {
  double distance = 0.0;
  FieldTag field = FieldTag::kForeground;
  std::size_t primitive = 0;
};

/// min(d_F, d_B) with the achieving field; ties resolve to the foreground.
SceneSample scene_sdf(const ComposedScene& scene, const Vec3& p);

/// Class id of the nearest primitive of the achieving field.
int semantic_query(const ComposedScene& scene, const Vec3& p);

/// Primitive of the achieving field nearest to p.
const Primitive& nearest_primitive(const ComposedScene& scene, const Vec3& p);

/// Central finite-difference gradient of any callable SDF.
template <typename Field>
Vec3 sdf_gradient(const Field& field, const Vec3& p, double h = kDefaultGradientStep) {
  if (!(h > 0.0)) throw Error(ErrorCode::kInvalidArgument, "finite-difference step must be positive");
  Vec3 g;
  for (int axis = 0; axis < 3; ++axis) {
    Vec3 e = Vec3::Zero();
    e[axis] = h;
    g[axis] = (field(Vec3(p + e)) - field(Vec3(p - e))) / (2.0 * h);
  }
  return g;
}

/// Scene description JSON (see README for the schema).
ComposedScene parse_scene_json(const std::string& text);
std::string scene_to_json(const ComposedScene& scene);
ComposedScene load_scene(const std::string& path);

}  // namespace decomesh

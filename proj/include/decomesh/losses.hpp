#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "decomesh/render.hpp"
#include "decomesh/sdf.hpp"

namespace decomesh {

/// Weights of the total reconstruction objective. `opacity` .. `feature` are
/// lambda_1 .. lambda_6; the geometry sub-weights combine depth, normal and
/// eikonal into L_geo.
struct LossWeights {
  double opacity = 0.1;
  double object_distinction = 0.1;
  double manhattan = 0.01;
  double floor = 0.01;
  double semantic = 0.5;
  double feature = 0.1;
  double depth = 0.1;
  double normal = 0.05;
  double eikonal = 0.05;

  void validate() const;
};

enum class RegionTag { kOther, kFloor, kWall };

/// Per-ray rendered values and their supervision targets, one row per ray.
struct RayBatch {
  Eigen::MatrixX3d color, color_gt;
  Eigen::VectorXd depth, depth_gt;
  Eigen::MatrixX3d normal, normal_gt;
  Eigen::MatrixXd semantic_logits, semantic_gt;  ///< rays x L
  Eigen::MatrixXd feature, feature_gt;            ///< rays x D
  Eigen::MatrixX2d opacity, opacity_gt;           ///< columns: foreground, background
  std::vector<RegionTag> region;
  Eigen::VectorXd prob_floor, prob_wall;

  Eigen::Index size() const { return color.rows(); }
  /// Allocates every member for `rays` rows (zero-filled).
  static RayBatch zeros(Eigen::Index rays, Eigen::Index classes, Eigen::Index feature_dim);
  /// Copies the rendered half of row `i` from a pixel.
  void set_rendered(Eigen::Index i, const RenderedPixel& px);
};

double loss_rgb(const RayBatch& batch);

struct AffineFit {
  double scale = 1.0;
  double shift = 0.0;
  bool degenerate = false;
};

/// Least-squares (w, q) minimizing sum (w * rendered + q - target)^2.
AffineFit fit_scale_shift(const Eigen::VectorXd& rendered, const Eigen::VectorXd& target);
double loss_depth_scale_invariant(const RayBatch& batch);

double loss_normal(const RayBatch& batch);

/// Mean of (|grad d(p)| - 1)^2 over the points, gradient by central differences.
template <typename Field>
double loss_eikonal(const Field& field, std::span<const Vec3> points,
                    double h = kDefaultGradientStep) {
  if (points.empty()) return 0.0;
  double sum = 0.0;
  for (const Vec3& p : points) {
    const double dev = sdf_gradient(field, p, h).norm() - 1.0;
    sum += dev * dev;
  }
  return sum / static_cast<double>(points.size());
}

/// Softmax with probabilities clamped below at 1e-12, then cross-entropy.
double loss_semantic(const RayBatch& batch);
Eigen::VectorXd softmax(const Eigen::VectorXd& logits);

double loss_opacity(const RayBatch& batch);

/// Sum over non-minimal fields of ReLU(-d_S - d_Omega) at one point.
double object_distinction_term(double d_foreground, double d_background);
double loss_object_distinction(const ComposedScene& scene, std::span<const Vec3> points);

struct ManhattanTerms {
  double floor = 0.0;
  double wall = 0.0;
  double total() const { return floor + wall; }
};

ManhattanTerms manhattan_terms(const RayBatch& batch, const Vec3& wall_normal);
double loss_manhattan(const RayBatch& batch, const Vec3& wall_normal);

/// Horizontal unit normal minimizing the wall term over azimuths in [0, pi)
/// at `resolution_deg` spacing; ties keep the smallest azimuth.
Vec3 fit_wall_normal(const RayBatch& batch, double resolution_deg = 0.5);

struct FloorLoss {
  double value = 0.0;
  std::size_t found = 0;
  std::size_t skipped = 0;
};

FloorLoss loss_floor(const ComposedScene& scene, std::span<const Vec3> ceiling_points,
                     const FloorSearch& search = {});

double loss_feature(const RayBatch& batch);

/// Raw (unweighted) value of every term.
struct LossTerms {
  double rgb = 0.0;
  double depth = 0.0;
  double normal = 0.0;
  double eikonal = 0.0;
  double opacity = 0.0;
  double object_distinction = 0.0;
  double manhattan = 0.0;
  double floor = 0.0;
  double semantic = 0.0;
  double feature = 0.0;
};

struct LossBreakdown {
  LossTerms terms;
  /// Weighted contributions in a fixed order; `total` is their sum.
  std::vector<std::pair<std::string, double>> contributions;
  double geometry = 0.0;
  double total = 0.0;
};

LossBreakdown combine_losses(const LossTerms& terms, const LossWeights& weights = {});

struct LossInputs {
  const RayBatch* batch = nullptr;
  const ComposedScene* scene = nullptr;
  std::span<const Vec3> eikonal_points;
  std::span<const Vec3> regularization_points;
  std::span<const Vec3> ceiling_points;
  std::optional<Vec3> wall_normal;  ///< fitted when absent and wall rays exist
};

LossBreakdown loss_total(const LossInputs& inputs, const LossWeights& weights = {});

/// JSON object with one key per term plus the weighted total.
std::string loss_report_json(const LossBreakdown& breakdown);

}  // namespace decomesh

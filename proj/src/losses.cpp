#include "decomesh/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "json.hpp"

namespace decomesh {

namespace {

void require_rows(const RayBatch& batch, Eigen::Index rows, const char* what) {
  if (rows != batch.size()) {
    throw Error(ErrorCode::kDimMismatch, std::string(what) + " has a different ray count");
  }
}

}  // namespace

void LossWeights::validate() const {
  for (double w : {opacity, object_distinction, manhattan, floor, semantic, feature, depth, normal, eikonal}) {
    if (!(w >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "loss weights must be non-negative");
  }
}

RayBatch RayBatch::zeros(Eigen::Index rays, Eigen::Index classes, Eigen::Index feature_dim) {
  RayBatch b;
  b.color = b.color_gt = Eigen::MatrixX3d::Zero(rays, 3);
  b.depth = b.depth_gt = Eigen::VectorXd::Zero(rays);
  b.normal = b.normal_gt = Eigen::MatrixX3d::Zero(rays, 3);
  b.semantic_logits = b.semantic_gt = Eigen::MatrixXd::Zero(rays, classes);
  b.feature = b.feature_gt = Eigen::MatrixXd::Zero(rays, feature_dim);
  b.opacity = b.opacity_gt = Eigen::MatrixX2d::Zero(rays, 2);
  b.region.assign(static_cast<std::size_t>(rays), RegionTag::kOther);
  b.prob_floor = b.prob_wall = Eigen::VectorXd::Zero(rays);
  return b;
}

void RayBatch::set_rendered(Eigen::Index i, const RenderedPixel& px) {
  color.row(i) = px.color.transpose();
  depth[i] = px.depth;
  normal.row(i) = px.normal.transpose();
  semantic_logits.row(i) = px.semantic_logits.transpose();
  if (feature.cols() > 0) feature.row(i) = px.feature.transpose();
  opacity(i, 0) = px.opacity_fg;
  opacity(i, 1) = px.opacity_bg;
}

double loss_rgb(const RayBatch& batch) {
  require_rows(batch, batch.color_gt.rows(), "color_gt");
  if (batch.size() == 0) return 0.0;
  return (batch.color_gt - batch.color).cwiseAbs().rowwise().sum().mean();
}

AffineFit fit_scale_shift(const Eigen::VectorXd& rendered, const Eigen::VectorXd& target) {
  if (rendered.size() != target.size()) throw Error(ErrorCode::kDimMismatch, "depth vectors differ in length");
  AffineFit fit;
  const auto n = static_cast<double>(rendered.size());
  if (rendered.size() == 0) return fit;
  const double mean_r = rendered.mean();
  const double mean_t = target.mean();
  const Eigen::ArrayXd dr = rendered.array() - mean_r;
  const double var = (dr * dr).sum();
  // Normal equations in centered form: w = cov / var, q = mean_t - w mean_r.
  if (rendered.size() < 2 || var <= 1e-24 * std::max(1.0, mean_r * mean_r) * n) {
    fit.degenerate = true;
    fit.scale = 1.0;
    fit.shift = mean_t - mean_r;
    return fit;
  }
  fit.scale = (dr * (target.array() - mean_t)).sum() / var;
  fit.shift = mean_t - fit.scale * mean_r;
  return fit;
}

double loss_depth_scale_invariant(const RayBatch& batch) {
  require_rows(batch, batch.depth_gt.size(), "depth_gt");
  if (batch.size() == 0) return 0.0;
  const AffineFit fit = fit_scale_shift(batch.depth, batch.depth_gt);
  const Eigen::ArrayXd r = fit.scale * batch.depth.array() + fit.shift - batch.depth_gt.array();
  return (r * r).sum() / static_cast<double>(batch.size());
}

double loss_normal(const RayBatch& batch) {
  require_rows(batch, batch.normal_gt.rows(), "normal_gt");
  if (batch.size() == 0) return 0.0;
  const Eigen::VectorXd l1 = (batch.normal - batch.normal_gt).cwiseAbs().rowwise().sum();
  const Eigen::VectorXd dot = batch.normal.cwiseProduct(batch.normal_gt).rowwise().sum();
  return (l1.array() + (1.0 - dot.array()).abs()).mean();
}

Eigen::VectorXd softmax(const Eigen::VectorXd& logits) {
  const double m = logits.maxCoeff();
  Eigen::VectorXd e = (logits.array() - m).exp();
  return e / e.sum();
}

double loss_semantic(const RayBatch& batch) {
  require_rows(batch, batch.semantic_gt.rows(), "semantic_gt");
  if (batch.semantic_logits.cols() != batch.semantic_gt.cols()) {
    throw Error(ErrorCode::kDimMismatch, "semantic class counts differ");
  }
  if (batch.size() == 0) return 0.0;
  double sum = 0.0;
  for (Eigen::Index r = 0; r < batch.size(); ++r) {
    const Eigen::ArrayXd p = softmax(batch.semantic_logits.row(r).transpose()).array().max(1e-12);
    sum -= (batch.semantic_gt.row(r).transpose().array() * p.log()).sum();
  }
  return sum / static_cast<double>(batch.size());
}

double loss_opacity(const RayBatch& batch) {
  require_rows(batch, batch.opacity_gt.rows(), "opacity_gt");
  if (batch.size() == 0) return 0.0;
  return (batch.opacity - batch.opacity_gt).cwiseAbs().rowwise().sum().mean();
}

double object_distinction_term(double d_foreground, double d_background) {
  const double d_scene = std::min(d_foreground, d_background);
  double term = 0.0;
  for (double d : {d_foreground, d_background}) {
    if (d != d_scene) term += std::max(0.0, -d - d_scene);
  }
  return term;
}

double loss_object_distinction(const ComposedScene& scene, std::span<const Vec3> points) {
  if (points.empty()) return 0.0;
  double sum = 0.0;
  for (const Vec3& p : points) sum += object_distinction_term(scene.foreground(p), scene.background(p));
  return sum / static_cast<double>(points.size());
}

ManhattanTerms manhattan_terms(const RayBatch& batch, const Vec3& wall_normal) {
  const Vec3 floor_normal = Vec3::UnitZ();
  ManhattanTerms out;
  double floor_sum = 0.0, wall_sum = 0.0;
  std::size_t floor_n = 0, wall_n = 0;
  for (Eigen::Index r = 0; r < batch.size(); ++r) {
    const Vec3 n = batch.normal.row(r).transpose();
    switch (batch.region[static_cast<std::size_t>(r)]) {
      case RegionTag::kFloor:
        floor_sum += batch.prob_floor[r] * std::abs(1.0 - n.dot(floor_normal));
        ++floor_n;
        break;
      case RegionTag::kWall: {
        const double c = n.dot(wall_normal);
        const double best = std::min({std::abs(-1.0 - c), std::abs(c), std::abs(1.0 - c)});
        wall_sum += batch.prob_wall[r] * best;
        ++wall_n;
        break;
      }
      case RegionTag::kOther:
        break;
    }
  }
  if (floor_n > 0) out.floor = floor_sum / static_cast<double>(floor_n);
  if (wall_n > 0) out.wall = wall_sum / static_cast<double>(wall_n);
  return out;
}

double loss_manhattan(const RayBatch& batch, const Vec3& wall_normal) {
  return manhattan_terms(batch, wall_normal).total();
}

Vec3 fit_wall_normal(const RayBatch& batch, double resolution_deg) {
  if (std::none_of(batch.region.begin(), batch.region.end(),
                   [](RegionTag t) { return t == RegionTag::kWall; })) {
    throw Error(ErrorCode::kNoWallRays, "wall normal fit needs at least one wall ray");
  }
  if (!(resolution_deg > 0.0)) throw Error(ErrorCode::kInvalidArgument, "resolution must be positive");
  const int steps = static_cast<int>(std::ceil(180.0 / resolution_deg - 1e-9));
  Vec3 best_normal = Vec3::UnitX();
  double best = std::numeric_limits<double>::infinity();
  for (int k = 0; k < steps; ++k) {
    const double theta = k * resolution_deg * std::numbers::pi / 180.0;
    const Vec3 n(std::cos(theta), std::sin(theta), 0.0);
    const double value = manhattan_terms(batch, n).wall;
    if (value < best) {
      best = value;
      best_normal = n;
    }
  }
  return best_normal;
}

FloorLoss loss_floor(const ComposedScene& scene, std::span<const Vec3> ceiling_points,
                     const FloorSearch& search) {
  FloorLoss out;
  double sum = 0.0;
  for (const Vec3& pc : ceiling_points) {
    const auto pf = find_floor_point(scene, pc, search);
    if (!pf) {
      ++out.skipped;
      continue;
    }
    const Vec3 g = sdf_gradient(scene.background, *pf);
    const Vec3 n = g.norm() > 0.0 ? Vec3(g.normalized()) : Vec3::Zero();
    sum += std::abs(1.0 - n.dot(Vec3::UnitZ()));
    ++out.found;
  }
  if (out.found > 0) out.value = sum / static_cast<double>(out.found);
  return out;
}

double loss_feature(const RayBatch& batch) {
  require_rows(batch, batch.feature_gt.rows(), "feature_gt");
  if (batch.feature.cols() != batch.feature_gt.cols()) {
    throw Error(ErrorCode::kDimMismatch, "feature dimensions differ");
  }
  if (batch.feature.size() == 0) return 0.0;
  return (batch.feature - batch.feature_gt).squaredNorm() / static_cast<double>(batch.feature.size());
}

LossBreakdown combine_losses(const LossTerms& t, const LossWeights& w) {
  w.validate();
  LossBreakdown b;
  b.terms = t;
  b.geometry = w.depth * t.depth + w.normal * t.normal + w.eikonal * t.eikonal;
  b.contributions = {
      {"rgb", t.rgb},
      {"depth", w.depth * t.depth},
      {"normal", w.normal * t.normal},
      {"eikonal", w.eikonal * t.eikonal},
      {"opacity", w.opacity * t.opacity},
      {"object_distinction", w.object_distinction * t.object_distinction},
      {"manhattan", w.manhattan * t.manhattan},
      {"floor", w.floor * t.floor},
      {"semantic", w.semantic * t.semantic},
      {"feature", w.feature * t.feature},
  };
  b.total = 0.0;
  for (const auto& [name, value] : b.contributions) b.total += value;
  return b;
}

LossBreakdown loss_total(const LossInputs& in, const LossWeights& weights) {
  if (in.batch == nullptr || in.scene == nullptr) {
    throw Error(ErrorCode::kInvalidArgument, "loss_total needs a ray batch and a scene");
  }
  const RayBatch& batch = *in.batch;
  LossTerms t;
  t.rgb = loss_rgb(batch);
  t.depth = loss_depth_scale_invariant(batch);
  t.normal = loss_normal(batch);
  t.eikonal = loss_eikonal(*in.scene, in.eikonal_points);
  t.opacity = loss_opacity(batch);
  t.object_distinction = loss_object_distinction(*in.scene, in.regularization_points);
  const bool has_wall = std::any_of(batch.region.begin(), batch.region.end(),
                                    [](RegionTag r) { return r == RegionTag::kWall; });
  const Vec3 wall_normal = in.wall_normal ? *in.wall_normal
                           : has_wall     ? fit_wall_normal(batch)
                                          : Vec3::UnitX();
  t.manhattan = loss_manhattan(batch, wall_normal);
  t.floor = loss_floor(*in.scene, in.ceiling_points).value;
  t.semantic = loss_semantic(batch);
  t.feature = loss_feature(batch);
  return combine_losses(t, weights);
}

std::string loss_report_json(const LossBreakdown& b) {
  nlohmann::ordered_json j;
  const LossTerms& t = b.terms;
  j["rgb"] = t.rgb;
  j["depth"] = t.depth;
  j["normal"] = t.normal;
  j["eikonal"] = t.eikonal;
  j["geometry"] = b.geometry;
  j["opacity"] = t.opacity;
  j["object_distinction"] = t.object_distinction;
  j["manhattan"] = t.manhattan;
  j["floor"] = t.floor;
  j["semantic"] = t.semantic;
  j["feature"] = t.feature;
  nlohmann::ordered_json weighted;
  for (const auto& [name, value] : b.contributions) weighted[name] = value;
  j["weighted"] = weighted;
  j["total"] = b.total;
  return j.dump(2);
}

}  // namespace decomesh

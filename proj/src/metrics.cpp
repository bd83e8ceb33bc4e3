#include "decomesh/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include <Eigen/Geometry>

#include "decomesh/error.hpp"
#include "json.hpp"

namespace decomesh {

namespace {
constexpr std::uint32_t kLeafSize = 8;
}

KdTree::KdTree(PointSet points) : points_(std::move(points)) {
  if (points_.rows() == 0) throw Error(ErrorCode::kEmptySet, "cannot index an empty point set");
  order_.resize(static_cast<std::size_t>(points_.rows()));
  std::iota(order_.begin(), order_.end(), 0u);
  nodes_.reserve(2 * order_.size() / kLeafSize + 1);
  build(0, static_cast<std::uint32_t>(order_.size()));
}

std::int32_t KdTree::build(std::uint32_t begin, std::uint32_t end) {
  const auto id = static_cast<std::int32_t>(nodes_.size());
  nodes_.push_back({begin, end});
  if (end - begin <= kLeafSize) return id;
  Eigen::Vector3d lo = Eigen::Vector3d::Constant(std::numeric_limits<double>::infinity());
  Eigen::Vector3d hi = -lo;
  for (auto i = begin; i < end; ++i) {
    lo = lo.cwiseMin(points_.row(order_[i]).transpose());
    hi = hi.cwiseMax(points_.row(order_[i]).transpose());
  }
  int axis = 0;
  (hi - lo).maxCoeff(&axis);
  const auto mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](std::uint32_t a, std::uint32_t b) { return points_(a, axis) < points_(b, axis); });
  const double split = points_(order_[mid], axis);
  const auto left = build(begin, mid);
  const auto right = build(mid, end);
  nodes_[id].axis = axis;
  nodes_[id].split = split;
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

void KdTree::search(std::int32_t node_id, const Vec3& q, double& best_sq, std::size_t& best) const {
  const Node& node = nodes_[node_id];
  if (node.axis < 0) {
    for (auto i = node.begin; i < node.end; ++i) {
      const std::size_t idx = order_[i];
      const double d = (points_.row(idx).transpose() - q).squaredNorm();
      if (d < best_sq || (d == best_sq && idx < best)) {
        best_sq = d;
        best = idx;
      }
    }
    return;
  }
  const double diff = q[node.axis] - node.split;
  const auto near = diff < 0.0 ? node.left : node.right;
  const auto far = diff < 0.0 ? node.right : node.left;
  search(near, q, best_sq, best);
  if (diff * diff <= best_sq) search(far, q, best_sq, best);
}

KdTree::Hit KdTree::nearest(const Vec3& query) const {
  double best_sq = std::numeric_limits<double>::infinity();
  std::size_t best = std::numeric_limits<std::size_t>::max();
  search(0, query, best_sq, best);
  return {std::sqrt(best_sq), best};
}

PointSet sample_surface(const NeuralMesh& mesh, std::size_t count, std::uint64_t seed) {
  const auto& faces = mesh.faces();
  if (faces.empty()) throw Error(ErrorCode::kEmptySet, "mesh has no faces");
  std::vector<double> cumulative(faces.size());
  double total = 0.0;
  for (std::size_t f = 0; f < faces.size(); ++f) {
    const Vec3 a = mesh.position(faces[f][0]);
    total += 0.5 * (mesh.position(faces[f][1]) - a).cross(mesh.position(faces[f][2]) - a).norm();
    cumulative[f] = total;
  }
  if (!(total > 0.0)) throw Error(ErrorCode::kZeroArea, "mesh has zero surface area");

  // Manual 53-bit doubles keep the stream identical across standard libraries.
  std::mt19937_64 rng(seed);
  auto uniform = [&rng] { return static_cast<double>(rng() >> 11) * 0x1.0p-53; };

  PointSet out(static_cast<Eigen::Index>(count), 3);
  for (std::size_t i = 0; i < count; ++i) {
    const double pick = uniform() * total;
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), pick);
    if (it == cumulative.end()) --it;
    const Face& face = faces[static_cast<std::size_t>(it - cumulative.begin())];
    double u = uniform(), v = uniform();
    if (u + v > 1.0) {
      u = 1.0 - u;
      v = 1.0 - v;
    }
    const Vec3 a = mesh.position(face[0]);
    out.row(static_cast<Eigen::Index>(i)) =
        (a + u * (mesh.position(face[1]) - a) + v * (mesh.position(face[2]) - a)).transpose();
  }
  return out;
}

namespace {

struct OneWay {
  double mean = 0.0;
  double within = 0.0;  // fraction of queries within threshold
};

OneWay one_way(const PointSet& from, const KdTree& to, double threshold) {
  double sum = 0.0;
  std::size_t within = 0;
  for (Eigen::Index i = 0; i < from.rows(); ++i) {
    const double d = to.nearest(from.row(i).transpose()).distance;
    sum += d;
    within += d < threshold;
  }
  const double n = static_cast<double>(from.rows());
  return {sum / n, static_cast<double>(within) / n};
}

}  // namespace

MetricsReport evaluate(const PointSet& pred, const PointSet& gt, double threshold) {
  if (pred.rows() == 0 || gt.rows() == 0) throw Error(ErrorCode::kEmptySet, "point sets must be non-empty");
  if (!(threshold > 0.0)) throw Error(ErrorCode::kInvalidArgument, "distance threshold must be positive");
  const KdTree gt_index(gt);
  const KdTree pred_index(pred);
  const OneWay acc = one_way(pred, gt_index, threshold);
  const OneWay comp = one_way(gt, pred_index, threshold);
  MetricsReport r;
  r.accuracy = acc.mean;
  r.completeness = comp.mean;
  r.chamfer_l1 = 0.5 * (acc.mean + comp.mean);
  r.precision = 100.0 * acc.within;
  r.recall = 100.0 * comp.within;
  r.f_score = r.precision + r.recall > 0.0 ? 2.0 * r.precision * r.recall / (r.precision + r.recall) : 0.0;
  r.threshold = threshold;
  r.pred_count = static_cast<std::size_t>(pred.rows());
  r.gt_count = static_cast<std::size_t>(gt.rows());
  return r;
}

std::string metrics_to_json(const MetricsReport& r) {
  nlohmann::ordered_json j{{"accuracy", r.accuracy},   {"completeness", r.completeness},
                           {"chamfer_l1", r.chamfer_l1}, {"precision", r.precision},
                           {"recall", r.recall},       {"f_score", r.f_score},
                           {"threshold", r.threshold}, {"pred_count", r.pred_count},
                           {"gt_count", r.gt_count}};
  return j.dump(2);
}

std::string metrics_csv_header() { return "Acc,Comp,C-L1,Prec,Recall,F-score"; }

std::string metrics_to_csv_row(const MetricsReport& r) {
  std::ostringstream os;
  os.precision(17);
  os << r.accuracy << ',' << r.completeness << ',' << r.chamfer_l1 << ',' << r.precision << ',' << r.recall
     << ',' << r.f_score;
  return os.str();
}

}  // namespace decomesh

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "decomesh/mesh.hpp"

namespace decomesh {

using PointSet = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;

inline constexpr double kDefaultDistanceThreshold = 0.05;
inline constexpr std::size_t kDefaultSampleCount = 100000;

/// Exact nearest-neighbor index over a fixed point set.
class KdTree {
 public:
  explicit KdTree(PointSet points);

  struct Hit {
    double distance;
    std::size_t index;
  };
  /// Closest point; ties resolve to the lowest index.
  Hit nearest(const Vec3& query) const;
  std::size_t size() const { return static_cast<std::size_t>(points_.rows()); }

 private:
  struct Node {
    std::uint32_t begin, end;  // range in order_
    std::int32_t left = -1, right = -1;
    int axis = -1;
    double split = 0.0;
  };
  std::int32_t build(std::uint32_t begin, std::uint32_t end);
  void search(std::int32_t node, const Vec3& q, double& best_sq, std::size_t& best) const;

  PointSet points_;
  std::vector<std::uint32_t> order_;
  std::vector<Node> nodes_;
};

/// Area-weighted uniform samples on the mesh surface, deterministic in `seed`.
PointSet sample_surface(const NeuralMesh& mesh, std::size_t count, std::uint64_t seed);

struct MetricsReport {
  double accuracy = 0.0;      ///< mean distance pred -> gt
  double completeness = 0.0;  ///< mean distance gt -> pred
  double chamfer_l1 = 0.0;
  double precision = 0.0;  ///< percent
  double recall = 0.0;     ///< percent
  double f_score = 0.0;    ///< percent
  double threshold = kDefaultDistanceThreshold;
  std::size_t pred_count = 0;
  std::size_t gt_count = 0;
};

MetricsReport evaluate(const PointSet& pred, const PointSet& gt, double threshold = kDefaultDistanceThreshold);

std::string metrics_to_json(const MetricsReport& report);
std::string metrics_csv_header();
/// Acc,Comp,C-L1,Prec,Recall,F-score
std::string metrics_to_csv_row(const MetricsReport& report);

}  // namespace decomesh

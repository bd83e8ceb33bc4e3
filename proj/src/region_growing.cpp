#include "decomesh/region_growing.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

#include "json.hpp"

namespace decomesh {

void GrowConfig::validate() const {
  if (!(tau > -1.0 && tau <= 1.0)) throw Error(ErrorCode::kInvalidArgument, "tau must lie in (-1, 1]");
  if (!(theta > 0.0)) throw Error(ErrorCode::kInvalidArgument, "theta must be positive");
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw Error(ErrorCode::kInvalidArgument, "epsilon must lie in [0, 1]");
  if (!(tau_floor >= -1.0)) throw Error(ErrorCode::kInvalidArgument, "tau_floor must be >= -1");
  if (max_rounds < 1) throw Error(ErrorCode::kInvalidArgument, "max_rounds must be >= 1");
}

std::string to_string(StopReason reason) {
  switch (reason) {
    case StopReason::kBoundaryFence: return "boundary-fence";
    case StopReason::kFixedPoint: return "fixed-point";
    case StopReason::kTauFloor: return "tau-floor";
    case StopReason::kRoundCap: return "round-cap";
  }
  return "unknown";
}

namespace {

Eigen::MatrixXd unit_rows(const FeatureMatrix& f) {
  Eigen::MatrixXd out = f.cast<double>();
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    const double n = out.row(r).norm();
    if (n > 0.0) out.row(r) /= n;
  }
  return out;
}

void check_inputs(const NeuralMesh& mesh, std::span<const VertexIndex> seeds) {
  if (!mesh.has_features()) throw Error(ErrorCode::kMissingFeatures, "mesh carries no vertex features");
  if (seeds.empty()) throw Error(ErrorCode::kEmptySeed, "seed set is empty");
  for (auto v : seeds) {
    if (v >= mesh.vertex_count()) throw Error(ErrorCode::kIndexOutOfRange, "seed vertex out of range");
  }
}

std::vector<VertexIndex> members(const std::vector<char>& flags) {
  std::vector<VertexIndex> out;
  for (std::size_t v = 0; v < flags.size(); ++v)
    if (flags[v]) out.push_back(static_cast<VertexIndex>(v));
  return out;
}

}  // namespace

GrownRegion grow(const NeuralMesh& mesh, std::span<const VertexIndex> seeds,
                 std::span<const VertexIndex> boundary, const GrowConfig& config) {
  config.validate();
  check_inputs(mesh, seeds);
  const std::size_t n = mesh.vertex_count();
  std::vector<char> is_boundary(n, 0);
  for (auto v : boundary) {
    if (v >= n) throw Error(ErrorCode::kIndexOutOfRange, "boundary vertex out of range");
    is_boundary[v] = 1;
  }
  const std::size_t boundary_size = static_cast<std::size_t>(std::count(is_boundary.begin(), is_boundary.end(), 1));
  const Eigen::MatrixXd unit = unit_rows(mesh.features());

  std::vector<char> accepted(n, 0);
  for (auto v : seeds) accepted[v] = 1;
  std::vector<VertexIndex> frontier = members(accepted);

  GrownRegion region;
  double tau = config.tau;
  for (;;) {
    if (frontier.empty()) {
      region.stop_reason = StopReason::kFixedPoint;
      break;
    }
    if (tau < config.tau_floor) {
      region.stop_reason = StopReason::kTauFloor;
      break;
    }
    if (region.rounds >= config.max_rounds) {
      region.stop_reason = StopReason::kRoundCap;
      break;
    }
    ++region.rounds;

    std::vector<char> candidate = accepted;
    std::vector<char> deferred(n, 0);
    std::deque<VertexIndex> queue(frontier.begin(), frontier.end());
    while (!queue.empty()) {
      const VertexIndex s = queue.front();
      queue.pop_front();
      for (VertexIndex nb : mesh.neighbors(s)) {
        if (candidate[nb]) continue;
        if (unit.row(s).dot(unit.row(nb)) > tau) {
          candidate[nb] = 1;
          queue.push_back(nb);
        } else {
          deferred[s] = 1;
        }
      }
    }

    if (boundary_size > 0) {
      std::size_t hits = 0;
      for (std::size_t v = 0; v < n; ++v) hits += candidate[v] && is_boundary[v];
      if (static_cast<double>(hits) / static_cast<double>(boundary_size) > config.epsilon) {
        region.stop_reason = StopReason::kBoundaryFence;
        break;
      }
    }

    accepted = std::move(candidate);
    region.round_sizes.push_back(static_cast<std::size_t>(std::count(accepted.begin(), accepted.end(), 1)));
    frontier = members(deferred);
    tau -= config.theta;
  }
  region.vertices = members(accepted);
  region.final_tau = tau;
  return region;
}

GrownRegion grow(const NeuralMesh& mesh, const SegmentationSeed& seed, const GrowConfig& config) {
  return grow(mesh, seed.seeds, seed.boundary, config);
}

std::vector<VertexIndex> grow_by_similarity_only(const NeuralMesh& mesh, std::span<const VertexIndex> seeds,
                                                 double tau) {
  check_inputs(mesh, seeds);
  const Eigen::MatrixXd unit = unit_rows(mesh.features());
  Eigen::VectorXd proto = Eigen::VectorXd::Zero(unit.cols());
  for (auto v : seeds) proto += unit.row(v).transpose();
  if (proto.norm() > 0.0) proto.normalize();
  std::vector<char> keep(mesh.vertex_count(), 0);
  for (auto v : seeds) keep[v] = 1;
  const Eigen::VectorXd sims = unit * proto;
  for (Eigen::Index v = 0; v < sims.size(); ++v)
    if (sims(v) > tau) keep[v] = 1;
  return members(keep);
}

std::string grown_region_to_json(const GrownRegion& region) {
  nlohmann::ordered_json j;
  j["vertices"] = region.vertices;
  j["rounds"] = region.rounds;
  j["stop_reason"] = to_string(region.stop_reason);
  j["round_sizes"] = region.round_sizes;
  j["final_tau"] = region.final_tau;
  return j.dump();
}

}  // namespace decomesh

#pragma once

#include <string>
#include <vector>

#include "decomesh/interaction.hpp"
#include "decomesh/mesh.hpp"

namespace decomesh {

struct GrowConfig {
  double tau = 0.95;        ///< initial cosine threshold
  double theta = 0.02;      ///< threshold decay per round
  double epsilon = 0.10;    ///< tolerated fraction of boundary vertices
  double tau_floor = 0.0;   ///< stop once tau drops below this
  int max_rounds = 200;

  void validate() const;
};

enum class StopReason { kBoundaryFence, kFixedPoint, kTauFloor, kRoundCap };

std::string to_string(StopReason reason);

struct GrownRegion {
  std::vector<VertexIndex> vertices;  ///< ascending
  int rounds = 0;
  StopReason stop_reason = StopReason::kFixedPoint;
  std::vector<std::size_t> round_sizes;  ///< accepted size after each committed round
  double final_tau = 0.0;
};

/// Mesh-based region growing from `seed.seeds`, fenced by `seed.boundary`.
GrownRegion grow(const NeuralMesh& mesh, const SegmentationSeed& seed, const GrowConfig& config = {});

/// Overload taking explicit seed and boundary vertex lists.
GrownRegion grow(const NeuralMesh& mesh, std::span<const VertexIndex> seeds,
                 std::span<const VertexIndex> boundary, const GrowConfig& config = {});

/// Ablation baseline: seeds plus every vertex whose feature has cosine > tau
/// with the re-normalized mean seed feature. Ignores adjacency and boundary.
std::vector<VertexIndex> grow_by_similarity_only(const NeuralMesh& mesh,
                                                 std::span<const VertexIndex> seeds, double tau);

std::string grown_region_to_json(const GrownRegion& region);

}  // namespace decomesh

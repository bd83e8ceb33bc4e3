#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "decomesh/interaction.hpp"
#include "decomesh/losses.hpp"
#include "decomesh/mesh.hpp"
#include "decomesh/metrics.hpp"
#include "decomesh/raster.hpp"
#include "decomesh/region_growing.hpp"
#include "decomesh/sdf.hpp"

namespace decomesh::app {

/// Invalid request with one message per offending field.
class ValidationError : public Error {
 public:
  explicit ValidationError(std::map<std::string, std::string> fields);
  ValidationError(const std::string& field, const std::string& message)
      : ValidationError(std::map<std::string, std::string>{{field, message}}) {}
  const std::map<std::string, std::string>& fields() const { return fields_; }

 private:
  std::map<std::string, std::string> fields_;
};

/// `{"error": {"code", "message"[, "fields"]}}`
std::string error_json(const std::exception& e);

struct ObjectEntry {
  std::uint32_t id = 0;
  std::filesystem::path mesh;
};

/// manifest.json written by `synth`; relative paths resolve against its directory.
struct SceneManifest {
  std::filesystem::path path;
  std::filesystem::path scene;
  std::filesystem::path fg_mesh;
  std::optional<std::filesystem::path> bg_mesh;
  std::filesystem::path cameras;
  std::vector<ObjectEntry> objects;
  std::uint64_t seed = 0;
};

SceneManifest load_manifest(const std::filesystem::path& path);

/// Foreground mesh with sidecars plus the camera list.
struct LoadedScene {
  SceneManifest manifest;
  NeuralMesh mesh;
  std::vector<Camera> cameras;
};

LoadedScene load_scene_bundle(const std::filesystem::path& manifest_path);

const Camera& camera_at(const std::vector<Camera>& cameras, int index);

/// Prompt file / request body: {"clicks": [{"x", "y", "positive"}]}.
ClickPrompt parse_prompt_json(const std::string& text);

/// Reads tau, theta, epsilon, tau_floor and max_rounds from a JSON object,
/// keeping defaults for absent keys. Every invalid field is reported.
GrowConfig parse_grow_config(const std::string& json_object);

BoundaryMode parse_boundary_mode(const std::string& name);

struct RegionExport {
  GrownRegion region;
  Submesh submesh;
  std::vector<std::uint8_t> ply;  ///< binary PLY of the submesh
  std::string trace_json;
};

/// Grows from the seed and packages the submesh exactly as both front ends
/// persist it.
RegionExport grow_and_export(const NeuralMesh& mesh, const SegmentationSeed& seed, const GrowConfig& config);

Rgba8Image view_image(const RasterBuffers& buffers);
std::string feature_stats_json(const RasterBuffers& buffers);

/// Writes image.png plus depth/vertex_id/label/normal/features float buffers.
void write_render_outputs(const RasterBuffers& buffers, const std::filesystem::path& dir);

/// One object of a decompose manifest:
/// {"objects": [{"view", "clicks", "tau_2d"?, "name"?}]}.
struct DecomposeItem {
  std::string name;
  int view = 0;
  ClickPrompt prompt;
  double tau_2d = kDefaultTau2d;
};
std::vector<DecomposeItem> parse_decompose_manifest(const std::string& text);

struct DecomposeResult {
  std::vector<RegionExport> regions;
  std::vector<VertexIndex> residual;  ///< vertices claimed by no region
  std::size_t overlap = 0;            ///< vertices claimed by more than one region
};

DecomposeResult decompose(const LoadedScene& scene, const std::vector<DecomposeItem>& items,
                          const GrowConfig& config, BoundaryMode mode);

struct EvalOptions {
  std::size_t samples = kDefaultSampleCount;
  std::uint64_t seed = 0;
  double threshold = kDefaultDistanceThreshold;
};

MetricsReport evaluate_meshes(const NeuralMesh& pred, const NeuralMesh& gt, const EvalOptions& options);

struct LossRunOptions {
  int stride = 8;       ///< render every stride-th pixel in x and y
  int samples = 128;    ///< quadrature samples per ray
  int extra_points = 512;
  std::uint64_t seed = 0;
};

/// Volume-renders a subsampled view of the analytic scene, builds targets by
/// sphere tracing the exact SDF, and evaluates every loss term.
LossBreakdown run_losses(const ComposedScene& scene, const Camera& camera, const LossRunOptions& options);

/// First hit of the ray with {d_Omega = 0}, if any, before t_far.
std::optional<double> sphere_trace(const ComposedScene& scene, const Ray& ray, double tolerance = 1e-7,
                                   int max_steps = 2048);

}  // namespace decomesh::app

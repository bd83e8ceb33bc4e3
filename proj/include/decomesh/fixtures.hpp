#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "decomesh/mesh.hpp"
#include "decomesh/raster.hpp"
#include "decomesh/sdf.hpp"

namespace decomesh {

/// Triangulates {f < 0} over the axis-aligned box [lo, hi] with cubic cells
/// of edge `spacing`. Vertices on shared grid edges are welded, and faces are
/// wound so their normals point toward increasing f.
NeuralMesh marching_cubes(const std::function<double(const Vec3&)>& f, const Vec3& lo, const Vec3& hi,
                          double spacing);

/// Subdivided icosahedron projected onto a sphere.
NeuralMesh icosphere(const Vec3& center, double radius, int subdivisions);

/// Inward-facing tessellation of an axis-aligned box, `cells` quads per side.
NeuralMesh room_mesh(const Vec3& lo, const Vec3& hi, int cells);

struct FixtureObject {
  Shape shape;  ///< Sphere or Box
  std::uint32_t id = 1;
  Vec3 color = Vec3::Constant(0.7);
  /// Reuse the prototype of an earlier object (index into objects).
  int share_prototype = -1;
  /// Draw a prototype with exactly this cosine to an earlier object's.
  int correlate_with = -1;
  double correlation = 0.0;
};

struct CameraRing {
  int count = 8;
  double radius = 3.0;
  double height = 1.5;
  std::optional<Vec3> target;  ///< defaults to the foreground bounding-box center
  int width = 128;
  int height_px = 96;
  double vertical_fov_deg = 50.0;
};

struct FixtureSpec {
  std::string name = "fixture";
  std::vector<FixtureObject> objects;
  std::optional<Vec3> room;  ///< width (x), depth (y), height (z); floor at z = 0
  int room_cells = 16;
  int feature_dim = 32;
  double feature_noise = 0.0;
  int resolution = 128;  ///< marching-cubes cells along the longest foreground axis
  CameraRing cameras;
  std::uint64_t seed = 1;
  bool disjoint = true;
  /// Independent prototypes are redrawn (seed + 1, ...) until every pair has
  /// |cos| below this bound.
  double max_prototype_cosine = 0.5;

  void validate() const;
};

FixtureSpec parse_fixture_spec_json(const std::string& text);
std::string fixture_spec_to_json(const FixtureSpec& spec);

struct FixtureBundle {
  FixtureSpec spec;
  std::uint64_t seed_used = 0;
  ComposedScene scene;
  NeuralMesh foreground;  ///< features, labels (object ids), colors
  NeuralMesh background;  ///< label 0
  std::vector<NeuralMesh> object_meshes;  ///< each object meshed on its own
  std::vector<Camera> cameras;
  std::vector<ImageArray<std::uint32_t>> view_labels;  ///< kMissIndex where nothing is hit
  Eigen::MatrixXd prototypes;  ///< row 0 background, row k object k-1
};

FixtureBundle generate(const FixtureSpec& spec);

/// Writes scene.json, foreground.ply/.nmf/.nml, background.ply/.nmf/.nml,
/// objects/object_<id>.ply, cameras.json, masks/view_<i>.png and
/// manifest.json into `dir`. Returns the manifest path.
std::filesystem::path write_bundle(const FixtureBundle& bundle, const std::filesystem::path& dir);

/// Two separated spheres with independent features.
FixtureSpec two_spheres_spec(double feature_noise = 0.0, std::uint64_t seed = 7);
/// Sphere A resting on box B (prototypes at cosine 0.7) plus a distant
/// sphere C sharing A's prototype.
FixtureSpec adjacent_twins_spec(double feature_noise = 0.02, std::uint64_t seed = 11);

}  // namespace decomesh

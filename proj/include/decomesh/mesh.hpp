#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace decomesh {

using Vec3 = Eigen::Vector3d;
using Face = std::array<std::uint32_t, 3>;
using VertexIndex = std::uint32_t;

/// Row-major n x 3 vertex positions (meters).
using PositionMatrix = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;
/// Row-major n x D per-vertex features, stored in single precision so the
/// sidecar round-trip is bit exact.
using FeatureMatrix =
    Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
/// Optional per-vertex RGB colors in [0,1].
using ColorMatrix = Eigen::Matrix<float, Eigen::Dynamic, 3, Eigen::RowMajor>;

/// Triangle mesh whose vertices carry feature vectors. Immutable once built;
/// the `with_*` members return modified copies.
class NeuralMesh {
 public:
  NeuralMesh() = default;

  /// Validates faces (indices in range, three distinct indices) and builds
  /// the symmetric vertex adjacency from the unique undirected edges.
  NeuralMesh(PositionMatrix positions, std::vector<Face> faces);

  Eigen::Index vertex_count() const { return positions_.rows(); }
  std::size_t face_count() const { return faces_.size(); }

  const PositionMatrix& positions() const { return positions_; }
  Vec3 position(VertexIndex v) const { return positions_.row(v).transpose(); }
  const std::vector<Face>& faces() const { return faces_; }

  /// Neighbors of `v` in ascending index order.
  std::span<const VertexIndex> neighbors(VertexIndex v) const {
    return {adjacency_.data() + adjacency_offsets_[v],
            adjacency_.data() + adjacency_offsets_[v + 1]};
  }

  bool has_features() const { return features_.size() > 0; }
  Eigen::Index feature_dim() const { return features_.cols(); }
  const FeatureMatrix& features() const { return features_; }

  const std::optional<std::vector<std::uint32_t>>& labels() const { return labels_; }
  const std::optional<ColorMatrix>& colors() const { return colors_; }

  NeuralMesh with_features(FeatureMatrix features) const;
  NeuralMesh with_labels(std::vector<std::uint32_t> labels) const;
  NeuralMesh with_colors(ColorMatrix colors) const;

  /// Mean length over unique undirected edges.
  double mean_edge_length() const;

 private:
  PositionMatrix positions_;
  std::vector<Face> faces_;
  std::vector<std::size_t> adjacency_offsets_{0};
  std::vector<VertexIndex> adjacency_;
  FeatureMatrix features_;
  std::optional<std::vector<std::uint32_t>> labels_;
  std::optional<ColorMatrix> colors_;
};

/// Per-vertex feature payload persisted as `<mesh>.nmf`:
/// "NMF1", u32 vertex_count, u32 dim, vertex_count*dim f32, little endian.
struct FeatureSidecar {
  std::uint32_t vertex_count = 0;
  std::uint32_t dim = 0;
  std::vector<float> data;
};

NeuralMesh attach_features(const NeuralMesh& mesh, const FeatureSidecar& sidecar);
FeatureSidecar sidecar_from_mesh(const NeuralMesh& mesh);

std::vector<std::uint8_t> encode_sidecar(const FeatureSidecar& sidecar);
FeatureSidecar decode_sidecar(std::span<const std::uint8_t> bytes);
void write_sidecar(const std::filesystem::path& path, const FeatureSidecar& sidecar);
FeatureSidecar read_sidecar(const std::filesystem::path& path);

/// Label sidecar `<mesh>.nml`: "NML1", u32 vertex_count, u32 dim (=1), u32 labels.
std::vector<std::uint8_t> encode_labels(std::span<const std::uint32_t> labels);
std::vector<std::uint32_t> decode_labels(std::span<const std::uint8_t> bytes);
void write_labels(const std::filesystem::path& path, std::span<const std::uint32_t> labels);
std::vector<std::uint32_t> read_labels(const std::filesystem::path& path);

/// Parses ASCII or binary little-endian PLY. Recognizes x/y/z, optional
/// red/green/blue, and a `vertex_indices` (or `vertex_index`) face list.
NeuralMesh parse_ply(std::span<const std::uint8_t> bytes);
NeuralMesh load_mesh(const std::filesystem::path& path);

/// Binary little-endian PLY with double positions (and uchar colors when
/// present). Output is a pure function of the mesh, so identical meshes give
/// identical bytes.
std::vector<std::uint8_t> encode_ply(const NeuralMesh& mesh);
std::string encode_ply_ascii(const NeuralMesh& mesh);
void save_mesh(const std::filesystem::path& path, const NeuralMesh& mesh);

/// `mesh.ply` -> `mesh.nmf` / `mesh.nml`.
std::filesystem::path feature_sidecar_path(const std::filesystem::path& mesh_path);
std::filesystem::path label_sidecar_path(const std::filesystem::path& mesh_path);

/// Loads the PLY plus any `.nmf` / `.nml` sidecars found next to it.
NeuralMesh load_mesh_with_sidecars(const std::filesystem::path& path);
void save_mesh_with_sidecars(const std::filesystem::path& path, const NeuralMesh& mesh);

struct Submesh {
  NeuralMesh mesh;
  /// original_index[i] is the source vertex of submesh vertex i.
  std::vector<VertexIndex> original_index;
};

/// Keeps the faces whose three vertices are all selected; vertices are
/// re-indexed densely in ascending source order. Duplicates in
/// `vertex_set` are ignored.
Submesh extract_submesh(const NeuralMesh& mesh, std::span<const VertexIndex> vertex_set);

/// Vertices carrying `label`, ascending.
std::vector<VertexIndex> vertices_with_label(const NeuralMesh& mesh, std::uint32_t label);

}  // namespace decomesh

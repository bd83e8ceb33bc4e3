#include "decomesh/mesh.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <limits>
#include <sstream>
#include <unordered_map>

#include "decomesh/detail/bytes.hpp"
#include "decomesh/error.hpp"

namespace decomesh {

NeuralMesh::NeuralMesh(PositionMatrix positions, std::vector<Face> faces)
    : positions_(std::move(positions)), faces_(std::move(faces)) {
  const auto n = static_cast<std::uint64_t>(positions_.rows());
  std::vector<std::pair<VertexIndex, VertexIndex>> directed;
  directed.reserve(faces_.size() * 6);
  for (std::size_t f = 0; f < faces_.size(); ++f) {
    const Face& face = faces_[f];
    for (auto idx : face) {
      if (idx >= n) {
        throw Error(ErrorCode::kIndexOutOfRange,
                    "face " + std::to_string(f) + " references vertex " +
                        std::to_string(idx) + " but the mesh has " +
                        std::to_string(n) + " vertices");
      }
    }
    if (face[0] == face[1] || face[1] == face[2] || face[0] == face[2]) {
      throw Error(ErrorCode::kDegenerateFace,
                  "face " + std::to_string(f) + " repeats a vertex index");
    }
    for (int k = 0; k < 3; ++k) {
      const VertexIndex a = face[k];
      const VertexIndex b = face[(k + 1) % 3];
      directed.emplace_back(a, b);
      directed.emplace_back(b, a);
    }
  }
  std::sort(directed.begin(), directed.end());
  directed.erase(std::unique(directed.begin(), directed.end()), directed.end());

  adjacency_offsets_.assign(n + 1, 0);
  for (const auto& [a, b] : directed) ++adjacency_offsets_[a + 1];
  for (std::size_t i = 0; i < n; ++i) adjacency_offsets_[i + 1] += adjacency_offsets_[i];
  adjacency_.reserve(directed.size());
  for (const auto& e : directed) adjacency_.push_back(e.second);
}

NeuralMesh NeuralMesh::with_features(FeatureMatrix features) const {
  if (features.rows() != vertex_count()) {
    throw Error(ErrorCode::kCountMismatch,
                "feature rows " + std::to_string(features.rows()) +
                    " != vertex count " + std::to_string(vertex_count()));
  }
  NeuralMesh out = *this;
  out.features_ = std::move(features);
  return out;
}

NeuralMesh NeuralMesh::with_labels(std::vector<std::uint32_t> labels) const {
  if (static_cast<Eigen::Index>(labels.size()) != vertex_count()) {
    throw Error(ErrorCode::kCountMismatch,
                "label count " + std::to_string(labels.size()) +
                    " != vertex count " + std::to_string(vertex_count()));
  }
  NeuralMesh out = *this;
  out.labels_ = std::move(labels);
  return out;
}

NeuralMesh NeuralMesh::with_colors(ColorMatrix colors) const {
  if (colors.rows() != vertex_count()) {
    throw Error(ErrorCode::kCountMismatch, "color rows != vertex count");
  }
  NeuralMesh out = *this;
  out.colors_ = std::move(colors);
  return out;
}

double NeuralMesh::mean_edge_length() const {
  double total = 0.0;
  std::size_t count = 0;
  for (VertexIndex v = 0; v < static_cast<VertexIndex>(vertex_count()); ++v) {
    for (VertexIndex w : neighbors(v)) {
      if (w <= v) continue;
      total += (positions_.row(v) - positions_.row(w)).norm();
      ++count;
    }
  }
  return count == 0 ? 0.0 : total / static_cast<double>(count);
}

// ---------------------------------------------------------------------------
// Sidecars

namespace {

constexpr char kFeatureMagic[4] = {'N', 'M', 'F', '1'};
constexpr char kLabelMagic[4] = {'N', 'M', 'L', '1'};
constexpr std::size_t kHeaderBytes = 12;

void check_magic(std::span<const std::uint8_t> bytes, const char (&magic)[4]) {
  if (bytes.size() < kHeaderBytes || std::memcmp(bytes.data(), magic, 4) != 0) {
    throw Error(ErrorCode::kBadMagic,
                std::string("expected sidecar magic ") + std::string(magic, 4));
  }
}

}  // namespace

NeuralMesh attach_features(const NeuralMesh& mesh, const FeatureSidecar& sidecar) {
  if (sidecar.vertex_count != static_cast<std::uint64_t>(mesh.vertex_count())) {
    throw Error(ErrorCode::kCountMismatch,
                "sidecar has " + std::to_string(sidecar.vertex_count) +
                    " vertices, mesh has " + std::to_string(mesh.vertex_count()));
  }
  if (sidecar.data.size() != std::size_t{sidecar.vertex_count} * sidecar.dim) {
    throw Error(ErrorCode::kCountMismatch, "sidecar payload size mismatch");
  }
  FeatureMatrix features = Eigen::Map<const FeatureMatrix>(
      sidecar.data.data(), sidecar.vertex_count, sidecar.dim);
  return mesh.with_features(std::move(features));
}

FeatureSidecar sidecar_from_mesh(const NeuralMesh& mesh) {
  FeatureSidecar s;
  s.vertex_count = static_cast<std::uint32_t>(mesh.vertex_count());
  s.dim = static_cast<std::uint32_t>(mesh.feature_dim());
  s.data.assign(mesh.features().data(), mesh.features().data() + mesh.features().size());
  return s;
}

std::vector<std::uint8_t> encode_sidecar(const FeatureSidecar& sidecar) {
  std::vector<std::uint8_t> out(kFeatureMagic, kFeatureMagic + 4);
  detail::put(out, sidecar.vertex_count);
  detail::put(out, sidecar.dim);
  const auto* p = reinterpret_cast<const std::uint8_t*>(sidecar.data.data());
  out.insert(out.end(), p, p + sidecar.data.size() * sizeof(float));
  return out;
}

FeatureSidecar decode_sidecar(std::span<const std::uint8_t> bytes) {
  check_magic(bytes, kFeatureMagic);
  FeatureSidecar s;
  s.vertex_count = detail::get<std::uint32_t>(bytes, 4);
  s.dim = detail::get<std::uint32_t>(bytes, 8);
  const std::size_t n = std::size_t{s.vertex_count} * s.dim;
  if (bytes.size() != kHeaderBytes + n * sizeof(float)) {
    throw Error(ErrorCode::kParseError, "feature sidecar payload size mismatch");
  }
  s.data.resize(n);
  std::memcpy(s.data.data(), bytes.data() + kHeaderBytes, n * sizeof(float));
  return s;
}

void write_sidecar(const std::filesystem::path& path, const FeatureSidecar& sidecar) {
  detail::write_file(path, encode_sidecar(sidecar));
}

FeatureSidecar read_sidecar(const std::filesystem::path& path) {
  return decode_sidecar(detail::read_file(path));
}

std::vector<std::uint8_t> encode_labels(std::span<const std::uint32_t> labels) {
  std::vector<std::uint8_t> out(kLabelMagic, kLabelMagic + 4);
  detail::put(out, static_cast<std::uint32_t>(labels.size()));
  detail::put(out, std::uint32_t{1});
  for (auto l : labels) detail::put(out, l);
  return out;
}

std::vector<std::uint32_t> decode_labels(std::span<const std::uint8_t> bytes) {
  check_magic(bytes, kLabelMagic);
  const auto count = detail::get<std::uint32_t>(bytes, 4);
  const auto dim = detail::get<std::uint32_t>(bytes, 8);
  if (dim != 1 || bytes.size() != kHeaderBytes + std::size_t{count} * 4) {
    throw Error(ErrorCode::kParseError, "label sidecar payload size mismatch");
  }
  std::vector<std::uint32_t> labels(count);
  std::memcpy(labels.data(), bytes.data() + kHeaderBytes, std::size_t{count} * 4);
  return labels;
}

void write_labels(const std::filesystem::path& path, std::span<const std::uint32_t> labels) {
  detail::write_file(path, encode_labels(labels));
}

std::vector<std::uint32_t> read_labels(const std::filesystem::path& path) {
  return decode_labels(detail::read_file(path));
}

// ---------------------------------------------------------------------------
// PLY

namespace {

enum class PlyType { kInt8, kUint8, kInt16, kUint16, kInt32, kUint32, kFloat32, kFloat64 };

PlyType parse_ply_type(const std::string& name) {
  if (name == "char" || name == "int8") return PlyType::kInt8;
  if (name == "uchar" || name == "uint8") return PlyType::kUint8;
  if (name == "short" || name == "int16") return PlyType::kInt16;
  if (name == "ushort" || name == "uint16") return PlyType::kUint16;
  if (name == "int" || name == "int32") return PlyType::kInt32;
  if (name == "uint" || name == "uint32") return PlyType::kUint32;
  if (name == "float" || name == "float32") return PlyType::kFloat32;
  if (name == "double" || name == "float64") return PlyType::kFloat64;
  throw Error(ErrorCode::kParseError, "unknown PLY type '" + name + "'");
}

struct PlyProperty {
  std::string name;
  PlyType type = PlyType::kFloat32;
  bool is_list = false;
  PlyType count_type = PlyType::kUint8;
};

struct PlyElement {
  std::string name;
  std::size_t count = 0;
  std::vector<PlyProperty> properties;
};

/// Sequential value reader over either ASCII tokens or little-endian binary.
class PlyCursor {
 public:
  PlyCursor(std::span<const std::uint8_t> body, bool binary) : body_(body), binary_(binary) {}

  double read(PlyType type) {
    if (!binary_) return read_ascii();
    switch (type) {
      case PlyType::kInt8: return take<std::int8_t>();
      case PlyType::kUint8: return take<std::uint8_t>();
      case PlyType::kInt16: return take<std::int16_t>();
      case PlyType::kUint16: return take<std::uint16_t>();
      case PlyType::kInt32: return take<std::int32_t>();
      case PlyType::kUint32: return take<std::uint32_t>();
      case PlyType::kFloat32: return take<float>();
      case PlyType::kFloat64: return take<double>();
    }
    return 0.0;
  }

 private:
  template <typename T>
  double take() {
    if (pos_ + sizeof(T) > body_.size()) {
      throw Error(ErrorCode::kParseError, "unexpected end of PLY data");
    }
    const T v = detail::get<T>(body_, pos_);
    pos_ += sizeof(T);
    return static_cast<double>(v);
  }

  double read_ascii() {
    while (pos_ < body_.size() && std::isspace(body_[pos_])) ++pos_;
    if (pos_ >= body_.size()) throw Error(ErrorCode::kParseError, "unexpected end of PLY data");
    const char* begin = reinterpret_cast<const char*>(body_.data() + pos_);
    const char* end = reinterpret_cast<const char*>(body_.data() + body_.size());
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc()) throw Error(ErrorCode::kParseError, "malformed PLY number");
    pos_ += static_cast<std::size_t>(ptr - begin);
    return value;
  }

  std::span<const std::uint8_t> body_;
  bool binary_;
  std::size_t pos_ = 0;
};

}  // namespace

NeuralMesh parse_ply(std::span<const std::uint8_t> bytes) {
  const std::string_view text(reinterpret_cast<const char*>(bytes.data()), bytes.size());
  const auto header_end = text.find("end_header");
  if (text.substr(0, 3) != "ply" || header_end == std::string_view::npos) {
    throw Error(ErrorCode::kParseError, "not a PLY file");
  }
  const auto body_start = text.find('\n', header_end);
  if (body_start == std::string_view::npos) throw Error(ErrorCode::kParseError, "truncated PLY header");

  std::istringstream header{std::string(text.substr(0, header_end))};
  std::vector<PlyElement> elements;
  bool binary = false;
  std::string line;
  while (std::getline(header, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string keyword;
    ls >> keyword;
    if (keyword == "format") {
      std::string fmt;
      ls >> fmt;
      if (fmt == "binary_little_endian") {
        binary = true;
      } else if (fmt != "ascii") {
        throw Error(ErrorCode::kParseError, "unsupported PLY format '" + fmt + "'");
      }
    } else if (keyword == "element") {
      PlyElement e;
      ls >> e.name >> e.count;
      if (!ls) throw Error(ErrorCode::kParseError, "malformed element line");
      elements.push_back(std::move(e));
    } else if (keyword == "property") {
      if (elements.empty()) throw Error(ErrorCode::kParseError, "property before element");
      PlyProperty p;
      std::string type;
      ls >> type;
      if (type == "list") {
        std::string count_type, item_type;
        ls >> count_type >> item_type >> p.name;
        p.is_list = true;
        p.count_type = parse_ply_type(count_type);
        p.type = parse_ply_type(item_type);
      } else {
        p.type = parse_ply_type(type);
        ls >> p.name;
      }
      elements.back().properties.push_back(std::move(p));
    }
  }

  PlyCursor cursor(bytes.subspan(body_start + 1), binary);
  PositionMatrix positions;
  std::vector<Face> faces;
  std::optional<ColorMatrix> colors;

  for (const PlyElement& e : elements) {
    if (e.name == "vertex") {
      positions.resize(static_cast<Eigen::Index>(e.count), 3);
      int slot[6] = {-1, -1, -1, -1, -1, -1};
      bool uchar_color = false;
      for (std::size_t k = 0; k < e.properties.size(); ++k) {
        const auto& name = e.properties[k].name;
        constexpr const char* kNames[6] = {"x", "y", "z", "red", "green", "blue"};
        for (int s = 0; s < 6; ++s) {
          if (name == kNames[s]) slot[s] = static_cast<int>(k);
        }
        if (name == "red") uchar_color = e.properties[k].type == PlyType::kUint8;
      }
      if (slot[0] < 0 || slot[1] < 0 || slot[2] < 0) {
        throw Error(ErrorCode::kParseError, "vertex element lacks x/y/z");
      }
      const bool has_color = slot[3] >= 0 && slot[4] >= 0 && slot[5] >= 0;
      if (has_color) colors = ColorMatrix(static_cast<Eigen::Index>(e.count), 3);
      std::vector<double> values(e.properties.size());
      for (std::size_t i = 0; i < e.count; ++i) {
        for (std::size_t k = 0; k < e.properties.size(); ++k) {
          const auto& p = e.properties[k];
          if (p.is_list) {
            const auto len = static_cast<std::size_t>(cursor.read(p.count_type));
            for (std::size_t j = 0; j < len; ++j) cursor.read(p.type);
          } else {
            values[k] = cursor.read(p.type);
          }
        }
        const auto row = static_cast<Eigen::Index>(i);
        positions.row(row) << values[slot[0]], values[slot[1]], values[slot[2]];
        if (has_color) {
          const float scale = uchar_color ? 1.0f / 255.0f : 1.0f;
          for (int c = 0; c < 3; ++c) {
            (*colors)(row, c) = static_cast<float>(values[slot[3 + c]]) * scale;
          }
        }
      }
    } else if (e.name == "face") {
      faces.reserve(e.count);
      for (std::size_t i = 0; i < e.count; ++i) {
        for (const auto& p : e.properties) {
          if (!p.is_list) {
            cursor.read(p.type);
            continue;
          }
          const auto len = static_cast<std::size_t>(cursor.read(p.count_type));
          const bool is_index = p.name == "vertex_indices" || p.name == "vertex_index";
          if (is_index && len != 3) {
            throw Error(ErrorCode::kNonTriangleFace,
                        "face " + std::to_string(i) + " has " + std::to_string(len) + " vertices");
          }
          Face face{};
          for (std::size_t j = 0; j < len; ++j) {
            const double v = cursor.read(p.type);
            if (is_index) {
              if (v < 0) throw Error(ErrorCode::kIndexOutOfRange, "negative face index");
              face[j] = static_cast<std::uint32_t>(v);
            }
          }
          if (is_index) faces.push_back(face);
        }
      }
    } else {
      for (std::size_t i = 0; i < e.count; ++i) {
        for (const auto& p : e.properties) {
          const std::size_t len = p.is_list ? static_cast<std::size_t>(cursor.read(p.count_type)) : 1;
          for (std::size_t j = 0; j < len; ++j) cursor.read(p.type);
        }
      }
    }
  }

  NeuralMesh mesh(std::move(positions), std::move(faces));
  if (colors) mesh = mesh.with_colors(std::move(*colors));
  return mesh;
}

NeuralMesh load_mesh(const std::filesystem::path& path) {
  return parse_ply(detail::read_file(path));
}

std::vector<std::uint8_t> encode_ply(const NeuralMesh& mesh) {
  std::ostringstream header;
  header << "ply\nformat binary_little_endian 1.0\n"
         << "element vertex " << mesh.vertex_count() << "\n"
         << "property double x\nproperty double y\nproperty double z\n";
  const bool has_color = mesh.colors().has_value();
  if (has_color) header << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  header << "element face " << mesh.face_count() << "\n"
         << "property list uchar uint vertex_indices\nend_header\n";
  const std::string h = header.str();
  std::vector<std::uint8_t> out(h.begin(), h.end());
  for (Eigen::Index v = 0; v < mesh.vertex_count(); ++v) {
    for (int c = 0; c < 3; ++c) detail::put(out, mesh.positions()(v, c));
    if (has_color) {
      for (int c = 0; c < 3; ++c) {
        const float x = std::clamp((*mesh.colors())(v, c), 0.0f, 1.0f);
        detail::put(out, static_cast<std::uint8_t>(std::lround(x * 255.0f)));
      }
    }
  }
  for (const Face& f : mesh.faces()) {
    detail::put(out, std::uint8_t{3});
    for (auto idx : f) detail::put(out, idx);
  }
  return out;
}

std::string encode_ply_ascii(const NeuralMesh& mesh) {
  std::ostringstream os;
  os.precision(17);
  os << "ply\nformat ascii 1.0\nelement vertex " << mesh.vertex_count()
     << "\nproperty double x\nproperty double y\nproperty double z\n"
     << "element face " << mesh.face_count()
     << "\nproperty list uchar uint vertex_indices\nend_header\n";
  for (Eigen::Index v = 0; v < mesh.vertex_count(); ++v) {
    os << mesh.positions()(v, 0) << ' ' << mesh.positions()(v, 1) << ' '
       << mesh.positions()(v, 2) << '\n';
  }
  for (const Face& f : mesh.faces()) os << "3 " << f[0] << ' ' << f[1] << ' ' << f[2] << '\n';
  return os.str();
}

void save_mesh(const std::filesystem::path& path, const NeuralMesh& mesh) {
  detail::write_file(path, encode_ply(mesh));
}

std::filesystem::path feature_sidecar_path(const std::filesystem::path& mesh_path) {
  auto p = mesh_path;
  return p.replace_extension(".nmf");
}

std::filesystem::path label_sidecar_path(const std::filesystem::path& mesh_path) {
  auto p = mesh_path;
  return p.replace_extension(".nml");
}

NeuralMesh load_mesh_with_sidecars(const std::filesystem::path& path) {
  NeuralMesh mesh = load_mesh(path);
  if (const auto nmf = feature_sidecar_path(path); std::filesystem::exists(nmf)) {
    mesh = attach_features(mesh, read_sidecar(nmf));
  }
  if (const auto nml = label_sidecar_path(path); std::filesystem::exists(nml)) {
    mesh = mesh.with_labels(read_labels(nml));
  }
  return mesh;
}

void save_mesh_with_sidecars(const std::filesystem::path& path, const NeuralMesh& mesh) {
  save_mesh(path, mesh);
  if (mesh.has_features()) write_sidecar(feature_sidecar_path(path), sidecar_from_mesh(mesh));
  if (mesh.labels()) write_labels(label_sidecar_path(path), *mesh.labels());
}

// ---------------------------------------------------------------------------
// Submesh extraction

Submesh extract_submesh(const NeuralMesh& mesh, std::span<const VertexIndex> vertex_set) {
  if (vertex_set.empty()) throw Error(ErrorCode::kEmptySet, "empty vertex set");
  const auto n = static_cast<std::size_t>(mesh.vertex_count());
  constexpr auto kUnmapped = std::numeric_limits<VertexIndex>::max();
  std::vector<VertexIndex> remap(n, kUnmapped);
  for (auto v : vertex_set) {
    if (v >= n) throw Error(ErrorCode::kIndexOutOfRange, "vertex " + std::to_string(v) + " not in mesh");
    remap[v] = 0;
  }
  Submesh out;
  for (std::size_t v = 0; v < n; ++v) {
    if (remap[v] == kUnmapped) continue;
    remap[v] = static_cast<VertexIndex>(out.original_index.size());
    out.original_index.push_back(static_cast<VertexIndex>(v));
  }
  const auto m = static_cast<Eigen::Index>(out.original_index.size());
  PositionMatrix positions(m, 3);
  for (Eigen::Index i = 0; i < m; ++i) positions.row(i) = mesh.positions().row(out.original_index[i]);
  std::vector<Face> faces;
  for (const Face& f : mesh.faces()) {
    if (remap[f[0]] == kUnmapped || remap[f[1]] == kUnmapped || remap[f[2]] == kUnmapped) continue;
    faces.push_back({remap[f[0]], remap[f[1]], remap[f[2]]});
  }
  out.mesh = NeuralMesh(std::move(positions), std::move(faces));
  if (mesh.has_features()) {
    FeatureMatrix features(m, mesh.feature_dim());
    for (Eigen::Index i = 0; i < m; ++i) features.row(i) = mesh.features().row(out.original_index[i]);
    out.mesh = out.mesh.with_features(std::move(features));
  }
  if (mesh.labels()) {
    std::vector<std::uint32_t> labels(static_cast<std::size_t>(m));
    for (Eigen::Index i = 0; i < m; ++i) labels[i] = (*mesh.labels())[out.original_index[i]];
    out.mesh = out.mesh.with_labels(std::move(labels));
  }
  if (mesh.colors()) {
    ColorMatrix colors(m, 3);
    for (Eigen::Index i = 0; i < m; ++i) colors.row(i) = mesh.colors()->row(out.original_index[i]);
    out.mesh = out.mesh.with_colors(std::move(colors));
  }
  return out;
}

std::vector<VertexIndex> vertices_with_label(const NeuralMesh& mesh, std::uint32_t label) {
  std::vector<VertexIndex> out;
  if (!mesh.labels()) return out;
  const auto& labels = *mesh.labels();
  for (std::size_t v = 0; v < labels.size(); ++v) {
    if (labels[v] == label) out.push_back(static_cast<VertexIndex>(v));
  }
  return out;
}

}  // namespace decomesh

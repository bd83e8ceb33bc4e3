#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>

#include "doctest.h"
#include "json.hpp"
#include "decomesh/fixtures.hpp"
#include "decomesh/losses.hpp"
#include "support/oracles.hpp"

using namespace decomesh;
using nlohmann::json;

namespace {

double cosine(const Eigen::RowVectorXf& a, const Eigen::RowVectorXf& b) {
  return static_cast<double>(a.dot(b)) / (static_cast<double>(a.norm()) * static_cast<double>(b.norm()));
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_SUITE("fixtures") {

TEST_CASE("marching cubes of a sphere") {
  auto f = [](const Vec3& p) { return p.norm() - 0.8; };
  const NeuralMesh m = marching_cubes(f, Vec3::Constant(-1), Vec3::Constant(1), 0.05);
  CHECK(m.vertex_count() > 500);
  double worst = 0.0;
  for (VertexIndex v = 0; v < m.vertex_count(); ++v) worst = std::max(worst, std::abs(f(m.position(v))));
  CHECK(worst < 0.05 * 0.1);
  // Closed and welded: every edge is shared by exactly two faces.
  std::map<std::pair<VertexIndex, VertexIndex>, int> edges;
  for (const auto& t : m.faces())
    for (int k = 0; k < 3; ++k) {
      const auto a = t[k], b = t[(k + 1) % 3];
      ++edges[{std::min(a, b), std::max(a, b)}];
    }
  for (const auto& [e, count] : edges) CHECK(count == 2);
  CHECK(oracle::component(m, 0).size() == static_cast<std::size_t>(m.vertex_count()));
  // Normals point toward increasing f (outward).
  for (const auto& t : m.faces()) {
    const Vec3 a = m.position(t[0]), b = m.position(t[1]), c = m.position(t[2]);
    const Vec3 n = (b - a).cross(c - a);
    CHECK(n.dot((a + b + c) / 3.0) > 0.0);
  }
}

TEST_CASE("icosphere and room orientation") {
  const NeuralMesh s = icosphere(Vec3(1, 0, 0), 0.5, 2);
  CHECK(s.vertex_count() == 162);
  CHECK(s.face_count() == 320);
  for (VertexIndex v = 0; v < s.vertex_count(); ++v) CHECK((s.position(v) - Vec3(1, 0, 0)).norm() == doctest::Approx(0.5));
  const NeuralMesh r = room_mesh(Vec3(-2, -2, 0), Vec3(2, 2, 3), 4);
  const Vec3 centre(0, 0, 1.5);
  for (const auto& t : r.faces()) {
    const Vec3 a = r.position(t[0]), b = r.position(t[1]), c = r.position(t[2]);
    CHECK((b - a).cross(c - a).dot(centre - a) > 0.0);
  }
}

TEST_CASE("two spheres bundle contract") {
  const FixtureBundle b = generate(two_spheres_spec());
  const auto& labels = *b.foreground.labels();
  std::set<std::uint32_t> ids(labels.begin(), labels.end());
  CHECK(ids == std::set<std::uint32_t>{1, 2});
  CHECK(b.background.labels().has_value());
  for (auto l : *b.background.labels()) CHECK(l == 0u);
  REQUIRE(b.object_meshes.size() == 2);
  // Feature clusters: cosine 1 inside an object, |cos| < 0.5 across.
  const auto& f = b.foreground.features();
  const auto a = vertices_with_label(b.foreground, 1), c = vertices_with_label(b.foreground, 2);
  for (std::size_t i = 0; i < a.size(); i += 37) CHECK(cosine(f.row(a[i]), f.row(a[0])) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(std::abs(cosine(f.row(a[0]), f.row(c[0]))) < 0.5);
  for (Eigen::Index i = 0; i < b.prototypes.rows(); ++i)
    for (Eigen::Index j = i + 1; j < b.prototypes.rows(); ++j)
      CHECK(std::abs(b.prototypes.row(i).dot(b.prototypes.row(j))) < 0.5);
  // Vertices lie on the analytic surface of their own object.
  for (VertexIndex v = 0; v < b.foreground.vertex_count(); v += 7) {
    const auto& prim = b.scene.foreground.primitives()[labels[v] - 1];
    CHECK(std::abs(prim.distance(b.foreground.position(v))) < 0.1 * b.foreground.mean_edge_length() + 1e-3);
  }
  // Components coincide with labels.
  CHECK(oracle::component(b.foreground, a[0]) == std::set<VertexIndex>(a.begin(), a.end()));
  // Every camera sees foreground.
  REQUIRE(b.view_labels.size() == b.cameras.size());
  for (const auto& view : b.view_labels) CHECK(((view == 1u) || (view == 2u)).any());
}

TEST_CASE("generation is deterministic") {
  const FixtureBundle a = generate(two_spheres_spec(0.1, 3));
  const FixtureBundle b = generate(two_spheres_spec(0.1, 3));
  CHECK(a.seed_used == b.seed_used);
  CHECK(encode_ply(a.foreground) == encode_ply(b.foreground));
  CHECK(a.foreground.features() == b.foreground.features());
  CHECK(a.prototypes == b.prototypes);
  const FixtureBundle c = generate(two_spheres_spec(0.1, 4));
  CHECK(c.foreground.features() != a.foreground.features());
}

TEST_CASE("written bundle is byte identical across runs") {
  const auto root = std::filesystem::temp_directory_path() / "decomesh_unit_fixture";
  std::filesystem::remove_all(root);
  const auto m1 = write_bundle(generate(two_spheres_spec()), root / "a");
  const auto m2 = write_bundle(generate(two_spheres_spec()), root / "b");
  for (const char* name : {"foreground.ply", "foreground.nmf", "foreground.nml", "background.ply", "scene.json",
                           "cameras.json", "objects/object_1.ply", "masks/view_0.png"}) {
    CAPTURE(name);
    CHECK(std::filesystem::exists(root / "a" / name));
    CHECK(slurp(root / "a" / name) == slurp(root / "b" / name));
  }
  CHECK(slurp(m1).find("\"seed\"") != std::string::npos);
  (void)m2;
}

TEST_CASE("disjoint fixture has zero object distinction") {
  const FixtureBundle b = generate(two_spheres_spec());
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-2.5, 2.5), z(-0.5, 3.5);
  std::vector<Vec3> pts;
  for (int i = 0; i < 5000; ++i) pts.emplace_back(u(rng), u(rng), z(rng));
  CHECK(loss_object_distinction(b.scene, pts) == 0.0);
}

TEST_CASE("adjacent twins prototypes") {
  const FixtureBundle b = generate(adjacent_twins_spec());
  CHECK(b.prototypes.row(1).dot(b.prototypes.row(2)) == doctest::Approx(0.7).epsilon(1e-9));
  CHECK(b.prototypes.row(1) == b.prototypes.row(3));
  const auto a = vertices_with_label(b.foreground, 1);
  const auto bb = vertices_with_label(b.foreground, 2);
  // Sphere A rests on box B, so the two share mesh edges.
  CHECK(oracle::component(b.foreground, a[0]).count(bb[0]) == 1);
}

TEST_CASE("spec validation and JSON round trip") {
  FixtureSpec s = adjacent_twins_spec();
  const FixtureSpec r = parse_fixture_spec_json(fixture_spec_to_json(s));
  CHECK(fixture_spec_to_json(r) == fixture_spec_to_json(s));
  FixtureSpec bad = two_spheres_spec();
  bad.feature_dim = 0;
  CHECK_THROWS_AS(bad.validate(), Error);
  FixtureSpec overlap = two_spheres_spec();
  std::get<Sphere>(overlap.objects[1].shape).center = std::get<Sphere>(overlap.objects[0].shape).center;
  CHECK_THROWS_AS(generate(overlap), Error);
  CHECK_THROWS_AS(parse_fixture_spec_json("{\"objects\": 3}"), Error);
  FixtureSpec outside = two_spheres_spec();
  outside.cameras.radius = 2.5;
  CHECK_THROWS_AS(generate(outside), Error);
}

TEST_CASE("pinned fixture files match the presets") {
  const std::filesystem::path dir = DECOMESH_FIXTURES_DIR;
  const json manifest = json::parse(std::ifstream(dir / "manifest.json"));
  REQUIRE(manifest["fixtures"].size() == 2);
  for (const auto& entry : manifest["fixtures"]) {
    std::ifstream in(dir / entry["spec"].get<std::string>());
    const std::string text{std::istreambuf_iterator<char>(in), {}};
    const FixtureSpec spec = parse_fixture_spec_json(text);
    CHECK(spec.seed == entry["seed"].get<std::uint64_t>());
    CHECK(spec.feature_noise == entry["feature_noise"].get<double>());
    const FixtureSpec preset = entry["name"] == "two_spheres" ? two_spheres_spec() : adjacent_twins_spec();
    CHECK(fixture_spec_to_json(spec) == fixture_spec_to_json(preset));
  }
}

}

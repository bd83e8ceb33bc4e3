#include <random>

#include "doctest.h"
#include "decomesh/fixtures.hpp"
#include "decomesh/metrics.hpp"
#include "support/oracles.hpp"

using namespace decomesh;

namespace {

PointSet random_points(std::mt19937_64& rng, Eigen::Index n, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  PointSet p(n, 3);
  for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] = u(rng);
  return p;
}

NeuralMesh unit_square() {
  PositionMatrix p(4, 3);
  p << 0, 0, 0, 1, 0, 0, 1, 1, 0, 0, 1, 0;
  return NeuralMesh(p, {{0, 1, 2}, {0, 2, 3}});
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("k-d tree matches linear scan") {
  std::mt19937_64 rng(4);
  for (Eigen::Index n : {1, 2, 7, 8, 9, 100, 1000}) {
    const PointSet pts = random_points(rng, n);
    const KdTree tree(pts);
    CHECK(tree.size() == static_cast<std::size_t>(n));
    const PointSet q = random_points(rng, 200, 1.5);
    for (Eigen::Index i = 0; i < q.rows(); ++i) {
      const Vec3 query = q.row(i).transpose();
      double best = std::numeric_limits<double>::infinity();
      std::size_t idx = 0;
      for (Eigen::Index j = 0; j < n; ++j) {
        const double d = (pts.row(j).transpose() - query).norm();
        if (d < best) best = d, idx = static_cast<std::size_t>(j);
      }
      const KdTree::Hit h = tree.nearest(query);
      CHECK(h.distance == best);
      CHECK(h.index == idx);
    }
  }
}

TEST_CASE("k-d tree breaks ties toward the lowest index") {
  PointSet p(4, 3);
  p << 1, 0, 0, -1, 0, 0, 1, 0, 0, 0, 1, 0;
  const KdTree t(p);
  CHECK(t.nearest(Vec3(1, 0, 0)).index == 0);
  CHECK(t.nearest(Vec3::Zero()).index == 0);
  CHECK_THROWS_AS(KdTree(PointSet(0, 3)), Error);
}

TEST_CASE("evaluate against the brute-force oracle") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 10; ++trial) {
    const PointSet a = random_points(rng, 200), b = random_points(rng, 200);
    const MetricsReport r = evaluate(a, b, 0.2);
    const auto o = oracle::brute_metrics(a, b, 0.2);
    CHECK(std::abs(r.accuracy - o.accuracy) < 1e-9);
    CHECK(std::abs(r.completeness - o.completeness) < 1e-9);
    CHECK(std::abs(r.chamfer_l1 - o.chamfer) < 1e-9);
    CHECK(std::abs(r.precision - o.precision) < 1e-9);
    CHECK(std::abs(r.recall - o.recall) < 1e-9);
    CHECK(std::abs(r.f_score - o.fscore) < 1e-9);
    CHECK(r.pred_count == 200);
  }
}

TEST_CASE("identical sets are exact") {
  std::mt19937_64 rng(9);
  const PointSet a = random_points(rng, 500);
  const MetricsReport r = evaluate(a, a);
  CHECK(r.accuracy == 0.0);
  CHECK(r.completeness == 0.0);
  CHECK(r.chamfer_l1 == 0.0);
  CHECK(r.precision == 100.0);
  CHECK(r.recall == 100.0);
  CHECK(r.f_score == 100.0);
  CHECK(r.threshold == 0.05);
}

TEST_CASE("translated plane") {
  const double tau = 0.05;
  PointSet gt(101 * 101, 3), pred(101 * 101, 3);
  for (int i = 0; i <= 100; ++i)
    for (int j = 0; j <= 100; ++j) {
      gt.row(i * 101 + j) << i * 0.01, j * 0.01, 0.0;
      pred.row(i * 101 + j) << i * 0.01, j * 0.01, 2 * tau;
    }
  const MetricsReport r = evaluate(pred, gt, tau);
  CHECK(r.precision == 0.0);
  CHECK(r.recall == 0.0);
  CHECK(r.f_score == 0.0);
  CHECK(r.chamfer_l1 == doctest::Approx(2 * tau).epsilon(0.01));
}

TEST_CASE("symmetry and rigid invariance") {
  std::mt19937_64 rng(10);
  const PointSet a = random_points(rng, 300), b = random_points(rng, 250);
  const MetricsReport ab = evaluate(a, b, 0.1), ba = evaluate(b, a, 0.1);
  CHECK(ab.accuracy == ba.completeness);
  CHECK(ab.precision == ba.recall);
  const Eigen::Matrix3d rot = Eigen::AngleAxisd(0.7, Vec3(1, 2, 3).normalized()).toRotationMatrix();
  const Eigen::RowVector3d shift(3, -1, 2);
  const PointSet ra = (a * rot.transpose()).rowwise() + shift;
  const PointSet rb = (b * rot.transpose()).rowwise() + shift;
  const MetricsReport rr = evaluate(ra, rb, 0.1);
  CHECK(std::abs(rr.accuracy - ab.accuracy) < 1e-9);
  CHECK(std::abs(rr.completeness - ab.completeness) < 1e-9);
  CHECK(std::abs(rr.f_score - ab.f_score) < 1e-9);
}

TEST_CASE("f-score identity") {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 10; ++trial) {
    const MetricsReport r = evaluate(random_points(rng, 100), random_points(rng, 120), 0.15);
    if (r.precision + r.recall > 0) {
      CHECK(r.f_score == doctest::Approx(2 * r.precision * r.recall / (r.precision + r.recall)).epsilon(1e-14));
    }
    CHECK(r.chamfer_l1 == doctest::Approx((r.accuracy + r.completeness) / 2).epsilon(1e-14));
  }
  CHECK_THROWS_AS(evaluate(PointSet(0, 3), random_points(rng, 3)), Error);
}

TEST_CASE("surface sampling") {
  SUBCASE("unit square centroid") {
    const PointSet p = sample_surface(unit_square(), 10000, 1);
    CHECK(p.rows() == 10000);
    const Eigen::RowVector3d mean = p.colwise().mean();
    CHECK(std::abs(mean.x() - 0.5) < 0.02);
    CHECK(std::abs(mean.y() - 0.5) < 0.02);
    CHECK(mean.z() == 0.0);
  }
  SUBCASE("points land inside a single triangle") {
    PositionMatrix v(3, 3);
    v << 0, 0, 0, 2, 0, 0, 0, 1, 1;
    const NeuralMesh tri(v, {{0, 1, 2}});
    const PointSet p = sample_surface(tri, 3, 5);
    for (Eigen::Index i = 0; i < 3; ++i) {
      // Solve p = a + s (b - a) + t (c - a) in least squares and check the barycentrics.
      Eigen::Matrix<double, 3, 2> e;
      e.col(0) = tri.position(1) - tri.position(0);
      e.col(1) = tri.position(2) - tri.position(0);
      const Eigen::Vector2d st = e.colPivHouseholderQr().solve(p.row(i).transpose() - tri.position(0));
      CHECK((e * st + tri.position(0) - p.row(i).transpose()).norm() < 1e-12);
      CHECK(st.minCoeff() >= -1e-12);
      CHECK(st.sum() <= 1 + 1e-12);
    }
  }
  SUBCASE("deterministic under a seed") {
    const NeuralMesh s = icosphere(Vec3::Zero(), 1.0, 2);
    CHECK(sample_surface(s, 500, 77) == sample_surface(s, 500, 77));
    CHECK(sample_surface(s, 500, 77) != sample_surface(s, 500, 78));
  }
  SUBCASE("area weighting") {
    PositionMatrix v(6, 3);
    v << 0, 0, 0, 1, 0, 0, 0, 1, 0, 5, 0, 0, 8, 0, 0, 5, 3, 0;
    const NeuralMesh m(v, {{0, 1, 2}, {3, 4, 5}});
    const PointSet p = sample_surface(m, 20000, 3);
    const double big = static_cast<double>((p.col(0).array() >= 4.99).count()) / 20000.0;
    CHECK(big == doctest::Approx(9.0 / 10.0).epsilon(0.01));
  }
  SUBCASE("errors") {
    PositionMatrix v(3, 3);
    v << 0, 0, 0, 1, 0, 0, 2, 0, 0;
    CHECK_THROWS_AS(sample_surface(NeuralMesh(v, {{0, 1, 2}}), 10, 0), Error);
    CHECK_THROWS_AS(sample_surface(NeuralMesh(v, {}), 10, 0), Error);
  }
}

TEST_CASE("report formats") {
  MetricsReport r;
  r.accuracy = 0.25;
  r.f_score = 50;
  CHECK(metrics_csv_header() == "Acc,Comp,C-L1,Prec,Recall,F-score");
  CHECK(metrics_to_csv_row(r) == "0.25,0,0,0,0,50");
  const std::string j = metrics_to_json(r);
  CHECK(j.find("\"accuracy\": 0.25") != std::string::npos);
  CHECK(j.find("\"f_score\": 50.0") != std::string::npos);
}

}

#pragma once

// Independent reference implementations used as test oracles. Each one is
// deliberately naive so it shares no code path with the library.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <optional>
#include <random>
#include <set>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "decomesh/mesh.hpp"

namespace oracle {

using decomesh::Vec3;

/// Smallest positive root of |o + t v - c| = r.
inline std::optional<double> ray_sphere(const Vec3& o, const Vec3& v, const Vec3& c, double r) {
  const Vec3 oc = o - c;
  const double b = oc.dot(v);
  const double disc = b * b - (oc.squaredNorm() - r * r);
  if (disc < 0.0) return std::nullopt;
  const double s = std::sqrt(disc);
  if (-b - s > 0.0) return -b - s;
  if (-b + s > 0.0) return -b + s;
  return std::nullopt;
}

/// Moller-Trumbore; returns t of the hit.
inline std::optional<double> ray_triangle(const Vec3& o, const Vec3& v, const Vec3& a, const Vec3& b,
                                          const Vec3& c) {
  const Vec3 e1 = b - a, e2 = c - a;
  const Vec3 p = v.cross(e2);
  const double det = e1.dot(p);
  if (std::abs(det) < 1e-14) return std::nullopt;
  const double inv = 1.0 / det;
  const Vec3 s = o - a;
  const double u = s.dot(p) * inv;
  if (u < 0.0 || u > 1.0) return std::nullopt;
  const Vec3 q = s.cross(e1);
  const double w = v.dot(q) * inv;
  if (w < 0.0 || u + w > 1.0) return std::nullopt;
  const double t = e2.dot(q) * inv;
  if (t <= 0.0) return std::nullopt;
  return t;
}

/// Closest triangle hit over every face of the mesh.
inline std::optional<double> ray_mesh(const decomesh::NeuralMesh& mesh, const Vec3& o, const Vec3& v) {
  std::optional<double> best;
  for (const auto& f : mesh.faces()) {
    const auto t = ray_triangle(o, v, mesh.position(f[0]), mesh.position(f[1]), mesh.position(f[2]));
    if (t && (!best || *t < *best)) best = t;
  }
  return best;
}

/// Graph distance from `source` to every vertex (-1 when unreachable).
inline std::vector<int> bfs_distance(const decomesh::NeuralMesh& mesh, decomesh::VertexIndex source) {
  std::vector<int> dist(static_cast<std::size_t>(mesh.vertex_count()), -1);
  std::deque<decomesh::VertexIndex> queue{source};
  dist[source] = 0;
  while (!queue.empty()) {
    const auto u = queue.front();
    queue.pop_front();
    for (const auto& f : mesh.faces()) {
      for (int k = 0; k < 3; ++k) {
        if (f[k] != u) continue;
        for (int m = 0; m < 3; ++m) {
          const auto w = f[m];
          if (w != u && dist[w] < 0) {
            dist[w] = dist[u] + 1;
            queue.push_back(w);
          }
        }
      }
    }
  }
  return dist;
}

/// Connected component containing `source`, computed by union-find over faces.
inline std::set<decomesh::VertexIndex> component(const decomesh::NeuralMesh& mesh,
                                                 decomesh::VertexIndex source) {
  std::vector<std::uint32_t> parent(static_cast<std::size_t>(mesh.vertex_count()));
  for (std::uint32_t i = 0; i < parent.size(); ++i) parent[i] = i;
  auto find = [&](std::uint32_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (const auto& f : mesh.faces()) {
    parent[find(f[1])] = find(f[0]);
    parent[find(f[2])] = find(f[0]);
  }
  std::set<decomesh::VertexIndex> out;
  const auto root = find(source);
  for (std::uint32_t i = 0; i < parent.size(); ++i) {
    if (find(i) == root) out.insert(i);
  }
  return out;
}

struct BruteMetrics {
  double accuracy, completeness, chamfer, precision, recall, fscore;
};

/// Double-loop nearest neighbour in both directions.
template <typename Points>
BruteMetrics brute_metrics(const Points& pred, const Points& gt, double threshold) {
  auto one_way = [](const Points& a, const Points& b, double tau, double& mean, double& frac) {
    double sum = 0.0;
    std::size_t within = 0;
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (Eigen::Index j = 0; j < b.rows(); ++j) {
        const double dx = a(i, 0) - b(j, 0), dy = a(i, 1) - b(j, 1), dz = a(i, 2) - b(j, 2);
        best = std::min(best, std::sqrt(dx * dx + dy * dy + dz * dz));
      }
      sum += best;
      if (best < tau) ++within;
    }
    mean = sum / static_cast<double>(a.rows());
    frac = 100.0 * static_cast<double>(within) / static_cast<double>(a.rows());
  };
  BruteMetrics m{};
  one_way(pred, gt, threshold, m.accuracy, m.precision);
  one_way(gt, pred, threshold, m.completeness, m.recall);
  m.chamfer = 0.5 * (m.accuracy + m.completeness);
  m.fscore = m.precision + m.recall > 0.0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
  return m;
}

/// Intersection over union of two vertex sets.
template <typename A, typename B>
double iou(const A& a, const B& b) {
  const std::set<std::uint32_t> sa(a.begin(), a.end()), sb(b.begin(), b.end());
  std::size_t inter = 0;
  for (auto v : sa) inter += sb.count(v);
  const std::size_t uni = sa.size() + sb.size() - inter;
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace oracle

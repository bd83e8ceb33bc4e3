#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "decomesh/sdf.hpp"

namespace decomesh {

inline constexpr int kDefaultRaySamples = 256;

struct Ray {
  Vec3 origin = Vec3::Zero();
  Vec3 direction = Vec3::UnitZ();  ///< unit length
  double t_near = 0.0;
  double t_far = 1.0;

  Vec3 at(double t) const { return origin + t * direction; }
  /// Throws kDegenerateRay unless |direction| = 1 and 0 <= t_near < t_far.
  void validate() const;
};

/// Bin-midpoint stratified parameters in [t_near, t_far]; a seed adds a
/// uniform jitter inside each bin.
Eigen::VectorXd stratified_samples(const Ray& ray, int count,
                                   std::optional<std::uint64_t> jitter_seed = std::nullopt);

/// delta_i = t_{i+1} - t_i; the last interval ends at t_far.
Eigen::VectorXd sample_deltas(const Eigen::VectorXd& t, double t_far);

/// alpha_i = 1 - exp(-sigma_i * delta_i).
template <typename DerivedS, typename DerivedD>
Eigen::VectorXd alphas_from_density(const Eigen::MatrixBase<DerivedS>& sigma,
                                    const Eigen::MatrixBase<DerivedD>& delta) {
  return (-(sigma.array() * delta.array())).exp().matrix().unaryExpr(
      [](double e) { return 1.0 - e; });
}

/// Transmittance T_i = prod_{j<i} (1 - alpha_j) and weights T_i alpha_i.
struct Compositing {
  Eigen::VectorXd transmittance;
  Eigen::VectorXd weights;
};

Compositing composite(const Eigen::VectorXd& alpha);

/// sum_i w_i e_i for per-sample attribute rows (M x C).
template <typename Derived>
Eigen::RowVectorXd accumulate(const Eigen::VectorXd& weights,
                              const Eigen::MatrixBase<Derived>& attributes) {
  return weights.transpose() * attributes;
}

/// Maps a 3D point to the quantities the renderer integrates.
class AttributeProvider {
 public:
  virtual ~AttributeProvider() = default;
  virtual Vec3 color(const Vec3& p) const = 0;
  virtual Eigen::VectorXd semantic_logits(const Vec3& p) const = 0;
  virtual Eigen::VectorXd feature(const Vec3& p) const = 0;
};

/// Per-primitive constants of the primitive nearest to p in the achieving
/// field: its color, a one-hot logit vector scaled by `logit_scale`, and its
/// feature (zero when absent).
class PrimitiveAttributes final : public AttributeProvider {
 public:
  explicit PrimitiveAttributes(const ComposedScene& scene, double logit_scale = 10.0)
      : scene_(scene), logit_scale_(logit_scale) {}

  Vec3 color(const Vec3& p) const override;
  Eigen::VectorXd semantic_logits(const Vec3& p) const override;
  Eigen::VectorXd feature(const Vec3& p) const override;

 private:
  const ComposedScene& scene_;
  double logit_scale_;
};

struct RenderedPixel {
  Vec3 color = Vec3::Zero();
  double depth = 0.0;
  Vec3 normal = Vec3::Zero();
  Eigen::VectorXd semantic_logits;
  Eigen::VectorXd feature;
  double opacity_fg = 0.0;
  double opacity_bg = 0.0;
  double weight_sum = 0.0;
};

/// Volume-renders every attribute with the same T_i alpha_i weights. Normals
/// come from the finite-difference gradient of d_Omega and the accumulated
/// normal is re-normalized.
RenderedPixel render_ray(const ComposedScene& scene, const AttributeProvider& attributes,
                         const Ray& ray, int samples = kDefaultRaySamples);

struct FieldOpacity {
  double foreground = 0.0;
  double background = 0.0;
};

/// Occlusion-aware per-field opacity: transmittance from the composed
/// density, alpha from each field's own density, and each sample credited to
/// the field achieving the min there.
FieldOpacity opacity_per_field(const ComposedScene& scene, const Ray& ray,
                               int samples = kDefaultRaySamples);

struct FloorSearch {
  double step = 0.02;
  double tolerance = 1e-5;
  double max_distance = 50.0;
  int bisection_iterations = 40;
};

/// Marches from a ceiling point along gravity (0,0,-1) through d_B and
/// returns the first background surface point below it.
std::optional<Vec3> find_floor_point(const ComposedScene& scene, const Vec3& ceiling_point,
                                     const FloorSearch& search = {});

/// Flat float buffer: u32 width, height, channels (LE) then row-major f32.
struct FloatImage {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::uint32_t channels = 0;
  std::vector<float> data;

  float& at(std::uint32_t x, std::uint32_t y, std::uint32_t c) {
    return data[(std::size_t{y} * width + x) * channels + c];
  }
  float at(std::uint32_t x, std::uint32_t y, std::uint32_t c) const {
    return data[(std::size_t{y} * width + x) * channels + c];
  }
};

FloatImage make_image(std::uint32_t width, std::uint32_t height, std::uint32_t channels);
std::vector<std::uint8_t> encode_float_image(const FloatImage& image);
FloatImage decode_float_image(std::span<const std::uint8_t> bytes);
void write_float_image(const std::filesystem::path& path, const FloatImage& image);
FloatImage read_float_image(const std::filesystem::path& path);

}  // namespace decomesh

#include "decomesh/render.hpp"

#include <cmath>
#include <random>

#include "decomesh/detail/bytes.hpp"

namespace decomesh {

void Ray::validate() const {
  if (std::abs(direction.norm() - 1.0) > 1e-9) {
    throw Error(ErrorCode::kDegenerateRay, "ray direction must be unit length");
  }
  if (!(t_near >= 0.0 && t_near < t_far)) {
    throw Error(ErrorCode::kDegenerateRay, "ray requires 0 <= t_near < t_far");
  }
}

Eigen::VectorXd stratified_samples(const Ray& ray, int count,
                                   std::optional<std::uint64_t> jitter_seed) {
  if (count < 2) throw Error(ErrorCode::kInvalidArgument, "at least two samples per ray");
  const double bin = (ray.t_far - ray.t_near) / count;
  Eigen::VectorXd t(count);
  std::mt19937_64 rng(jitter_seed.value_or(0));
  for (int i = 0; i < count; ++i) {
    const double u = jitter_seed ? static_cast<double>(rng() >> 11) * 0x1.0p-53 : 0.5;
    t[i] = ray.t_near + (i + u) * bin;
  }
  return t;
}

Eigen::VectorXd sample_deltas(const Eigen::VectorXd& t, double t_far) {
  const Eigen::Index m = t.size();
  Eigen::VectorXd delta(m);
  if (m == 0) return delta;
  delta.head(m - 1) = t.tail(m - 1) - t.head(m - 1);
  delta[m - 1] = t_far - t[m - 1];
  return delta;
}

Compositing composite(const Eigen::VectorXd& alpha) {
  Compositing c;
  c.transmittance.resize(alpha.size());
  c.weights.resize(alpha.size());
  double transmittance = 1.0;
  for (Eigen::Index i = 0; i < alpha.size(); ++i) {
    c.transmittance[i] = transmittance;
    c.weights[i] = transmittance * alpha[i];
    transmittance *= 1.0 - alpha[i];
  }
  return c;
}

Vec3 PrimitiveAttributes::color(const Vec3& p) const { return nearest_primitive(scene_, p).color; }

Eigen::VectorXd PrimitiveAttributes::semantic_logits(const Vec3& p) const {
  Eigen::VectorXd logits = Eigen::VectorXd::Zero(scene_.num_classes);
  logits[nearest_primitive(scene_, p).class_id] = logit_scale_;
  return logits;
}

Eigen::VectorXd PrimitiveAttributes::feature(const Vec3& p) const {
  const auto& prim = nearest_primitive(scene_, p);
  if (prim.feature.size() == scene_.feature_dim) return prim.feature;
  return Eigen::VectorXd::Zero(scene_.feature_dim);
}

namespace {

struct RaySamples {
  Eigen::VectorXd t;
  Eigen::VectorXd delta;
  std::vector<SceneSample> scene;
  Compositing weights;
};

RaySamples sample_scene(const ComposedScene& scene, const Ray& ray, int samples) {
  ray.validate();
  if (samples < 2) throw Error(ErrorCode::kInvalidArgument, "at least two samples per ray");
  RaySamples rs;
  rs.t = stratified_samples(ray, samples);
  rs.delta = sample_deltas(rs.t, ray.t_far);
  Eigen::VectorXd sigma(samples);
  rs.scene.reserve(samples);
  for (int i = 0; i < samples; ++i) {
    rs.scene.push_back(scene_sdf(scene, ray.at(rs.t[i])));
    sigma[i] = density(rs.scene.back().distance, scene.beta);
  }
  rs.weights = composite(alphas_from_density(sigma, rs.delta));
  return rs;
}

}  // namespace

RenderedPixel render_ray(const ComposedScene& scene, const AttributeProvider& attributes,
                         const Ray& ray, int samples) {
  const RaySamples rs = sample_scene(scene, ray, samples);
  RenderedPixel px;
  px.semantic_logits = Eigen::VectorXd::Zero(scene.num_classes);
  px.feature = Eigen::VectorXd::Zero(scene.feature_dim);
  for (int i = 0; i < samples; ++i) {
    const double w = rs.weights.weights[i];
    px.weight_sum += w;
    if (w == 0.0) continue;
    const Vec3 p = ray.at(rs.t[i]);
    px.color += w * attributes.color(p);
    px.depth += w * rs.t[i];
    const Vec3 g = sdf_gradient(scene, p);
    if (g.norm() > 0.0) px.normal += w * g.normalized();
    px.semantic_logits += w * attributes.semantic_logits(p);
    if (scene.feature_dim > 0) px.feature += w * attributes.feature(p);
    if (rs.scene[i].field == FieldTag::kForeground) {
      px.opacity_fg += w;
    } else {
      px.opacity_bg += w;
    }
  }
  if (px.normal.norm() > 0.0) px.normal.normalize();
  return px;
}

FieldOpacity opacity_per_field(const ComposedScene& scene, const Ray& ray, int samples) {
  const RaySamples rs = sample_scene(scene, ray, samples);
  FieldOpacity out;
  for (int i = 0; i < samples; ++i) {
    const Vec3 p = ray.at(rs.t[i]);
    const bool fg = rs.scene[i].field == FieldTag::kForeground;
    const double d_field = fg ? scene.foreground(p) : scene.background(p);
    const double alpha = 1.0 - std::exp(-density(d_field, scene.beta) * rs.delta[i]);
    const double contribution = rs.weights.transmittance[i] * alpha;
    (fg ? out.foreground : out.background) += contribution;
  }
  return out;
}

std::optional<Vec3> find_floor_point(const ComposedScene& scene, const Vec3& ceiling_point,
                                     const FloorSearch& search) {
  if (!(search.step > 0.0) || !(search.tolerance > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "floor search step and tolerance must be positive");
  }
  const auto& bg = scene.background;
  const double skip = 10.0 * search.tolerance;
  if (!(std::abs(bg(ceiling_point)) < skip)) {
    throw Error(ErrorCode::kInvalidArgument, "ceiling point is not on the background surface");
  }
  const Vec3 gravity(0.0, 0.0, -1.0);
  auto at = [&](double t) { return bg(Vec3(ceiling_point + t * gravity)); };

  double t = 0.0;
  while (at(t) <= skip) {
    t += search.step;
    if (t > search.max_distance) return std::nullopt;
  }
  double prev = t;
  while (true) {
    t = prev + search.step;
    if (t > search.max_distance) return std::nullopt;
    const double d = at(t);
    if (d == 0.0) return Vec3(ceiling_point + t * gravity);
    if (d < 0.0) break;
    prev = t;
  }
  // Bracket [prev, t] with d(prev) > 0 > d(t).
  double lo = prev, hi = t;
  double mid = 0.5 * (lo + hi);
  for (int i = 0; i < search.bisection_iterations; ++i) {
    mid = 0.5 * (lo + hi);
    const double d = at(mid);
    if (std::abs(d) < search.tolerance && hi - lo < search.tolerance) break;
    (d > 0.0 ? lo : hi) = mid;
  }
  return Vec3(ceiling_point + mid * gravity);
}

FloatImage make_image(std::uint32_t width, std::uint32_t height, std::uint32_t channels) {
  FloatImage img{width, height, channels, {}};
  img.data.assign(std::size_t{width} * height * channels, 0.0f);
  return img;
}

std::vector<std::uint8_t> encode_float_image(const FloatImage& image) {
  std::vector<std::uint8_t> out;
  out.reserve(12 + image.data.size() * 4);
  detail::put(out, image.width);
  detail::put(out, image.height);
  detail::put(out, image.channels);
  const auto* p = reinterpret_cast<const std::uint8_t*>(image.data.data());
  out.insert(out.end(), p, p + image.data.size() * sizeof(float));
  return out;
}

FloatImage decode_float_image(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 12) throw Error(ErrorCode::kParseError, "float buffer header truncated");
  FloatImage img;
  img.width = detail::get<std::uint32_t>(bytes, 0);
  img.height = detail::get<std::uint32_t>(bytes, 4);
  img.channels = detail::get<std::uint32_t>(bytes, 8);
  const std::size_t n = std::size_t{img.width} * img.height * img.channels;
  if (bytes.size() != 12 + n * 4) throw Error(ErrorCode::kParseError, "float buffer size mismatch");
  img.data.resize(n);
  std::memcpy(img.data.data(), bytes.data() + 12, n * 4);
  return img;
}

void write_float_image(const std::filesystem::path& path, const FloatImage& image) {
  detail::write_file(path, encode_float_image(image));
}

FloatImage read_float_image(const std::filesystem::path& path) {
  return decode_float_image(detail::read_file(path));
}

}  // namespace decomesh

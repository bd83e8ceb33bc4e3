#include "decomesh/app.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "decomesh/detail/bytes.hpp"
#include "decomesh/image_io.hpp"
#include "json.hpp"

namespace decomesh::app {

using nlohmann::json;
using ojson = nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace {

std::string summarize(const std::map<std::string, std::string>& fields) {
  std::string out = "invalid parameters:";
  for (const auto& [k, v] : fields) out += " " + k + " " + v + ";";
  return out;
}

json parse_object(const std::string& text, const char* what) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParseError, std::string(what) + ": " + e.what());
  }
  if (!j.is_object()) throw Error(ErrorCode::kParseError, std::string(what) + ": expected a JSON object");
  return j;
}

}  // namespace

ValidationError::ValidationError(std::map<std::string, std::string> fields)
    : Error(ErrorCode::kInvalidArgument, summarize(fields)), fields_(std::move(fields)) {}

std::string error_json(const std::exception& e) {
  ojson err;
  if (const auto* v = dynamic_cast<const ValidationError*>(&e)) {
    err["code"] = to_string(v->code());
    err["message"] = v->what();
    err["fields"] = v->fields();
  } else if (const auto* d = dynamic_cast<const Error*>(&e)) {
    err["code"] = to_string(d->code());
    err["message"] = d->what();
  } else {
    err["code"] = "internal";
    err["message"] = e.what();
  }
  return ojson{{"error", err}}.dump();
}

SceneManifest load_manifest(const fs::path& path) {
  const json j = parse_object(detail::read_text_file(path), "manifest");
  const fs::path dir = path.parent_path();
  SceneManifest m;
  m.path = path;
  try {
    m.scene = dir / j.at("scene").get<std::string>();
    m.fg_mesh = dir / j.at("fg_mesh").get<std::string>();
    if (j.contains("bg_mesh") && !j.at("bg_mesh").is_null()) m.bg_mesh = dir / j.at("bg_mesh").get<std::string>();
    m.cameras = dir / j.at("cameras").get<std::string>();
    if (j.contains("objects")) {
      for (const auto& o : j.at("objects")) {
        m.objects.push_back({o.at("id").get<std::uint32_t>(), dir / o.at("mesh").get<std::string>()});
      }
    }
    m.seed = j.value("seed", std::uint64_t{0});
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParseError, std::string("manifest: ") + e.what());
  }
  return m;
}

LoadedScene load_scene_bundle(const fs::path& manifest_path) {
  LoadedScene s;
  s.manifest = load_manifest(manifest_path);
  s.mesh = load_mesh_with_sidecars(s.manifest.fg_mesh);
  s.cameras = parse_cameras_json(detail::read_text_file(s.manifest.cameras));
  return s;
}

const Camera& camera_at(const std::vector<Camera>& cameras, int index) {
  if (index < 0 || static_cast<std::size_t>(index) >= cameras.size()) {
    throw Error(ErrorCode::kNotFound, "view " + std::to_string(index) + " does not exist (" +
                                          std::to_string(cameras.size()) + " cameras)");
  }
  return cameras[static_cast<std::size_t>(index)];
}

namespace {

ClickPrompt prompt_from(const json& clicks) {
  if (!clicks.is_array()) throw ValidationError("clicks", "must be an array");
  ClickPrompt prompt;
  std::map<std::string, std::string> errors;
  for (std::size_t i = 0; i < clicks.size(); ++i) {
    const auto& c = clicks[i];
    const std::string key = "clicks[" + std::to_string(i) + "]";
    if (!c.is_object() || !c.contains("x") || !c.contains("y") || !c.at("x").is_number_integer() ||
        !c.at("y").is_number_integer()) {
      errors[key] = "needs integer x and y";
      continue;
    }
    const bool positive = c.value("positive", true);
    prompt.clicks.push_back({c.at("x").get<int>(), c.at("y").get<int>(), positive});
  }
  if (!errors.empty()) throw ValidationError(errors);
  if (std::none_of(prompt.clicks.begin(), prompt.clicks.end(), [](const Click& c) { return c.positive; })) {
    throw ValidationError("clicks", "needs at least one positive click");
  }
  return prompt;
}

std::optional<double> number_field(const json& j, const char* key, std::map<std::string, std::string>& errors) {
  if (!j.contains(key)) return std::nullopt;
  if (!j.at(key).is_number()) {
    errors[key] = "must be a number";
    return std::nullopt;
  }
  return j.at(key).get<double>();
}

GrowConfig grow_config_from(const json& j) {
  GrowConfig c;
  std::map<std::string, std::string> errors;
  if (auto v = number_field(j, "tau", errors)) c.tau = *v;
  if (auto v = number_field(j, "theta", errors)) c.theta = *v;
  if (auto v = number_field(j, "epsilon", errors)) c.epsilon = *v;
  if (auto v = number_field(j, "tau_floor", errors)) c.tau_floor = *v;
  if (j.contains("max_rounds")) {
    if (j.at("max_rounds").is_number_integer()) {
      c.max_rounds = j.at("max_rounds").get<int>();
    } else {
      errors["max_rounds"] = "must be an integer";
    }
  }
  if (!errors.count("tau") && !(c.tau > -1.0 && c.tau <= 1.0)) errors["tau"] = "must lie in (-1, 1]";
  if (!errors.count("theta") && !(c.theta > 0.0)) errors["theta"] = "must be positive";
  if (!errors.count("epsilon") && !(c.epsilon >= 0.0 && c.epsilon <= 1.0)) errors["epsilon"] = "must lie in [0, 1]";
  if (!errors.count("tau_floor") && !(c.tau_floor >= -1.0)) errors["tau_floor"] = "must be >= -1";
  if (!errors.count("max_rounds") && c.max_rounds < 1) errors["max_rounds"] = "must be >= 1";
  if (!errors.empty()) throw ValidationError(errors);
  return c;
}

}  // namespace

ClickPrompt parse_prompt_json(const std::string& text) {
  const json j = parse_object(text, "prompt");
  if (!j.contains("clicks")) throw ValidationError("clicks", "is required");
  return prompt_from(j.at("clicks"));
}

GrowConfig parse_grow_config(const std::string& json_object) {
  return grow_config_from(parse_object(json_object, "grow config"));
}

BoundaryMode parse_boundary_mode(const std::string& name) {
  if (name == "outer") return BoundaryMode::kOuterRing;
  if (name != "contour") throw ValidationError("boundary", "must be 'outer' or 'contour'");
  return BoundaryMode::kContour;
}

RegionExport grow_and_export(const NeuralMesh& mesh, const SegmentationSeed& seed, const GrowConfig& config) {
  RegionExport out;
  out.region = grow(mesh, seed, config);
  out.submesh = extract_submesh(mesh, out.region.vertices);
  out.ply = encode_ply(out.submesh.mesh);
  out.trace_json = grown_region_to_json(out.region);
  return out;
}

Rgba8Image view_image(const RasterBuffers& buffers) {
  return {buffers.width, buffers.height, color_rgba(buffers)};
}

std::string feature_stats_json(const RasterBuffers& b) {
  std::size_t hits = 0;
  double sum = 0.0, lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  std::map<std::uint32_t, std::size_t> labels;
  for (int y = 0; y < b.height; ++y) {
    for (int x = 0; x < b.width; ++x) {
      if (!b.hit(x, y)) continue;
      ++hits;
      if (b.label(y, x) != kMissIndex) ++labels[b.label(y, x)];
      if (b.features.cols() == 0) continue;
      const double n = b.features.row(b.row(x, y)).cast<double>().norm();
      sum += n;
      lo = std::min(lo, n);
      hi = std::max(hi, n);
    }
  }
  ojson j;
  j["width"] = b.width;
  j["height"] = b.height;
  j["hit_pixels"] = hits;
  j["feature_dim"] = b.features.cols();
  const bool any = hits > 0 && b.features.cols() > 0;
  j["feature_norm"] = {{"mean", any ? sum / hits : 0.0}, {"min", any ? lo : 0.0}, {"max", any ? hi : 0.0}};
  ojson hist = ojson::array();
  for (const auto& [label, count] : labels) hist.push_back({{"label", label}, {"pixels", count}});
  j["labels"] = hist;
  return j.dump(2);
}

void write_render_outputs(const RasterBuffers& b, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::kIoError, "cannot create " + dir.string() + ": " + ec.message());
  write_png(dir / "image.png", view_image(b));
  const auto w = static_cast<std::uint32_t>(b.width), h = static_cast<std::uint32_t>(b.height);
  FloatImage depth = make_image(w, h, 1), vid = make_image(w, h, 1), label = make_image(w, h, 1);
  FloatImage normal = make_image(w, h, 3);
  const auto dim = static_cast<std::uint32_t>(b.features.cols());
  FloatImage features = make_image(w, h, std::max<std::uint32_t>(dim, 1));
  for (std::uint32_t y = 0; y < h; ++y) {
    for (std::uint32_t x = 0; x < w; ++x) {
      const int xi = static_cast<int>(x), yi = static_cast<int>(y);
      depth.at(x, y, 0) = b.depth(yi, xi);
      vid.at(x, y, 0) = b.hit(xi, yi) ? static_cast<float>(b.vertex_id(yi, xi)) : -1.0f;
      label.at(x, y, 0) = b.label(yi, xi) == kMissIndex ? -1.0f : static_cast<float>(b.label(yi, xi));
      for (std::uint32_t c = 0; c < 3; ++c) normal.at(x, y, c) = b.normal(b.row(xi, yi), c);
      for (std::uint32_t c = 0; c < dim; ++c) features.at(x, y, c) = b.features(b.row(xi, yi), c);
    }
  }
  write_float_image(dir / "depth.f32", depth);
  write_float_image(dir / "vertex_id.f32", vid);
  write_float_image(dir / "label.f32", label);
  write_float_image(dir / "normal.f32", normal);
  if (dim > 0) write_float_image(dir / "features.f32", features);
}

std::vector<DecomposeItem> parse_decompose_manifest(const std::string& text) {
  const json j = parse_object(text, "clicks manifest");
  std::vector<DecomposeItem> items;
  try {
    const auto& objects = j.at("objects");
    for (std::size_t i = 0; i < objects.size(); ++i) {
      const auto& o = objects[i];
      DecomposeItem item;
      item.name = o.value("name", "object_" + std::to_string(i));
      item.view = o.at("view").get<int>();
      item.prompt = prompt_from(o.at("clicks"));
      item.tau_2d = o.value("tau_2d", kDefaultTau2d);
      items.push_back(std::move(item));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParseError, std::string("clicks manifest: ") + e.what());
  }
  if (items.empty()) throw Error(ErrorCode::kInvalidArgument, "clicks manifest lists no objects");
  return items;
}

DecomposeResult decompose(const LoadedScene& scene, const std::vector<DecomposeItem>& items, const GrowConfig& config,
                          BoundaryMode mode) {
  DecomposeResult result;
  std::map<int, RasterBuffers> views;
  std::vector<int> claims(static_cast<std::size_t>(scene.mesh.vertex_count()), 0);
  for (const auto& item : items) {
    auto it = views.find(item.view);
    if (it == views.end()) it = views.emplace(item.view, rasterize(scene.mesh, camera_at(scene.cameras, item.view))).first;
    const Mask mask = click_to_mask(it->second, item.prompt, item.tau_2d);
    const SegmentationSeed seed = build_seed(it->second, mask, mode, "view_" + std::to_string(item.view));
    result.regions.push_back(grow_and_export(scene.mesh, seed, config));
    for (auto v : result.regions.back().region.vertices) ++claims[v];
  }
  for (std::size_t v = 0; v < claims.size(); ++v) {
    if (claims[v] == 0) result.residual.push_back(static_cast<VertexIndex>(v));
    if (claims[v] > 1) ++result.overlap;
  }
  return result;
}

MetricsReport evaluate_meshes(const NeuralMesh& pred, const NeuralMesh& gt, const EvalOptions& options) {
  return evaluate(sample_surface(pred, options.samples, options.seed),
                  sample_surface(gt, options.samples, options.seed), options.threshold);
}

std::optional<double> sphere_trace(const ComposedScene& scene, const Ray& ray, double tolerance, int max_steps) {
  double t = ray.t_near;
  for (int i = 0; i < max_steps && t <= ray.t_far; ++i) {
    const double d = scene(ray.at(t));
    if (std::abs(d) < tolerance) return t;
    t += std::max(d, tolerance);
  }
  return std::nullopt;
}

namespace {

constexpr double kTraceNear = 0.05;
constexpr double kTraceFar = 30.0;

Vec3 field_normal(const ComposedScene& scene, const Vec3& p) {
  const SceneSample s = scene_sdf(scene, p);
  const SdfField& f = s.field == FieldTag::kForeground ? scene.foreground : scene.background;
  return f.primitives()[s.primitive].gradient(p).normalized();
}

RegionTag region_of(int class_id) {
  if (class_id == kClassFloor) return RegionTag::kFloor;
  if (class_id == kClassWall) return RegionTag::kWall;
  return RegionTag::kOther;
}

}  // namespace

LossBreakdown run_losses(const ComposedScene& scene, const Camera& camera, const LossRunOptions& options) {
  scene.validate();
  camera.validate();
  if (options.stride < 1 || options.samples < 2 || options.extra_points < 1) {
    throw Error(ErrorCode::kInvalidArgument, "stride, samples and extra_points must be positive");
  }
  const PrimitiveAttributes attributes(scene);
  std::vector<std::pair<Ray, double>> rays;
  for (int y = options.stride / 2; y < camera.height; y += options.stride) {
    for (int x = options.stride / 2; x < camera.width; x += options.stride) {
      const Ray ray = camera.pixel_ray(x, y, kTraceNear, kTraceFar);
      if (const auto t = sphere_trace(scene, ray)) rays.emplace_back(ray, *t);
    }
  }
  if (rays.empty()) throw Error(ErrorCode::kEmptySet, "no sampled ray hits the scene");

  const auto n = static_cast<Eigen::Index>(rays.size());
  RayBatch batch = RayBatch::zeros(n, scene.num_classes, scene.feature_dim);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& [ray, t_hit] = rays[static_cast<std::size_t>(i)];
    const RenderedPixel px = render_ray(scene, attributes, ray, options.samples);
    batch.set_rendered(i, px);
    const Vec3 p = ray.at(t_hit);
    const SceneSample s = scene_sdf(scene, p);
    const Primitive& prim = nearest_primitive(scene, p);
    batch.color_gt.row(i) = prim.color.transpose();
    batch.depth_gt(i) = t_hit;
    batch.normal_gt.row(i) = field_normal(scene, p).transpose();
    if (prim.class_id >= 0 && prim.class_id < scene.num_classes) batch.semantic_gt(i, prim.class_id) = 1.0;
    if (prim.feature.size() == scene.feature_dim && scene.feature_dim > 0) {
      batch.feature_gt.row(i) = prim.feature.transpose();
    }
    batch.opacity_gt(i, s.field == FieldTag::kForeground ? 0 : 1) = 1.0;
    batch.region[static_cast<std::size_t>(i)] = region_of(prim.class_id);
    const Eigen::VectorXd prob = softmax(px.semantic_logits);
    batch.prob_floor(i) = kClassFloor < prob.size() ? prob(kClassFloor) : 0.0;
    batch.prob_wall(i) = kClassWall < prob.size() ? prob(kClassWall) : 0.0;
  }

  // Volume points: a box spanning the traced hits and the camera.
  Vec3 lo = camera.center(), hi = camera.center();
  for (const auto& [ray, t] : rays) {
    lo = lo.cwiseMin(ray.at(t));
    hi = hi.cwiseMax(ray.at(t));
  }
  std::mt19937_64 rng(options.seed);
  auto uniform = [&rng] { return static_cast<double>(rng() >> 11) * 0x1.0p-53; };
  std::vector<Vec3> volume;
  for (int i = 0; i < options.extra_points; ++i) {
    volume.push_back(lo + Vec3(uniform(), uniform(), uniform()).cwiseProduct(hi - lo));
  }
  std::vector<Vec3> ceiling;
  for (const auto& p : volume) {
    const Ray up{p, Vec3::UnitZ(), 0.0, kTraceFar};
    if (scene.background.empty() || !(scene.background(p) > 0.0)) continue;
    if (const auto t = sphere_trace(scene, up)) {
      const Vec3 q = up.at(*t);
      const SceneSample s = scene_sdf(scene, q);
      if (s.field == FieldTag::kBackground && scene.background.primitives()[s.primitive].class_id == kClassCeiling) {
        ceiling.push_back(q);
      }
    }
  }

  LossInputs inputs;
  inputs.batch = &batch;
  inputs.scene = &scene;
  inputs.eikonal_points = volume;
  inputs.regularization_points = volume;
  inputs.ceiling_points = ceiling;
  return loss_total(inputs);
}

}  // namespace decomesh::app

#include "decomesh/service.hpp"

#include <map>
#include <mutex>

#include "decomesh/app.hpp"
#include "decomesh/fixtures.hpp"
#include "decomesh/image_io.hpp"
#include "httplib.h"
#include "json.hpp"

namespace decomesh::service {

namespace {

using nlohmann::json;
using ojson = nlohmann::ordered_json;

struct View {
  Camera camera;
  RasterBuffers buffers;
};

struct StoredMask {
  std::string view_id;
  Mask mask;
};

struct StoredRegion {
  std::string view_id;
  std::string mask_id;
  app::RegionExport data;
};

struct Session {
  std::mutex mutex;
  app::LoadedScene scene;
  std::map<std::string, View> views;
  std::map<std::string, StoredMask> masks;
  std::map<std::string, StoredRegion> regions;
  int next_view = 1, next_mask = 1, next_region = 1;
};

int status_for(const std::exception& e) {
  const auto* err = dynamic_cast<const Error*>(&e);
  if (err == nullptr) return 500;
  switch (err->code()) {
    case ErrorCode::kNotFound: return 404;
    case ErrorCode::kIoError:
    case ErrorCode::kInvalidArgument:
    case ErrorCode::kParseError:
    case ErrorCode::kMissedPixel:
    case ErrorCode::kEmptySeed:
    case ErrorCode::kEmptySet:
    case ErrorCode::kMissingFeatures:
    case ErrorCode::kDimMismatch:
    case ErrorCode::kIndexOutOfRange:
      return 422;
    default: return 500;
  }
}

json body_object(const httplib::Request& req) {
  json j;
  try {
    j = req.body.empty() ? json::object() : json::parse(req.body);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParseError, std::string("request body: ") + e.what());
  }
  if (!j.is_object()) throw app::ValidationError("body", "must be a JSON object");
  return j;
}

void send_json(httplib::Response& res, const ojson& j, int status = 200) {
  res.status = status;
  res.set_content(j.dump(), "application/json");
}

template <typename Fn>
httplib::Server::Handler guarded(Fn fn) {
  return [fn](const httplib::Request& req, httplib::Response& res) {
    try {
      fn(req, res);
    } catch (const std::exception& e) {
      res.status = status_for(e);
      res.set_content(app::error_json(e), "application/json");
    }
  };
}

Camera camera_from_body(const json& body, const app::LoadedScene& scene) {
  if (body.contains("camera_index")) {
    if (!body.at("camera_index").is_number_integer()) throw app::ValidationError("camera_index", "must be an integer");
    const int index = body.at("camera_index").get<int>();
    if (index < 0 || static_cast<std::size_t>(index) >= scene.cameras.size()) {
      throw app::ValidationError("camera_index", "must lie in [0, " + std::to_string(scene.cameras.size()) + ")");
    }
    return scene.cameras[static_cast<std::size_t>(index)];
  }
  if (body.contains("camera")) {
    try {
      return parse_camera_json(body.at("camera").dump());
    } catch (const Error& e) {
      throw app::ValidationError("camera", e.what());
    }
  }
  throw app::ValidationError("camera", "camera or camera_index is required");
}

ojson region_summary(const std::string& id, const StoredRegion& r) {
  return {{"region_id", id},
          {"view_id", r.view_id},
          {"mask_id", r.mask_id},
          {"vertex_count", r.data.region.vertices.size()},
          {"stop_reason", to_string(r.data.region.stop_reason)},
          {"rounds", r.data.region.rounds},
          {"round_sizes", r.data.region.round_sizes}};
}

}  // namespace

struct Service::Impl {
  ServiceOptions options;
  httplib::Server server;
  std::mutex registry_mutex;
  std::map<std::string, std::shared_ptr<Session>> sessions;
  int next_scene = 1;
  int port = -1;

  std::shared_ptr<Session> session(const std::string& id) {
    std::lock_guard lock(registry_mutex);
    auto it = sessions.find(id);
    if (it == sessions.end()) throw Error(ErrorCode::kNotFound, "unknown scene '" + id + "'");
    return it->second;
  }

  void routes();
};

void Service::Impl::routes() {
  server.Get("/api/v1/spec", [](const httplib::Request&, httplib::Response& res) {
    res.set_content(openapi_json(), "application/json");
  });

  server.Post("/api/v1/scenes", guarded([this](const httplib::Request& req, httplib::Response& res) {
    const json body = body_object(req);
    auto s = std::make_shared<Session>();
    if (body.contains("manifest")) {
      if (!body.at("manifest").is_string()) throw app::ValidationError("manifest", "must be a path string");
      try {
        s->scene = app::load_scene_bundle(body.at("manifest").get<std::string>());
      } catch (const Error& e) {
        if (e.code() == ErrorCode::kNotFound) throw;
        throw app::ValidationError("manifest", e.what());
      }
    } else if (body.contains("fixture")) {
      FixtureBundle bundle;
      try {
        bundle = generate(parse_fixture_spec_json(body.at("fixture").dump()));
      } catch (const Error& e) {
        throw app::ValidationError("fixture", e.what());
      }
      s->scene.mesh = std::move(bundle.foreground);
      s->scene.cameras = std::move(bundle.cameras);
    } else {
      throw app::ValidationError("manifest", "manifest path or inline fixture is required");
    }
    std::string id;
    {
      std::lock_guard lock(registry_mutex);
      id = "scene-" + std::to_string(next_scene++);
      sessions.emplace(id, s);
    }
    send_json(res,
              {{"scene_id", id},
               {"vertex_count", s->scene.mesh.vertex_count()},
               {"face_count", s->scene.mesh.face_count()},
               {"camera_count", s->scene.cameras.size()},
               {"mean_edge_length", s->scene.mesh.mean_edge_length()}},
              201);
  }));

  server.Delete(R"(/api/v1/scenes/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
    std::lock_guard lock(registry_mutex);
    if (sessions.erase(req.matches[1]) == 0) {
      throw Error(ErrorCode::kNotFound, "unknown scene '" + std::string(req.matches[1]) + "'");
    }
    res.status = 204;
  }));

  server.Post(R"(/api/v1/scenes/([^/]+)/views)", guarded([this](const httplib::Request& req, httplib::Response& res) {
    auto s = session(req.matches[1]);
    const json body = body_object(req);
    std::lock_guard lock(s->mutex);
    const Camera camera = camera_from_body(body, s->scene);
    View view{camera, rasterize(s->scene.mesh, camera)};
    const std::string id = "view-" + std::to_string(s->next_view++);
    const auto hits = view.buffers.hit_count();
    s->views.emplace(id, std::move(view));
    send_json(res, {{"view_id", id}, {"width", camera.width}, {"height", camera.height}, {"hit_pixels", hits}}, 201);
  }));

  server.Get(R"(/api/v1/scenes/([^/]+)/views/([^/]+)/image\.png)",
             guarded([this](const httplib::Request& req, httplib::Response& res) {
               auto s = session(req.matches[1]);
               std::lock_guard lock(s->mutex);
               auto it = s->views.find(req.matches[2]);
               if (it == s->views.end()) throw Error(ErrorCode::kNotFound, "unknown view '" + std::string(req.matches[2]) + "'");
               const auto png = encode_png(app::view_image(it->second.buffers));
               res.set_content(std::string(png.begin(), png.end()), "image/png");
             }));

  server.Get(R"(/api/v1/scenes/([^/]+)/views/([^/]+)/feature-stats)",
             guarded([this](const httplib::Request& req, httplib::Response& res) {
               auto s = session(req.matches[1]);
               std::lock_guard lock(s->mutex);
               auto it = s->views.find(req.matches[2]);
               if (it == s->views.end()) throw Error(ErrorCode::kNotFound, "unknown view '" + std::string(req.matches[2]) + "'");
               res.set_content(app::feature_stats_json(it->second.buffers), "application/json");
             }));

  server.Post(R"(/api/v1/scenes/([^/]+)/views/([^/]+)/mask)",
              guarded([this](const httplib::Request& req, httplib::Response& res) {
                auto s = session(req.matches[1]);
                const json body = body_object(req);
                std::lock_guard lock(s->mutex);
                const std::string view_id = req.matches[2];
                auto it = s->views.find(view_id);
                if (it == s->views.end()) throw Error(ErrorCode::kNotFound, "unknown view '" + view_id + "'");
                const RasterBuffers& buffers = it->second.buffers;
                Mask mask;
                if (body.contains("oracle_label")) {
                  if (!body.at("oracle_label").is_number_unsigned()) {
                    throw app::ValidationError("oracle_label", "must be a non-negative integer");
                  }
                  mask = mask_from_labels(buffers, body.at("oracle_label").get<std::uint32_t>());
                  if (mask_count(mask) == 0) throw app::ValidationError("oracle_label", "label is not visible in this view");
                } else {
                  if (!body.contains("clicks")) throw app::ValidationError("clicks", "is required");
                  const ClickPrompt prompt = app::parse_prompt_json(ojson{{"clicks", body.at("clicks")}}.dump());
                  double tau_2d = kDefaultTau2d;
                  if (body.contains("tau_2d")) {
                    if (!body.at("tau_2d").is_number()) throw app::ValidationError("tau_2d", "must be a number");
                    tau_2d = body.at("tau_2d").get<double>();
                  }
                  try {
                    prompt.validate(buffers.width, buffers.height);
                    mask = click_to_mask(buffers, prompt, tau_2d);
                  } catch (const Error& e) {
                    if (e.code() == ErrorCode::kInvalidArgument) {
                      throw app::ValidationError("clicks", e.what());
                    }
                    throw;
                  }
                }
                const std::string id = "mask-" + std::to_string(s->next_mask++);
                ojson contour = ojson::array();
                for (const auto& p : mask_contour(mask)) contour.push_back({p.x, p.y});
                const MaskRle rle = encode_rle(mask);
                s->masks.emplace(id, StoredMask{view_id, mask});
                send_json(res,
                          {{"mask_id", id},
                           {"view_id", view_id},
                           {"pixel_count", mask_count(mask)},
                           {"rle", {{"width", rle.width}, {"height", rle.height}, {"runs", rle.runs}}},
                           {"contour", contour}},
                          201);
              }));

  server.Post(R"(/api/v1/scenes/([^/]+)/grow)", guarded([this](const httplib::Request& req, httplib::Response& res) {
    auto s = session(req.matches[1]);
    const json body = body_object(req);
    std::map<std::string, std::string> errors;
    if (!body.contains("view_id") || !body.at("view_id").is_string()) errors["view_id"] = "is required";
    if (!body.contains("mask_id") || !body.at("mask_id").is_string()) errors["mask_id"] = "is required";
    if (!errors.empty()) throw app::ValidationError(errors);
    const GrowConfig config = app::parse_grow_config(body.value("config", json::object()).dump());
    const BoundaryMode mode = app::parse_boundary_mode(body.value("boundary", std::string("outer")));
    std::lock_guard lock(s->mutex);
    const std::string view_id = body.at("view_id").get<std::string>();
    const std::string mask_id = body.at("mask_id").get<std::string>();
    auto view = s->views.find(view_id);
    if (view == s->views.end()) throw Error(ErrorCode::kNotFound, "unknown view '" + view_id + "'");
    auto mask = s->masks.find(mask_id);
    if (mask == s->masks.end()) throw Error(ErrorCode::kNotFound, "unknown mask '" + mask_id + "'");
    if (mask->second.view_id != view_id) throw app::ValidationError("mask_id", "belongs to " + mask->second.view_id);
    const SegmentationSeed seed = build_seed(view->second.buffers, mask->second.mask, mode, view_id);
    StoredRegion region{view_id, mask_id, app::grow_and_export(s->scene.mesh, seed, config)};
    const std::string id = "region-" + std::to_string(s->next_region++);
    const ojson summary = region_summary(id, region);
    s->regions.emplace(id, std::move(region));
    send_json(res, summary, 201);
  }));

  server.Get(R"(/api/v1/scenes/([^/]+)/regions)", guarded([this](const httplib::Request& req, httplib::Response& res) {
    auto s = session(req.matches[1]);
    std::lock_guard lock(s->mutex);
    ojson list = ojson::array();
    for (const auto& [id, r] : s->regions) list.push_back(region_summary(id, r));
    send_json(res, {{"regions", list}});
  }));

  server.Get(R"(/api/v1/scenes/([^/]+)/regions/([^/]+)/mesh\.ply)",
             guarded([this](const httplib::Request& req, httplib::Response& res) {
               auto s = session(req.matches[1]);
               std::lock_guard lock(s->mutex);
               auto it = s->regions.find(req.matches[2]);
               if (it == s->regions.end()) throw Error(ErrorCode::kNotFound, "unknown region '" + std::string(req.matches[2]) + "'");
               const auto& ply = it->second.data.ply;
               res.set_content(std::string(ply.begin(), ply.end()), "application/octet-stream");
             }));

  if (options.ui_dir) {
    if (!server.set_mount_point("/ui", options.ui_dir->string())) {
      throw Error(ErrorCode::kIoError, "cannot serve UI directory " + options.ui_dir->string());
    }
  }
}

Service::Service(ServiceOptions options) : impl_(std::make_unique<Impl>()) {
  impl_->options = std::move(options);
  impl_->routes();
}

Service::~Service() { stop(); }

int Service::bind() {
  auto& s = impl_->server;
  if (impl_->options.port == 0) {
    impl_->port = s.bind_to_any_port(impl_->options.host);
  } else if (s.bind_to_port(impl_->options.host, impl_->options.port)) {
    impl_->port = impl_->options.port;
  }
  if (impl_->port <= 0) {
    throw Error(ErrorCode::kIoError, "cannot bind " + impl_->options.host + ":" + std::to_string(impl_->options.port));
  }
  return impl_->port;
}

void Service::run() { impl_->server.listen_after_bind(); }

void Service::stop() {
  if (impl_ && impl_->server.is_running()) impl_->server.stop();
}

void Service::wait_until_ready() const { impl_->server.wait_until_ready(); }

std::string openapi_json() {
  const ojson err_ref = {{"$ref", "#/components/schemas/Error"}};
  auto json_response = [&](const std::string& description) {
    return ojson{{"description", description}};
  };
  auto errors = [&](ojson responses) {
    responses["404"] = {{"description", "unknown id"}, {"content", {{"application/json", {{"schema", err_ref}}}}}};
    responses["422"] = {{"description", "invalid parameters"}, {"content", {{"application/json", {{"schema", err_ref}}}}}};
    return responses;
  };
  ojson paths;
  paths["/scenes"]["post"] = {{"summary", "Load a scene from a manifest path or an inline fixture spec"},
                              {"responses", errors({{"201", json_response("scene_id")}})}};
  paths["/scenes/{scene_id}"]["delete"] = {{"summary", "Drop a session"},
                                           {"responses", errors({{"204", json_response("deleted")}})}};
  paths["/scenes/{scene_id}/views"]["post"] = {{"summary", "Rasterize a view from camera or camera_index"},
                                               {"responses", errors({{"201", json_response("view_id")}})}};
  paths["/scenes/{scene_id}/views/{view_id}/image.png"]["get"] = {
      {"summary", "Shaded RGBA image of the view"}, {"responses", errors({{"200", json_response("PNG")}})}};
  paths["/scenes/{scene_id}/views/{view_id}/feature-stats"]["get"] = {
      {"summary", "Feature norm statistics and label histogram"},
      {"responses", errors({{"200", json_response("stats")}})}};
  paths["/scenes/{scene_id}/views/{view_id}/mask"]["post"] = {
      {"summary", "Mask from clicks [{x, y, positive}] and tau_2d, or from oracle_label"},
      {"responses", errors({{"201", json_response("mask_id, rle {width, height, runs}, contour")}})}};
  paths["/scenes/{scene_id}/grow"]["post"] = {
      {"summary", "Grow a region from view_id and mask_id with config {tau, theta, epsilon, tau_floor, max_rounds}"},
      {"responses", errors({{"201", json_response("region_id, vertex_count, stop_reason, rounds")}})}};
  paths["/scenes/{scene_id}/regions"]["get"] = {{"summary", "List grown regions"},
                                                {"responses", errors({{"200", json_response("regions")}})}};
  paths["/scenes/{scene_id}/regions/{region_id}/mesh.ply"]["get"] = {
      {"summary", "Binary PLY of the region submesh"}, {"responses", errors({{"200", json_response("PLY")}})}};
  ojson doc;
  doc["openapi"] = "3.0.3";
  doc["info"] = {{"title", "decomesh"}, {"version", "1"}};
  doc["servers"] = ojson::array({{{"url", "/api/v1"}}});
  doc["paths"] = paths;
  doc["components"]["schemas"]["Error"] = {
      {"type", "object"},
      {"properties",
       {{"error",
         {{"type", "object"},
          {"properties",
           {{"code", {{"type", "string"}}},
            {"message", {{"type", "string"}}},
            {"fields", {{"type", "object"}, {"additionalProperties", {{"type", "string"}}}}}}}}}}}};
  return doc.dump(2);
}

}  // namespace decomesh::service

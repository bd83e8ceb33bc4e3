#include <filesystem>
#include <fstream>
#include <thread>

#include "doctest.h"
#include "json.hpp"
#include "decomesh/app.hpp"
#include "decomesh/fixtures.hpp"
#include "decomesh/service.hpp"
#include "support/cli.hpp"
#include "httplib.h"

using namespace decomesh;
using nlohmann::json;

namespace {

struct Running {
  service::Service svc;
  std::thread thread;
  int port = 0;

  explicit Running(service::ServiceOptions o) : svc(std::move(o)) {
    port = svc.bind();
    thread = std::thread([this] { svc.run(); });
    svc.wait_until_ready();
  }
  ~Running() {
    svc.stop();
    thread.join();
  }
  httplib::Client client() const { return httplib::Client("127.0.0.1", port); }
};

std::filesystem::path fixture_dir() {
  static const std::filesystem::path dir = [] {
    const auto d = std::filesystem::temp_directory_path() / "decomesh_unit_service";
    std::filesystem::remove_all(d);
    write_bundle(generate(two_spheres_spec()), d / "fx");
    return d;
  }();
  return dir;
}

json post(httplib::Client& c, const std::string& path, const json& body, int expect) {
  auto r = c.Post(path, body.dump(), "application/json");
  REQUIRE(r);
  CHECK(r->status == expect);
  return r->body.empty() ? json() : json::parse(r->body);
}

}  // namespace

TEST_SUITE("service") {

TEST_CASE("mask and grow over HTTP") {
  Running srv({"127.0.0.1", 0, std::nullopt});
  auto c = srv.client();
  const auto spec = c.Get("/api/v1/spec");
  REQUIRE(spec);
  CHECK(spec->status == 200);
  CHECK(json::parse(spec->body)["openapi"].get<std::string>().rfind("3.", 0) == 0);

  const std::string manifest = (fixture_dir() / "fx/manifest.json").string();
  const json scene = post(c, "/api/v1/scenes", {{"manifest", manifest}}, 201);
  const std::string sid = scene["scene_id"];
  const std::string base = "/api/v1/scenes/" + sid;
  const json view = post(c, base + "/views", {{"camera_index", 2}}, 201);
  const std::string vid = view["view_id"];

  const auto png = c.Get(base + "/views/" + vid + "/image.png");
  REQUIRE(png);
  CHECK(png->status == 200);
  CHECK(png->get_header_value("Content-Type") == "image/png");
  CHECK(png->body.substr(1, 3) == "PNG");
  const auto stats = c.Get(base + "/views/" + vid + "/feature-stats");
  REQUIRE(stats);
  CHECK(stats->status == 200);

  const json mask = post(c, base + "/views/" + vid + "/mask", {{"oracle_label", 1}}, 201);
  CHECK(mask["pixel_count"].get<int>() > 0);
  const MaskRle rle = parse_rle_json(mask["rle"].dump());
  CHECK(mask_count(decode_rle(rle)) == mask["pixel_count"].get<std::size_t>());
  CHECK(!mask["contour"].empty());

  const json region = post(c, base + "/grow", {{"view_id", vid}, {"mask_id", mask["mask_id"]}}, 201);
  CHECK(region["stop_reason"] == "fixed-point");
  const std::string rid = region["region_id"];
  const auto list = c.Get(base + "/regions");
  REQUIRE(list);
  CHECK(json::parse(list->body)["regions"].size() == 1);
  const auto ply = c.Get(base + "/regions/" + rid + "/mesh.ply");
  REQUIRE(ply);
  CHECK(ply->status == 200);

  // The CLI on the same inputs writes the same bytes.
  const auto dir = fixture_dir() / "cli";
  REQUIRE(cli::run(dir, "mask --manifest '" + manifest + "' --view 2 --oracle-label 1 --out m.png").exit_code == 0);
  REQUIRE(cli::run(dir, "grow --manifest '" + manifest + "' --view 2 --mask m.png --out a.ply").exit_code == 0);
  CHECK(cli::read_file(dir / "a.ply") == ply->body);

  // Clicks path.
  const auto scene_data = app::load_scene_bundle(manifest);
  const RasterBuffers b = rasterize(scene_data.mesh, scene_data.cameras[2]);
  const auto px = mask_pixels(mask_from_labels(b, 2));
  const Pixel p = px[px.size() / 2];
  const json clicked = post(c, base + "/views/" + vid + "/mask",
                            {{"clicks", {{{"x", p.x}, {"y", p.y}, {"positive", true}}}}, {"tau_2d", 0.85}}, 201);
  CHECK(clicked["pixel_count"].get<std::size_t>() == px.size());

  auto del = c.Delete(base);
  REQUIRE(del);
  CHECK(del->status == 204);
  CHECK(c.Get(base + "/regions")->status == 404);
}

TEST_CASE("zero epsilon on a boundary-touching mask fences") {
  Running srv({"127.0.0.1", 0, std::nullopt});
  auto c = srv.client();
  const json scene = post(c, "/api/v1/scenes", {{"manifest", (fixture_dir() / "fx/manifest.json").string()}}, 201);
  const std::string base = "/api/v1/scenes/" + scene["scene_id"].get<std::string>();
  const std::string vid = post(c, base + "/views", {{"camera_index", 0}}, 201)["view_id"];
  const json mask = post(c, base + "/views/" + vid + "/mask", {{"oracle_label", 1}}, 201);
  const json region = post(c, base + "/grow",
                           {{"view_id", vid}, {"mask_id", mask["mask_id"]}, {"boundary", "contour"},
                            {"config", {{"epsilon", 0.0}}}},
                           201);
  CHECK(region["stop_reason"] == "boundary-fence");
}

TEST_CASE("inline fixture scenes") {
  Running srv({"127.0.0.1", 0, std::nullopt});
  auto c = srv.client();
  FixtureSpec s = two_spheres_spec();
  s.resolution = 16;
  const json scene = post(c, "/api/v1/scenes", {{"fixture", json::parse(fixture_spec_to_json(s))}}, 201);
  CHECK(scene["scene_id"].is_string());
}

TEST_CASE("error statuses") {
  Running srv({"127.0.0.1", 0, std::nullopt});
  auto c = srv.client();
  const auto missing = c.Get("/api/v1/scenes/nope/regions");
  REQUIRE(missing);
  CHECK(missing->status == 404);
  CHECK(json::parse(missing->body)["error"]["code"] == "not_found");
  post(c, "/api/v1/scenes/nope/views", {{"camera_index", 0}}, 404);
  const json bad = post(c, "/api/v1/scenes", json::object(), 422);
  CHECK(bad["error"].contains("fields"));
  auto raw = c.Post("/api/v1/scenes", "{not json", "application/json");
  REQUIRE(raw);
  CHECK(raw->status == 422);

  const json scene = post(c, "/api/v1/scenes", {{"manifest", (fixture_dir() / "fx/manifest.json").string()}}, 201);
  const std::string base = "/api/v1/scenes/" + scene["scene_id"].get<std::string>();
  CHECK(post(c, base + "/views", {{"camera_index", 99}}, 422)["error"]["fields"].contains("camera_index"));
  const std::string vid = post(c, base + "/views", {{"camera_index", 0}}, 201)["view_id"];
  const json miss = post(c, base + "/views/" + vid + "/mask", {{"clicks", {{{"x", 0}, {"y", 0}}}}}, 422);
  CHECK(miss["error"]["code"] == "missed_pixel");
  const json cfg = post(c, base + "/grow", {{"view_id", vid}, {"mask_id", "mask-404"}, {"config", {{"tau", 7}}}}, 422);
  CHECK(cfg["error"]["fields"].contains("tau"));
  post(c, base + "/grow", {{"view_id", vid}, {"mask_id", "mask-404"}}, 404);
  CHECK(c.Get(base + "/regions/region-9/mesh.ply")->status == 404);
}

TEST_CASE("static UI mount") {
  const auto ui = fixture_dir() / "ui";
  std::filesystem::create_directories(ui);
  {
    std::ofstream(ui / "index.html") << "<html>ok</html>";
  }
  Running srv({"127.0.0.1", 0, ui});
  auto c = srv.client();
  const auto r = c.Get("/ui/index.html");
  REQUIRE(r);
  CHECK(r->status == 200);
  CHECK(r->body == "<html>ok</html>");
}

}

#include <cctype>
#include <cstdlib>
#include <iostream>

#include "CLI11.hpp"
#include "decomesh/app.hpp"
#include "decomesh/detail/bytes.hpp"
#include "decomesh/fixtures.hpp"
#include "decomesh/image_io.hpp"
#include "decomesh/service.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace decomesh;
using ojson = nlohmann::ordered_json;

namespace {

std::string env_name(const std::string& option) {
  std::string out = "DECOMESH_";
  for (char c : option) out += c == '-' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

/// TOML reader that drops keys overridden by a DECOMESH_* variable, so the
/// environment beats the file while flags still beat both.
class EnvFirstConfig : public CLI::ConfigTOML {
 public:
  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    auto items = CLI::ConfigTOML::from_config(input);
    std::erase_if(items, [](const CLI::ConfigItem& item) {
      const char* value = std::getenv(env_name(item.name).c_str());
      return value != nullptr && *value != '\0';
    });
    return items;
  }
};

void bind_env(CLI::App& app) {
  for (CLI::Option* opt : app.get_options()) {
    const std::string name = opt->get_single_name();
    if (opt->get_lnames().empty() || name == "help" || name == "config") continue;
    opt->envname(env_name(name));
  }
  for (CLI::App* sub : app.get_subcommands({})) bind_env(*sub);
}

struct SceneSource {
  std::string manifest;
  std::string mesh;
  std::string cameras;

  void add(CLI::App* cmd) {
    auto* m = cmd->add_option("--manifest", manifest, "manifest.json written by synth");
    cmd->add_option("--mesh", mesh, "PLY mesh with .nmf/.nml sidecars")->excludes(m);
    cmd->add_option("--cameras", cameras, "cameras JSON")->excludes(m);
  }

  app::LoadedScene load() const {
    if (!manifest.empty()) return app::load_scene_bundle(manifest);
    if (mesh.empty() || cameras.empty()) {
      throw Error(ErrorCode::kInvalidArgument, "pass --manifest or both --mesh and --cameras");
    }
    app::LoadedScene s;
    s.mesh = load_mesh_with_sidecars(mesh);
    s.cameras = parse_cameras_json(detail::read_text_file(cameras));
    return s;
  }
};

void add_grow_options(CLI::App* cmd, GrowConfig& cfg, std::string& boundary) {
  cmd->add_option("--tau", cfg.tau, "initial cosine threshold")->capture_default_str();
  cmd->add_option("--theta", cfg.theta, "threshold decay per round")->capture_default_str();
  cmd->add_option("--epsilon", cfg.epsilon, "tolerated boundary fraction")->capture_default_str();
  cmd->add_option("--tau-floor", cfg.tau_floor, "stop below this threshold")->capture_default_str();
  cmd->add_option("--max-rounds", cfg.max_rounds, "round cap")->capture_default_str();
  cmd->add_option("--boundary", boundary, "boundary vertices from the 'outer' ring or the mask 'contour'")
      ->check(CLI::IsMember({"outer", "contour"}))
      ->capture_default_str();
}

void print(const ojson& j) { std::cout << j.dump(2) << "\n"; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App cli{"Scene decomposition toolkit: fixtures, rendering, click masks, region growing, metrics"};
  cli.require_subcommand(1);
  cli.config_formatter(std::make_shared<EnvFirstConfig>());
  cli.set_config("--config", "", "TOML config file (flags > DECOMESH_* env > file)");

  // synth
  auto* synth = cli.add_subcommand("synth", "Generate a fixture bundle");
  std::string preset = "two_spheres", spec_path, synth_out;
  std::optional<double> noise;
  std::optional<std::uint64_t> synth_seed;
  std::optional<int> resolution;
  synth->add_option("--preset", preset, "two_spheres or adjacent_twins")
      ->check(CLI::IsMember({"two_spheres", "adjacent_twins"}))
      ->capture_default_str();
  synth->add_option("--spec", spec_path, "fixture spec JSON (overrides --preset)");
  synth->add_option("--noise", noise, "feature noise sigma");
  synth->add_option("--seed", synth_seed, "rng seed");
  synth->add_option("--resolution", resolution, "marching-cubes cells along the longest axis");
  synth->add_option("--out", synth_out, "output directory")->required();

  // render
  auto* render = cli.add_subcommand("render", "Rasterize one view and write its buffers");
  SceneSource render_src;
  int render_view = 0;
  std::string render_out;
  render_src.add(render);
  render->add_option("--view", render_view, "camera index")->capture_default_str();
  render->add_option("--out", render_out, "output directory")->required();

  // mask
  auto* mask_cmd = cli.add_subcommand("mask", "Turn clicks (or an oracle) into a mask");
  SceneSource mask_src;
  int mask_view = 0;
  double tau_2d = kDefaultTau2d;
  std::string prompt_path, oracle_mask, mask_out, rle_out;
  std::optional<std::uint32_t> oracle_label;
  mask_src.add(mask_cmd);
  mask_cmd->add_option("--view", mask_view, "camera index")->capture_default_str();
  auto* prompt_opt = mask_cmd->add_option("--prompt", prompt_path, "click prompt JSON");
  auto* label_opt = mask_cmd->add_option("--oracle-label", oracle_label, "take the mask from this label");
  auto* png_opt = mask_cmd->add_option("--oracle-mask", oracle_mask, "take the mask from a 0/255 PNG");
  prompt_opt->excludes(label_opt)->excludes(png_opt);
  label_opt->excludes(png_opt);
  mask_cmd->add_option("--tau-2d", tau_2d, "feature similarity threshold")->capture_default_str();
  mask_cmd->add_option("--out", mask_out, "mask PNG")->required();
  mask_cmd->add_option("--rle", rle_out, "also write RLE JSON");

  // grow
  auto* grow_cmd = cli.add_subcommand("grow", "Grow a region from a mask and export the submesh");
  SceneSource grow_src;
  int grow_view = 0;
  GrowConfig grow_cfg;
  std::string grow_boundary = "outer", grow_mask, grow_out, grow_trace;
  grow_src.add(grow_cmd);
  grow_cmd->add_option("--view", grow_view, "camera index")->capture_default_str();
  grow_cmd->add_option("--mask", grow_mask, "mask PNG")->required();
  add_grow_options(grow_cmd, grow_cfg, grow_boundary);
  grow_cmd->add_option("--out", grow_out, "submesh PLY")->required();
  grow_cmd->add_option("--trace", grow_trace, "trace JSON");

  // decompose
  auto* decompose_cmd = cli.add_subcommand("decompose", "Extract one submesh per object of a clicks manifest");
  SceneSource dec_src;
  GrowConfig dec_cfg;
  std::string dec_boundary = "outer", clicks_path, dec_out;
  dec_src.add(decompose_cmd);
  decompose_cmd->add_option("--clicks", clicks_path, "clicks manifest JSON")->required();
  add_grow_options(decompose_cmd, dec_cfg, dec_boundary);
  decompose_cmd->add_option("--out", dec_out, "output directory")->required();

  // eval
  auto* eval_cmd = cli.add_subcommand("eval", "Compare two meshes by surface samples");
  std::string pred_path, gt_path;
  app::EvalOptions eval_opts;
  bool csv = false;
  eval_cmd->add_option("pred", pred_path, "predicted mesh")->required();
  eval_cmd->add_option("gt", gt_path, "ground-truth mesh")->required();
  eval_cmd->add_option("--samples", eval_opts.samples, "samples per mesh")->capture_default_str();
  eval_cmd->add_option("--seed", eval_opts.seed, "sampling seed")->capture_default_str();
  eval_cmd->add_option("--threshold", eval_opts.threshold, "precision/recall distance")->capture_default_str();
  eval_cmd->add_flag("--csv", csv, "print a CSV header and row");

  // losses
  auto* losses_cmd = cli.add_subcommand("losses", "Evaluate the loss breakdown on an analytic scene");
  std::string loss_scene, loss_cameras, loss_manifest;
  int loss_view = 0;
  app::LossRunOptions loss_opts;
  auto* lm = losses_cmd->add_option("--manifest", loss_manifest, "manifest.json written by synth");
  losses_cmd->add_option("--scene", loss_scene, "scene JSON")->excludes(lm);
  losses_cmd->add_option("--cameras", loss_cameras, "cameras JSON")->excludes(lm);
  losses_cmd->add_option("--view", loss_view, "camera index")->capture_default_str();
  losses_cmd->add_option("--stride", loss_opts.stride, "pixel stride")->capture_default_str();
  losses_cmd->add_option("--samples", loss_opts.samples, "samples per ray")->capture_default_str();
  losses_cmd->add_option("--points", loss_opts.extra_points, "volume points")->capture_default_str();
  losses_cmd->add_option("--seed", loss_opts.seed, "volume point seed")->capture_default_str();

  // serve
  auto* serve = cli.add_subcommand("serve", "Run the HTTP service");
  service::ServiceOptions serve_opts;
  std::string ui_dir;
  serve->add_option("--host", serve_opts.host, "bind address")->capture_default_str();
  serve->add_option("--port", serve_opts.port, "port (0 picks one)")->capture_default_str();
  serve->add_option("--ui-dir", ui_dir, "static UI assets served under /ui");

  bind_env(cli);

  try {
    cli.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return cli.exit(e);
    std::cerr << ojson{{"error", {{"code", "usage"}, {"message", e.what()}}}}.dump() << "\n";
    return 64;
  }

  try {
    if (*synth) {
      FixtureSpec spec = spec_path.empty() ? (preset == "adjacent_twins" ? adjacent_twins_spec() : two_spheres_spec())
                                           : parse_fixture_spec_json(detail::read_text_file(spec_path));
      if (noise) spec.feature_noise = *noise;
      if (synth_seed) spec.seed = *synth_seed;
      if (resolution) spec.resolution = *resolution;
      const FixtureBundle bundle = generate(spec);
      const fs::path manifest = write_bundle(bundle, synth_out);
      print({{"manifest", manifest.string()},
             {"seed", bundle.seed_used},
             {"vertices", bundle.foreground.vertex_count()},
             {"faces", bundle.foreground.face_count()},
             {"cameras", bundle.cameras.size()},
             {"mean_edge_length", bundle.foreground.mean_edge_length()}});
    } else if (*render) {
      const auto scene = render_src.load();
      const RasterBuffers buffers = rasterize(scene.mesh, app::camera_at(scene.cameras, render_view));
      app::write_render_outputs(buffers, render_out);
      print({{"out", render_out}, {"width", buffers.width}, {"height", buffers.height},
             {"hit_pixels", buffers.hit_count()}});
    } else if (*mask_cmd) {
      const auto scene = mask_src.load();
      const RasterBuffers buffers = rasterize(scene.mesh, app::camera_at(scene.cameras, mask_view));
      Mask mask;
      if (oracle_label) {
        mask = mask_from_labels(buffers, *oracle_label);
      } else if (!oracle_mask.empty()) {
        mask = read_mask_png(oracle_mask);
        if (mask.rows() != buffers.height || mask.cols() != buffers.width) {
          throw Error(ErrorCode::kDimMismatch, "mask PNG size does not match the view");
        }
      } else if (!prompt_path.empty()) {
        mask = click_to_mask(buffers, app::parse_prompt_json(detail::read_text_file(prompt_path)), tau_2d);
      } else {
        throw Error(ErrorCode::kInvalidArgument, "pass --prompt, --oracle-label or --oracle-mask");
      }
      write_mask_png(mask_out, mask);
      if (!rle_out.empty()) detail::write_text_file(rle_out, rle_to_json(encode_rle(mask)));
      const std::size_t count = mask_count(mask);
      print({{"out", mask_out}, {"pixels", count}, {"contour_pixels", count ? mask_contour(mask).size() : 0}});
    } else if (*grow_cmd) {
      grow_cfg.validate();
      const auto scene = grow_src.load();
      const RasterBuffers buffers = rasterize(scene.mesh, app::camera_at(scene.cameras, grow_view));
      const Mask mask = read_mask_png(grow_mask);
      const SegmentationSeed seed =
          build_seed(buffers, mask, app::parse_boundary_mode(grow_boundary), "view_" + std::to_string(grow_view));
      const app::RegionExport out = app::grow_and_export(scene.mesh, seed, grow_cfg);
      detail::write_file(grow_out, out.ply);
      if (!grow_trace.empty()) detail::write_text_file(grow_trace, out.trace_json);
      print({{"out", grow_out},
             {"vertex_count", out.region.vertices.size()},
             {"seed_count", seed.seeds.size()},
             {"boundary_count", seed.boundary.size()},
             {"stop_reason", to_string(out.region.stop_reason)},
             {"rounds", out.region.rounds}});
    } else if (*decompose_cmd) {
      dec_cfg.validate();
      const auto scene = dec_src.load();
      const auto items = app::parse_decompose_manifest(detail::read_text_file(clicks_path));
      const auto result = app::decompose(scene, items, dec_cfg, app::parse_boundary_mode(dec_boundary));
      fs::create_directories(dec_out);
      ojson objects = ojson::array();
      for (std::size_t i = 0; i < items.size(); ++i) {
        const auto& r = result.regions[i];
        detail::write_file(fs::path(dec_out) / (items[i].name + ".ply"), r.ply);
        detail::write_text_file(fs::path(dec_out) / (items[i].name + ".json"), r.trace_json);
        objects.push_back({{"name", items[i].name},
                           {"mesh", items[i].name + ".ply"},
                           {"vertex_count", r.region.vertices.size()},
                           {"stop_reason", to_string(r.region.stop_reason)},
                           {"rounds", r.region.rounds}});
      }
      const ojson report{{"objects", objects},
                         {"residual_vertices", result.residual.size()},
                         {"overlap_vertices", result.overlap},
                         {"total_vertices", scene.mesh.vertex_count()}};
      detail::write_text_file(fs::path(dec_out) / "residual.json", report.dump(2));
      print(report);
    } else if (*eval_cmd) {
      const MetricsReport r = app::evaluate_meshes(load_mesh(pred_path), load_mesh(gt_path), eval_opts);
      if (csv) {
        std::cout << metrics_csv_header() << "\n" << metrics_to_csv_row(r) << "\n";
      } else {
        std::cout << metrics_to_json(r) << "\n";
      }
    } else if (*losses_cmd) {
      ComposedScene scene;
      std::vector<Camera> cameras;
      if (!loss_manifest.empty()) {
        const auto m = app::load_manifest(loss_manifest);
        scene = load_scene(m.scene.string());
        cameras = parse_cameras_json(detail::read_text_file(m.cameras));
      } else {
        if (loss_scene.empty() || loss_cameras.empty()) {
          throw Error(ErrorCode::kInvalidArgument, "pass --manifest or both --scene and --cameras");
        }
        scene = load_scene(loss_scene);
        cameras = parse_cameras_json(detail::read_text_file(loss_cameras));
      }
      const LossBreakdown b = app::run_losses(scene, app::camera_at(cameras, loss_view), loss_opts);
      std::cout << loss_report_json(b) << "\n";
    } else if (*serve) {
      if (!ui_dir.empty()) serve_opts.ui_dir = ui_dir;
      service::Service server(serve_opts);
      const int port = server.bind();
      std::cerr << ojson{{"listening", serve_opts.host + ":" + std::to_string(port)}}.dump() << "\n";
      server.run();
    }
  } catch (const std::exception& e) {
    std::cerr << app::error_json(e) << "\n";
    return 1;
  }
  return 0;
}

// Command-line front end: dataset generation, disentanglement, rendering,
// refinement, contact filtering and evaluation.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "hoi/io.hpp"
#include "hoi/parallel.hpp"
#include "hoi/pipeline.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Globals {
  std::uint64_t seed = 0;
  int threads = 0;
  fs::path out = ".";
  bool json = false;
  bool quiet = false;
  CLI::Option* seed_opt = nullptr;
};

// Optional numeric override: applied only when the flag was given.
template <typename T>
struct Flag {
  T value{};
  CLI::Option* opt = nullptr;
  void add(CLI::App* app, const std::string& name, const std::string& help) { opt = app->add_option(name, value, help); }
  void apply(T& target) const {
    if (opt && opt->count() > 0) target = value;
  }
};

struct RenderFlags {
  Flag<int> samples;
  Flag<double> beta;
  void add(CLI::App* c) {
    samples.add(c, "--samples-per-component", "Ray samples per intersected component (default 64)");
    beta.add(c, "--beta", "Laplace density scale in meters, 0 for twice the grid spacing");
  }
  void apply(hoi::RenderConfig& rc) const {
    samples.apply(rc.samples_per_component);
    beta.apply(rc.beta);
  }
};

struct FilterFlags {
  Flag<int> min_span, margin, sigma_win;
  void add(CLI::App* c) {
    min_span.add(c, "--min-span", "Contact runs shorter than this many frames are flipped");
    margin.add(c, "--margin", "Frames added on both sides of a contact run");
    sigma_win.add(c, "--sigma-win", "Temporal probability window in frames");
  }
  void apply(hoi::PhysParams& p) const {
    min_span.apply(p.min_span);
    margin.apply(p.margin);
    sigma_win.apply(p.sigma_win);
  }
};

void require_file(const fs::path& p) {
  if (!fs::exists(p)) throw hoi::Error(hoi::ErrorCode::IoFailure, "no such file: " + p.string());
}

json envelope(const std::string& command) { return {{"schema_version", 1}, {"command", command}}; }

void emit(const Globals& g, const json& result, const std::string& text) {
  if (g.json)
    std::cout << result.dump(2) << '\n';
  else if (!text.empty())
    std::cout << text << '\n';
}

void log_config(const std::string& command, const json& cfg) { hoi::log_info(command + " config: " + cfg.dump()); }

std::string frame_stem(int k) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "frame_%04d", k);
  return buf;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hand-object interaction reconstruction toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  g.seed_opt = app.add_option("--seed", g.seed, "Random seed")->default_val(0);
  app.add_option("--threads", g.threads, "Worker threads, 0 for all cores")->default_val(0)->check(CLI::NonNegativeNumber);
  app.add_option("--out", g.out, "Output directory")->default_val(".");
  app.add_flag("--json", g.json, "Print machine-readable results to stdout");
  app.add_flag("-q,--quiet", g.quiet, "Suppress log messages");


  auto* gen = app.add_subcommand("gen", "Generate a synthetic dataset from a scene script");
  std::string script_path;
  bool standard = false;
  gen->add_option("script", script_path, "Scene script JSON");
  gen->add_flag("--standard", standard, "Use the built-in standard scene");

  auto* dis = app.add_subcommand("disentangle", "Recover object motion from apparent and scene trajectories");
  std::string obj_path, scn_path, align_path;
  hoi::RansacConfig ransac;
  dis->add_option("--obj", obj_path, "Apparent (object-frame) camera trajectory")->required();
  dis->add_option("--scn", scn_path, "Scene camera trajectory")->required();
  dis->add_option("--align", align_path, "Known Sim3 gauge; skips static-frame detection");
  dis->add_option("--iterations", ransac.iterations, "RANSAC iterations")->capture_default_str();
  dis->add_option("--center-threshold", ransac.center_threshold, "Inlier camera-center distance, meters")
      ->capture_default_str();
  dis->add_option("--angle-threshold", ransac.angle_threshold, "Inlier rotation angle, radians")->capture_default_str();
  dis->add_option("--min-inliers", ransac.min_inliers, "Minimum consensus, 0 for automatic")->capture_default_str();

  auto* ren = app.add_subcommand("render", "Render ground-truth buffers of one dataset frame");
  std::string manifest_path;
  int frame = 0;
  bool observed_camera = false;
  ren->add_option("--manifest", manifest_path, "Dataset manifest")->required();
  ren->add_option("--frame", frame, "Frame index")->required();
  ren->add_flag("--observed-camera", observed_camera, "Use the noisy scene trajectory instead of ground truth");
  RenderFlags ren_flags;
  ren_flags.add(ren);

  auto* ref = app.add_subcommand("refine", "Run the alternating shape and pose refinement on a dataset");
  std::string config_path;
  Flag<int> steps, steps_per_epoch, rays;
  bool gt_object_motion = false, no_checkpoints = false;
  ref->add_option("--manifest", manifest_path, "Dataset manifest")->required();
  ref->add_option("--config", config_path, "Optimizer config JSON");
  steps.add(ref, "--steps", "Total optimizer steps");
  steps_per_epoch.add(ref, "--steps-per-epoch", "Optimizer steps per epoch");
  rays.add(ref, "--rays-per-step", "Rays per optimizer step");
  ref->add_flag("--gt-object-motion", gt_object_motion, "Use ground-truth object motion instead of disentangling");
  ref->add_flag("--no-checkpoints", no_checkpoints, "Skip per-cycle checkpoints");
  RenderFlags ref_render;
  FilterFlags ref_filter;
  ref_render.add(ref);
  ref_filter.add(ref);

  auto* fil = app.add_subcommand("filter-contacts", "Temporally filter a predicted contact timeline");
  std::string timeline_path;
  fil->add_option("--timeline", timeline_path, "Contact timeline JSON")->required();
  FilterFlags fil_filter;
  fil_filter.add(fil);

  auto* ev = app.add_subcommand("eval", "Score a refinement result against a dataset");
  std::string pred_dir, gt_dir, pd_mode = "frame-max";
  hoi::EvalOptions eval_opt;
  bool no_images = false;
  ev->add_option("--pred", pred_dir, "Refinement output directory")->required();
  ev->add_option("--gt", gt_dir, "Dataset directory (holding manifest.json)")->required();
  ev->add_option("--tau", eval_opt.f1_tau, "F-score threshold in meters")->capture_default_str();
  ev->add_option("--pd", pd_mode, "Penetration aggregation")
      ->check(CLI::IsMember({"frame-max", "points"}))
      ->capture_default_str();
  ev->add_option("--surface-points", eval_opt.surface_points, "Surface samples per component")->capture_default_str();
  ev->add_flag("--no-images", no_images, "Skip re-rendering for PSNR/SSIM");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  hoi::set_log_quiet(g.quiet);
  const int threads = hoi::resolve_threads(g.threads);
  const bool seed_given = g.seed_opt->count() > 0;

  try {
    if (gen->parsed()) {
      if (standard == !script_path.empty())
        throw hoi::Error(hoi::ErrorCode::InvalidArgument, "gen needs exactly one of <script.json> or --standard");
      hoi::SceneScript s;
      if (standard) {
        s = hoi::standard_scene();
      } else {
        require_file(script_path);
        s = hoi::scene_script_from_json(hoi::io::read_json(script_path));
      }
      if (seed_given) s.seed = g.seed;
      s.validate();
      log_config("gen", hoi::to_json(s));
      fs::create_directories(g.out);
      const hoi::DatasetManifest m = hoi::generate(s, g.out, threads);
      json r = envelope("gen");
      r["manifest"] = (g.out / "manifest.json").string();
      r["frames"] = s.frames;
      r["renders"] = m.doc.at("renders").size();
      emit(g, r, "wrote " + r["manifest"].get<std::string>());
    } else if (dis->parsed()) {
      require_file(obj_path);
      require_file(scn_path);
      const hoi::CameraTrajectory c_obj = hoi::trajectory_from_json(hoi::io::read_json(obj_path));
      const hoi::CameraTrajectory c_scn = hoi::trajectory_from_json(hoi::io::read_json(scn_path));
      ransac.seed = g.seed;
      ransac.threads = threads;
      json r = envelope("disentangle");
      hoi::Sim3d align;
      if (!align_path.empty()) {
        require_file(align_path);
        align = hoi::sim3_from_json(hoi::io::read_json(align_path));
        log_config("disentangle", {{"align", align_path}});
      } else {
        log_config("disentangle", {{"iterations", ransac.iterations},
                                   {"center_threshold", ransac.center_threshold},
                                   {"angle_threshold", ransac.angle_threshold},
                                   {"min_inliers", ransac.min_inliers},
                                   {"seed", ransac.seed}});
        const hoi::StaticFrameReport rep = hoi::detect_static_frames(c_obj, c_scn, ransac);
        align = rep.alignment;
        r["inlier_frames"] = rep.inlier_frames;
        r["static_frames"] = rep.static_frames;
        r["rest_phases"] = rep.rest_phases.size();
      }
      const hoi::ObjectMotion p = hoi::disentangle(c_obj, c_scn, align);
      fs::create_directories(g.out);
      hoi::io::write_json(g.out / "p_obj.json", hoi::to_json(p));
      hoi::io::write_json(g.out / "alignment.json", hoi::to_json(align));
      r["p_obj"] = (g.out / "p_obj.json").string();
      r["alignment"] = hoi::to_json(align);
      emit(g, r, "wrote " + r["p_obj"].get<std::string>());
    } else if (ren->parsed()) {
      require_file(manifest_path);
      const hoi::Dataset ds = hoi::load_dataset(manifest_path);
      hoi::RenderConfig rc;
      rc.samples_per_component = ds.script.samples_per_component;
      rc.seed = ds.script.seed;
      ren_flags.apply(rc);
      rc.threads = threads;
      log_config("render", {{"frame", frame},
                            {"samples_per_component", rc.samples_per_component},
                            {"beta", rc.beta},
                            {"seed", rc.seed},
                            {"observed_camera", observed_camera}});
      const hoi::RenderBuffers b =
          hoi::render_image(ds.gt_components(), ds.camera(frame, !observed_camera), frame, rc);
      fs::create_directories(g.out);
      json r = envelope("render");
      r["frame"] = frame;
      r["files"] = hoi::write_buffers(g.out, frame_stem(frame), b);
      emit(g, r, "wrote " + (g.out / (frame_stem(frame) + "_color.ppm")).string());
    } else if (ref->parsed()) {
      require_file(manifest_path);
      hoi::OptimConfig cfg;
      if (!config_path.empty()) {
        require_file(config_path);
        cfg = hoi::optim_config_from_json(hoi::io::read_json(config_path));
      }
      const hoi::Dataset ds = hoi::load_dataset(manifest_path);
      // observations were rendered with the dataset's seed and sample count
      cfg.render.seed = ds.script.seed;
      if (config_path.empty()) cfg.render.samples_per_component = ds.script.samples_per_component;
      if (seed_given) cfg.seed = g.seed;
      if (g.threads != 0 || config_path.empty()) cfg.threads = threads;
      ref_render.apply(cfg.render);
      steps.apply(cfg.schedule.total_steps);
      steps_per_epoch.apply(cfg.schedule.steps_per_epoch);
      rays.apply(cfg.rays_per_step);
      ref_filter.apply(cfg.phys);
      cfg.validate();
      log_config("refine", hoi::to_json(cfg));

      hoi::RefineSetup setup;
      setup.ransac.seed = cfg.seed;
      setup.ransac.threads = cfg.threads;
      setup.gt_object_motion = gt_object_motion;
      hoi::RefineProblem pb = hoi::build_refine_problem(ds, cfg.phys, setup);
      hoi::EvalOptions eo;
      eo.threads = cfg.threads;
      eo.images = false;
      const hoi::MetricReport before = hoi::evaluate(pb.components, ds, eo);
      fs::create_directories(g.out);
      hoi::io::write_json(g.out / "config.json", hoi::to_json(cfg));
      const std::optional<fs::path> ckpt = no_checkpoints ? std::nullopt : std::optional(g.out / "checkpoints");
      const hoi::OptimState state = hoi::run_schedule(pb, cfg, ckpt);
      hoi::write_checkpoint(g.out, pb.components, state);
      const hoi::MetricReport after = hoi::evaluate(pb.components, ds, eo);
      json r = envelope("refine");
      r["steps"] = state.step;
      r["final_loss"] = state.log.empty() ? 0.0 : state.log.back().total;
      r["before"] = before.to_json();
      r["after"] = after.to_json();
      hoi::io::write_json(g.out / "metrics.json", r);
      emit(g, r, "before\n" + before.table() + "\nafter\n" + after.table());
    } else if (fil->parsed()) {
      require_file(timeline_path);
      hoi::PhysParams p;
      fil_filter.apply(p);
      p.validate();
      log_config("filter-contacts", {{"min_span", p.min_span}, {"margin", p.margin}, {"sigma_win", p.sigma_win}});
      const hoi::ContactTimeline t =
          hoi::temporal_filter(hoi::contact_timeline_from_json(hoi::io::read_json(timeline_path)), p);
      fs::create_directories(g.out);
      hoi::io::write_json(g.out / "contacts_filtered.json", hoi::to_json(t));
      std::vector<int> contact_frames;
      for (const auto& f : t.frames)
        if (f.label == hoi::ContactLabel::Contact) contact_frames.push_back(f.index);
      json r = envelope("filter-contacts");
      r["timeline"] = (g.out / "contacts_filtered.json").string();
      r["contact_frames"] = contact_frames;
      emit(g, r, std::to_string(contact_frames.size()) + " contact frames, wrote " + r["timeline"].get<std::string>());
    } else if (ev->parsed()) {
      const fs::path manifest = fs::path(gt_dir) / "manifest.json";
      require_file(manifest);
      require_file(fs::path(pred_dir) / "grids.sdfg");
      require_file(fs::path(pred_dir) / "poses.json");
      eval_opt.pd = pd_mode == "points" ? hoi::PdAggregation::MeanOverPoints : hoi::PdAggregation::MeanOfFrameMax;
      eval_opt.images = !no_images;
      eval_opt.threads = threads;
      log_config("eval", {{"tau", eval_opt.f1_tau}, {"pd", pd_mode}, {"surface_points", eval_opt.surface_points}});
      const hoi::Dataset ds = hoi::load_dataset(manifest);
      const hoi::MetricReport m = hoi::evaluate(hoi::load_result(pred_dir, ds), ds, eval_opt);
      json r = envelope("eval");
      r["metrics"] = m.to_json();
      fs::create_directories(g.out);
      hoi::io::write_json(g.out / "metrics.json", r);
      emit(g, r, m.table());
    }
  } catch (const hoi::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return hoi::is_validation_error(e.code()) ? 1 : 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}

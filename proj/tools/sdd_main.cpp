// Command-line entry point: dataset generation, training, rendering,
// decoupling, evaluation, and the ablation ladder, all behind one binary.

#include <cctype>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "sdd/decouple.hpp"
#include "sdd/errors.hpp"
#include "sdd/image.hpp"
#include "sdd/metrics.hpp"
#include "sdd/parallel.hpp"
#include "sdd/render.hpp"
#include "sdd/scene.hpp"
#include "sdd/synthetic.hpp"
#include "sdd/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void apply_ablation_row(sdd::TrainConfig& cfg, const std::string& row) {
  cfg.use_w = row != "a";
  cfg.use_lbi = row == "c" || row == "d" || row == "full";
  cfg.use_schedule = row == "d" || row == "full";
  cfg.use_asg = row == "full";
}

bool looks_like_index(const std::string& s) {
  if (s.empty()) return false;
  for (char c : s)
    if (!std::isdigit(static_cast<unsigned char>(c))) return false;
  return true;
}

// --camera accepts either a camera-list file (row picked by --camera-index)
// or a bare index into the cameras of --data.
sdd::Camera resolve_camera(const std::string& cam_spec, int cam_index,
                           const std::string& data_dir) {
  std::vector<sdd::Camera> cams;
  int idx = cam_index;
  if (!cam_spec.empty() && fs::exists(cam_spec) &&
      !fs::is_directory(cam_spec)) {
    cams = sdd::load_camera_list(cam_spec);
  } else if (!cam_spec.empty() && looks_like_index(cam_spec)) {
    if (data_dir.empty())
      throw sdd::SchemaError("--camera by index needs --data for the list");
    cams = sdd::load_dataset(data_dir, false).cameras;
    idx = std::stoi(cam_spec);
  } else if (!cam_spec.empty()) {
    throw sdd::MissingFileError("cannot open camera file: " + cam_spec);
  } else if (!data_dir.empty()) {
    cams = sdd::load_dataset(data_dir, false).cameras;
  } else {
    throw sdd::SchemaError("no camera source: pass --camera or --data");
  }
  if (idx < 0 || static_cast<size_t>(idx) >= cams.size())
    throw sdd::SchemaError("camera index " + std::to_string(idx) +
                           " outside the list of " +
                           std::to_string(cams.size()) + " cameras");
  return cams[idx];
}

struct SceneSource {
  sdd::GaussianSet scene;
  bool from_checkpoint = false;
  sdd::TrainConfig config;  // meaningful when from_checkpoint
};

SceneSource load_scene_source(const std::string& ckpt,
                              const std::string& scene_path) {
  if (ckpt.empty() == scene_path.empty())
    throw sdd::SchemaError("pass exactly one of --checkpoint and --scene");
  SceneSource src;
  if (!ckpt.empty()) {
    sdd::CheckpointScene cs = sdd::load_checkpoint_scene(ckpt);
    src.scene = std::move(cs.scene);
    src.config = cs.config;
    src.from_checkpoint = true;
  } else {
    src.scene = sdd::load_scene(scene_path);
  }
  return src;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Differentiable 4D Gaussian splatting with static-dynamic "
               "decoupling"};
  app.require_subcommand(1);
  int threads = 1;
  bool deterministic = false;
  app.add_option("--threads", threads, "Worker thread cap")
      ->capture_default_str();
  app.add_flag("--deterministic", deterministic,
               "Fixed-order reductions (always in effect; accepted so "
               "scripts can ask for it explicitly)");

  std::function<void()> action;

  // gen-scene
  auto* gen = app.add_subcommand(
      "gen-scene", "Generate a synthetic dataset with known motion labels");
  std::string gen_spec_path, gen_out;
  sdd::SyntheticSpec gflags;
  gen->add_option("--spec", gen_spec_path,
                  "Spec JSON file; inline flags override its values");
  gen->add_option("--out", gen_out, "Dataset directory to write")->required();
  auto* g_ns = gen->add_option("--n-static", gflags.n_static,
                               "Static primitive count")
                   ->capture_default_str();
  auto* g_nd = gen->add_option("--n-dynamic", gflags.n_dynamic,
                               "Dynamic primitive count")
                   ->capture_default_str();
  auto* g_nf = gen->add_option("--frames", gflags.n_frames,
                               "Frames per camera")
                   ->capture_default_str();
  auto* g_nc = gen->add_option("--cameras", gflags.n_cameras, "Camera count")
                   ->capture_default_str();
  auto* g_w = gen->add_option("--width", gflags.width, "Frame width")
                  ->capture_default_str();
  auto* g_h = gen->add_option("--height", gflags.height, "Frame height")
                  ->capture_default_str();
  auto* g_no = gen->add_option("--noise", gflags.noise_std,
                               "Gaussian pixel noise sigma")
                   ->capture_default_str();
  auto* g_am = gen->add_option("--amplitude", gflags.amplitude,
                               "Motion amplitude in world units")
                   ->capture_default_str();
  auto* g_se = gen->add_option("--seed", gflags.seed, "Generator seed")
                   ->capture_default_str();
  gen->callback([&]() {
    action = [&]() {
      sdd::SyntheticSpec spec = gen_spec_path.empty()
                                    ? sdd::SyntheticSpec{}
                                    : sdd::load_synth_spec(gen_spec_path);
      if (g_ns->count()) spec.n_static = gflags.n_static;
      if (g_nd->count()) spec.n_dynamic = gflags.n_dynamic;
      if (g_nf->count()) spec.n_frames = gflags.n_frames;
      if (g_nc->count()) spec.n_cameras = gflags.n_cameras;
      if (g_w->count()) spec.width = gflags.width;
      if (g_h->count()) spec.height = gflags.height;
      if (g_no->count()) spec.noise_std = gflags.noise_std;
      if (g_am->count()) spec.amplitude = gflags.amplitude;
      if (g_se->count()) spec.seed = gflags.seed;
      sdd::SyntheticDataset ds = sdd::generate(spec);
      sdd::write_dataset(ds, gen_out);
      long held = 0;
      for (uint8_t h : ds.heldout) held += h;
      std::cout << "wrote " << ds.frames.size() << " frames ("
                << ds.cameras.size() << " cameras, " << held
                << " held-out times), " << ds.truth.size()
                << " primitives to " << gen_out << "\n";
    };
  });

  // train
  auto* tr = app.add_subcommand("train", "Optimize a scene against a dataset");
  std::string tr_data, tr_config, tr_out, tr_log, tr_resume, tr_scene_out,
      tr_row;
  long long tr_steps = 0;
  uint64_t tr_seed = 0;
  tr->add_option("--data", tr_data, "Dataset directory")->required();
  tr->add_option("--config", tr_config, "Training config JSON");
  tr->add_option("--out", tr_out, "Checkpoint path to write")->required();
  tr->add_option("--log", tr_log,
                 "Per-step JSONL log (default: <out>.log.jsonl)");
  tr->add_option("--resume", tr_resume,
                 "Continue from this checkpoint (its embedded config wins)");
  tr->add_option("--scene-out", tr_scene_out,
                 "Also export the final scene as a scene file");
  auto* t_steps = tr->add_option("--steps", tr_steps, "Total step budget");
  auto* t_seed = tr->add_option("--seed", tr_seed, "Training seed");
  tr->add_option("--ablation", tr_row,
                 "Toggle preset: a (plain), b (+coefficients), c (+entropy), "
                 "d (+schedule), full (+masked supervision)")
      ->check(CLI::IsMember({"a", "b", "c", "d", "full"}));
  tr->callback([&]() {
    action = [&]() {
      sdd::LoadedDataset data = sdd::load_dataset(tr_data);
      std::string log_path = tr_log.empty() ? tr_out + ".log.jsonl" : tr_log;
      std::ofstream log(log_path);
      if (!log) throw std::runtime_error("cannot write file: " + log_path);
      if (!tr_resume.empty()) {
        sdd::Trainer t = sdd::Trainer::load_checkpoint(data, tr_resume);
        if (t_steps->count()) t.set_total_steps(tr_steps);
        t.train(&log);
        t.save_checkpoint(tr_out);
        if (!tr_scene_out.empty()) sdd::save_scene(t.scene(), tr_scene_out);
        std::cout << "resumed to step " << t.step() << ", checkpoint "
                  << tr_out << "\n";
      } else {
        sdd::TrainConfig cfg = tr_config.empty()
                                   ? sdd::TrainConfig{}
                                   : sdd::load_train_config(tr_config);
        if (t_steps->count()) cfg.steps = tr_steps;
        if (t_seed->count()) cfg.seed = tr_seed;
        if (!tr_row.empty()) apply_ablation_row(cfg, tr_row);
        sdd::Trainer t(data, cfg);
        t.train(&log);
        t.save_checkpoint(tr_out);
        if (!tr_scene_out.empty()) sdd::save_scene(t.scene(), tr_scene_out);
        std::cout << "trained to step " << t.step() << ", checkpoint "
                  << tr_out << "\n";
      }
    };
  });

  // render
  auto* rd = app.add_subcommand("render", "Render one view at one time");
  std::string rd_ckpt, rd_scene, rd_cam, rd_data, rd_out, rd_subset = "full";
  int rd_cam_index = 0;
  double rd_time = 0.0, rd_tau_d = 0.85, rd_tau_s = 0.2;
  bool rd_fdump = false, rd_no_mod = false;
  rd->add_option("--checkpoint", rd_ckpt, "Checkpoint to render from");
  rd->add_option("--scene", rd_scene, "Scene file to render from");
  rd->add_option("--camera", rd_cam,
                 "Camera list file, or an index into --data's cameras");
  rd->add_option("--camera-index", rd_cam_index,
                 "Row when --camera names a file")
      ->capture_default_str();
  rd->add_option("--data", rd_data, "Dataset directory supplying cameras");
  rd->add_option("--time", rd_time, "Normalized time in [0, 1]")
      ->capture_default_str();
  rd->add_option("--out", rd_out, "PNG path to write")->required();
  rd->add_option("--subset", rd_subset, "full, static, or dynamic")
      ->check(CLI::IsMember({"full", "static", "dynamic"}))
      ->capture_default_str();
  auto* r_td = rd->add_option("--tau-d", rd_tau_d,
                              "Dynamic threshold for subset renders")
                   ->capture_default_str();
  auto* r_ts = rd->add_option("--tau-s", rd_tau_s,
                              "Static threshold for subset renders")
                   ->capture_default_str();
  rd->add_flag("--float-dump", rd_fdump,
               "Also write <out>.f32 with the exact float32 pixels");
  rd->add_flag("--no-modulate", rd_no_mod,
               "Apply deformation unmodulated by the dynamic coefficients");
  rd->callback([&]() {
    action = [&]() {
      SceneSource src = load_scene_source(rd_ckpt, rd_scene);
      sdd::Camera cam = resolve_camera(rd_cam, rd_cam_index, rd_data);
      double tau_d = src.from_checkpoint ? src.config.tau_d_inference : 0.85;
      double tau_s = src.from_checkpoint ? src.config.tau_s_inference : 0.2;
      if (r_td->count()) tau_d = rd_tau_d;
      if (r_ts->count()) tau_s = rd_tau_s;
      sdd::RenderOptions opts;
      opts.modulate_w = src.from_checkpoint ? src.config.use_w : true;
      if (rd_no_mod) opts.modulate_w = false;
      sdd::RenderOutput out;
      if (rd_subset == "full") {
        out = sdd::render(src.scene, cam, rd_time, opts);
      } else {
        sdd::Partition part =
            sdd::partition_inference(src.scene, tau_d, tau_s);
        const std::vector<uint8_t>& flags =
            rd_subset == "static" ? part.is_static : part.is_dynamic;
        out = sdd::render(src.scene, cam, rd_time, opts, &flags);
      }
      sdd::save_png(out.image, rd_out);
      if (rd_fdump) sdd::save_image_dump(out.image, rd_out + ".f32");
      std::cout << "rendered " << rd_subset << " view to " << rd_out << "\n";
    };
  });

  // decouple
  auto* dc = app.add_subcommand(
      "decouple", "Partition a scene into static and dynamic halves");
  std::string dc_ckpt, dc_scene, dc_out, dc_cam, dc_data;
  int dc_cam_index = 0;
  double dc_tau_d = 0.85, dc_tau_s = 0.2, dc_time = 0.0;
  dc->add_option("--checkpoint", dc_ckpt, "Checkpoint to partition");
  dc->add_option("--scene", dc_scene, "Scene file to partition");
  dc->add_option("--out", dc_out, "Output directory")->required();
  auto* d_td = dc->add_option("--tau-d", dc_tau_d, "Dynamic threshold")
                   ->capture_default_str();
  auto* d_ts = dc->add_option("--tau-s", dc_tau_s, "Static threshold")
                   ->capture_default_str();
  dc->add_option("--camera", dc_cam,
                 "Camera list file or index for the split renders");
  dc->add_option("--camera-index", dc_cam_index,
                 "Row when --camera names a file")
      ->capture_default_str();
  dc->add_option("--data", dc_data, "Dataset directory supplying cameras");
  dc->add_option("--time", dc_time, "Time for the split renders")
      ->capture_default_str();
  dc->callback([&]() {
    action = [&]() {
      SceneSource src = load_scene_source(dc_ckpt, dc_scene);
      double tau_d = src.from_checkpoint ? src.config.tau_d_inference : 0.85;
      double tau_s = src.from_checkpoint ? src.config.tau_s_inference : 0.2;
      if (d_td->count()) tau_d = dc_tau_d;
      if (d_ts->count()) tau_s = dc_tau_s;
      sdd::Partition part = sdd::partition_inference(src.scene, tau_d, tau_s);
      fs::create_directories(dc_out);

      sdd::GaussianSet stat, dyn;
      for (uint32_t i : part.static_idx) stat.prims.push_back(src.scene[i]);
      for (uint32_t i : part.dynamic_idx) dyn.prims.push_back(src.scene[i]);
      sdd::save_scene(stat, (fs::path(dc_out) / "scene_static.json").string());
      sdd::save_scene(dyn, (fs::path(dc_out) / "scene_dynamic.json").string());

      const int n_bins = 20;
      sdd::CoeffHistogram hist = sdd::coeff_histogram(src.scene, n_bins);
      json h;
      json edges = json::array();
      for (int b = 0; b <= n_bins; ++b)
        edges.push_back(static_cast<double>(b) / n_bins);
      h["bin_edges"] = edges;
      h["counts"] = hist.counts;
      h["gap_mass"] = sdd::gap_mass(src.scene, tau_s, tau_d);
      h["tau_d"] = tau_d;
      h["tau_s"] = tau_s;
      h["n_static"] = part.static_idx.size();
      h["n_dynamic"] = part.dynamic_idx.size();
      h["n_unassigned"] = part.unassigned_idx.size();
      {
        std::ofstream out(fs::path(dc_out) / "histogram.json");
        if (!out)
          throw std::runtime_error("cannot write file: " + dc_out +
                                   "/histogram.json");
        out << h.dump(1) << "\n";
      }

      bool have_camera = !dc_cam.empty() || !dc_data.empty();
      if (have_camera) {
        sdd::Camera cam = resolve_camera(dc_cam, dc_cam_index, dc_data);
        sdd::RenderOptions opts;
        opts.modulate_w = src.from_checkpoint ? src.config.use_w : true;
        sdd::SplitRenders sr =
            sdd::render_split(src.scene, cam, dc_time, part, opts);
        sdd::save_png(sr.full.image,
                      (fs::path(dc_out) / "render_full.png").string());
        sdd::save_png(sr.img_static.image,
                      (fs::path(dc_out) / "render_static.png").string());
        sdd::save_png(sr.img_dynamic.image,
                      (fs::path(dc_out) / "render_dynamic.png").string());
      } else {
        std::cerr << "no camera source given; skipping the split renders\n";
      }
      std::cout << "static " << part.static_idx.size() << "  dynamic "
                << part.dynamic_idx.size() << "  unassigned "
                << part.unassigned_idx.size() << "  gap_mass "
                << sdd::gap_mass(src.scene, tau_s, tau_d) << "\n";
    };
  });

  // eval
  auto* ev = app.add_subcommand("eval", "Score a checkpoint against a dataset");
  std::string ev_ckpt, ev_data, ev_out, ev_mask_dir;
  ev->add_option("--checkpoint", ev_ckpt, "Checkpoint to evaluate")
      ->required();
  ev->add_option("--data", ev_data, "Dataset directory")->required();
  ev->add_option("--out", ev_out, "Report JSON path (stdout when absent)");
  ev->add_option("--mask-dir", ev_mask_dir,
                 "Dump per-frame predicted motion masks as 0/255 PNGs");
  ev->callback([&]() {
    action = [&]() {
      sdd::LoadedDataset data = sdd::load_dataset(ev_data);
      sdd::Trainer t = sdd::Trainer::load_checkpoint(data, ev_ckpt);
      sdd::EvalReport rep = t.evaluate();
      if (!ev_mask_dir.empty()) {
        fs::create_directories(ev_mask_dir);
        for (size_t i = 0; i < data.frames.size(); ++i) {
          sdd::Mask m = t.predicted_mask(i);
          sdd::save_mask_png(
              m, (fs::path(ev_mask_dir) / (data.frames[i].name + ".png"))
                     .string());
        }
      }
      if (!ev_out.empty()) {
        sdd::write_eval_json(rep, ev_out);
        std::cout << "psnr " << rep.psnr_heldout << "  ssim "
                  << rep.ssim_heldout << "  accuracy " << rep.accuracy
                  << "  gap_mass " << rep.gap_mass << "  mask_iou "
                  << rep.mask_iou << "\n";
      } else {
        json j;
        j["psnr_heldout"] = rep.psnr_heldout;
        j["ssim_heldout"] = rep.ssim_heldout;
        j["n_heldout"] = rep.n_heldout;
        j["has_labels"] = rep.has_labels;
        j["accuracy"] = rep.accuracy;
        j["precision"] = rep.precision;
        j["recall"] = rep.recall;
        j["gap_mass"] = rep.gap_mass;
        j["mask_iou"] = rep.mask_iou;
        j["n_mask_frames"] = rep.n_mask_frames;
        j["psnr_static_region"] = rep.psnr_static_region;
        j["psnr_dynamic_region"] = rep.psnr_dynamic_region;
        j["n_prims"] = rep.n_prims;
        std::cout << j.dump(1) << "\n";
      }
    };
  });

  // ablate
  auto* ab = app.add_subcommand(
      "ablate", "Train and score the five-row toggle ladder");
  std::string ab_data, ab_config, ab_out, ab_json;
  std::vector<uint64_t> ab_seeds{1, 2, 3};
  long long ab_steps = 0;
  ab->add_option("--data", ab_data, "Dataset directory")->required();
  ab->add_option("--config", ab_config, "Base training config JSON");
  ab->add_option("--out", ab_out, "Table text path")->required();
  ab->add_option("--json", ab_json,
                 "Row metrics JSON (default: <out>.json)");
  ab->add_option("--seeds", ab_seeds, "Seeds to repeat over")
      ->capture_default_str();
  auto* a_steps = ab->add_option("--steps", ab_steps, "Steps per row");
  ab->callback([&]() {
    action = [&]() {
      sdd::LoadedDataset data = sdd::load_dataset(ab_data);
      sdd::TrainConfig base = ab_config.empty()
                                  ? sdd::TrainConfig{}
                                  : sdd::load_train_config(ab_config);
      if (a_steps->count()) base.steps = ab_steps;
      std::vector<sdd::AblationRow> rows =
          sdd::run_ablation(data, base, ab_seeds, &std::cerr);
      std::string table = sdd::ablation_table(rows);
      std::ofstream out(ab_out);
      if (!out) throw std::runtime_error("cannot write file: " + ab_out);
      out << table;
      sdd::write_ablation_json(rows,
                               ab_json.empty() ? ab_out + ".json" : ab_json);
      std::cout << table;
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  sdd::set_thread_count(threads);
  try {
    action();
  } catch (const sdd::MissingFileError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return sdd::kExitMissingFile;
  } catch (const sdd::SchemaError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return sdd::kExitSchemaViolation;
  } catch (const sdd::NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return sdd::kExitNumericAbort;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return sdd::kExitFailure;
  }
  return sdd::kExitOk;
}

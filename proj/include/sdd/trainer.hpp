#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "sdd/decouple.hpp"
#include "sdd/gradients.hpp"
#include "sdd/losses.hpp"
#include "sdd/synthetic.hpp"
#include "sdd/uncertainty.hpp"

namespace sdd {

struct TrainConfig {
  long long steps = 30000;
  uint64_t seed = 1;

  // Mechanism toggles. Later stages build on earlier ones, and validate()
  // rejects combinations that skip a prerequisite: the entropy term needs
  // the coefficients it regularizes, the schedule needs the entropy term,
  // and the masked supervision needs the coefficients to split on.
  bool use_w = true;
  bool use_lbi = true;
  bool use_schedule = true;
  bool use_asg = true;

  double schedule_rate = 1e-4;
  double tau_train = 0.5;
  double tau_d_inference = 0.85;
  double tau_s_inference = 0.2;
  double ssim_weight = 0.2;
  double lambda_prior = 0.5;

  int uncertainty_patch = 8;
  double sigma_init = 1.0;
  int sigma_steps = 20;   // per-frame warm-started updates each visit
  double sigma_lr = 0.1;

  double prune_opacity = 0.01;
  long long prune_interval = 0;  // steps between pruning passes, 0 disables

  std::string init_mode = "truth";  // "truth" or "random"
  double init_jitter = 0.0;         // position noise in truth mode
  int init_count = 0;               // random-mode count, 0 means truth size
  int deform_degree = 2;

  double lr_mu = 1.6e-4;
  double lr_log_scale = 5e-3;
  double lr_rotation = 1e-3;
  double lr_color = 2.5e-3;
  double lr_opacity = 5e-2;
  double lr_dyn = 5e-2;
  double lr_deform = 1.6e-4;
};

// Throws SchemaError on out-of-range values or toggle combinations whose
// prerequisites are missing.
void validate(const TrainConfig& cfg);

// Strict JSON config: every field optional, unknown keys rejected, the
// result validated.
TrainConfig load_train_config(const std::string& path);
void save_train_config(const TrainConfig& cfg, const std::string& path);

struct StepStats {
  long long step = 0;  // 1-based index of the step just finished
  size_t frame = 0;    // dataset frame it trained on
  LossBreakdown loss;
  double psnr_train = 0.0;
};

struct EvalReport {
  double psnr_heldout = 0.0;
  double ssim_heldout = 0.0;
  long n_heldout = 0;  // 0 means the means above fell back to all frames
  bool has_labels = false;
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double gap_mass = 0.0;
  double mask_iou = 0.0;  // mean over frames carrying ground-truth masks
  long n_mask_frames = 0;
  double psnr_static_region = 0.0;   // full render scored outside gt masks
  double psnr_dynamic_region = 0.0;  // and inside them
  long n_prims = 0;
};

// Stable fingerprint of the dataset geometry and frame identity (not pixel
// content); checkpoints embed it so a resume against a different dataset
// fails loudly instead of silently diverging.
uint64_t dataset_digest(const LoadedDataset& data);

class Trainer {
 public:
  // Fresh state. "truth" init copies the dataset's canonical scene with
  // deformation zeroed and dyn_logit 0 (plus optional position jitter), so
  // primitive indices stay aligned with ground-truth labels. "random" init
  // scatters init_count primitives in a fixed box.
  Trainer(const LoadedDataset& data, const TrainConfig& cfg);

  // One optimization step: sample a training frame, render (split renders
  // and mask refresh when the masked supervision is on), evaluate the
  // objective, backpropagate, Adam-update every parameter group. Throws
  // NumericError if any loss term or gradient goes non-finite.
  StepStats train_step();

  // Runs until cfg.steps, writing one JSON line per step to log when given.
  void train(std::ostream* log = nullptr);

  EvalReport evaluate() const;

  // The motion mask the uncertainty machinery infers for one frame, from a
  // freshly optimized field (not the warm-started training state).
  Mask predicted_mask(size_t frame_idx) const;

  void save_checkpoint(const std::string& path) const;
  // Restores everything (config included) from the checkpoint; the dataset
  // must match the embedded digest. A resumed run continues bit-for-bit as
  // if never interrupted.
  static Trainer load_checkpoint(const LoadedDataset& data,
                                 const std::string& path);

  const GaussianSet& scene() const { return scene_; }
  const TrainConfig& config() const { return cfg_; }
  // Lets a resumed run train past the step budget the checkpoint was
  // saved with; everything else about the config stays as trained.
  void set_total_steps(long long steps) { cfg_.steps = steps; }
  long long step() const { return step_; }
  const std::vector<uint32_t>& source_indices() const { return source_; }
  // Current-scene labels pulled through source_indices; empty when the
  // dataset has none.
  std::vector<uint8_t> current_labels() const;

 private:
  Trainer() = default;
  size_t pick_frame(long long step) const;
  void adam_update(const GradientSet& grads);
  void prune_now();
  Mask eval_mask(size_t frame_idx, const Partition& part) const;

  const LoadedDataset* data_ = nullptr;
  TrainConfig cfg_;
  GaussianSet scene_;
  std::vector<uint32_t> source_;
  std::vector<float> m_, v_;  // Adam moments, kept in float32 so a resumed
                              // run replays the identical arithmetic
  long long step_ = 0;
  std::vector<UncertaintyField> fields_;  // warm-started, one per frame
  std::vector<size_t> train_frames_;
  PatchStatsExtractor extractor_{8};
};

// Scene-only view of a checkpoint, enough for rendering and partitioning
// without the dataset the training ran against. The file's structure is
// still validated end to end.
struct CheckpointScene {
  GaussianSet scene;
  TrainConfig config;
  long long step = 0;
};
CheckpointScene load_checkpoint_scene(const std::string& path);

void write_eval_json(const EvalReport& rep, const std::string& path);

struct AblationRow {
  std::string name;
  uint64_t seed = 0;
  EvalReport eval;
  double final_total = 0.0;  // objective at the last step
};

// Trains the standard toggle ladder for each seed:
//   a: plain reconstruction    b: +coefficients      c: +entropy (flat)
//   d: +progressive schedule   full: +masked supervision
// Each run starts from the same initialization for its seed.
std::vector<AblationRow> run_ablation(const LoadedDataset& data,
                                      const TrainConfig& base,
                                      const std::vector<uint64_t>& seeds,
                                      std::ostream* progress = nullptr);

std::string ablation_table(const std::vector<AblationRow>& rows);
void write_ablation_json(const std::vector<AblationRow>& rows,
                         const std::string& path);

}  // namespace sdd

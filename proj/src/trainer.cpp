#include "sdd/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <ostream>

#include "json.hpp"
#include "sdd/errors.hpp"
#include "sdd/metrics.hpp"
#include "sdd/rng.hpp"

namespace sdd {

using nlohmann::json;

namespace {

constexpr double kBeta1 = 0.9;
constexpr double kBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;
constexpr char kCkptMagic[9] = {'S', 'D', 'D', 'C', 'K', 'P', 'T', 'v', '1'};

// Per-primitive moment layout: mu (3), log_scale (3), rotation (4),
// color (3), opacity_logit, dyn_logit, then the three deformation groups
// (3 * degree each).
int moment_stride(int degree) { return 15 + 9 * degree; }

json config_to_json(const TrainConfig& c) {
  json j;
  j["steps"] = c.steps;
  j["seed"] = c.seed;
  j["use_w"] = c.use_w;
  j["use_lbi"] = c.use_lbi;
  j["use_schedule"] = c.use_schedule;
  j["use_asg"] = c.use_asg;
  j["schedule_rate"] = c.schedule_rate;
  j["tau_train"] = c.tau_train;
  j["tau_d_inference"] = c.tau_d_inference;
  j["tau_s_inference"] = c.tau_s_inference;
  j["ssim_weight"] = c.ssim_weight;
  j["lambda_prior"] = c.lambda_prior;
  j["uncertainty_patch"] = c.uncertainty_patch;
  j["sigma_init"] = c.sigma_init;
  j["sigma_steps"] = c.sigma_steps;
  j["sigma_lr"] = c.sigma_lr;
  j["prune_opacity"] = c.prune_opacity;
  j["prune_interval"] = c.prune_interval;
  j["init_mode"] = c.init_mode;
  j["init_jitter"] = c.init_jitter;
  j["init_count"] = c.init_count;
  j["deform_degree"] = c.deform_degree;
  j["lr_mu"] = c.lr_mu;
  j["lr_log_scale"] = c.lr_log_scale;
  j["lr_rotation"] = c.lr_rotation;
  j["lr_color"] = c.lr_color;
  j["lr_opacity"] = c.lr_opacity;
  j["lr_dyn"] = c.lr_dyn;
  j["lr_deform"] = c.lr_deform;
  return j;
}

TrainConfig config_from_json(const json& j, const std::string& where) {
  if (!j.is_object()) throw SchemaError(where + ": expected an object");
  TrainConfig c;
  auto want = [&](const char* k, json::value_t t, json::value_t alt) {
    const json& v = j.at(k);
    if (v.type() != t && v.type() != alt)
      throw SchemaError(where + "." + k + ": wrong type");
  };
  auto geti = [&](const char* k, auto& dst) {
    if (!j.contains(k)) return;
    want(k, json::value_t::number_integer, json::value_t::number_unsigned);
    dst = j.at(k).get<std::decay_t<decltype(dst)>>();
  };
  auto getd = [&](const char* k, double& dst) {
    if (!j.contains(k)) return;
    if (!j.at(k).is_number())
      throw SchemaError(where + "." + k + ": wrong type");
    dst = j.at(k).get<double>();
  };
  auto getb = [&](const char* k, bool& dst) {
    if (!j.contains(k)) return;
    want(k, json::value_t::boolean, json::value_t::boolean);
    dst = j.at(k).get<bool>();
  };
  geti("steps", c.steps);
  geti("seed", c.seed);
  getb("use_w", c.use_w);
  getb("use_lbi", c.use_lbi);
  getb("use_schedule", c.use_schedule);
  getb("use_asg", c.use_asg);
  getd("schedule_rate", c.schedule_rate);
  getd("tau_train", c.tau_train);
  getd("tau_d_inference", c.tau_d_inference);
  getd("tau_s_inference", c.tau_s_inference);
  getd("ssim_weight", c.ssim_weight);
  getd("lambda_prior", c.lambda_prior);
  geti("uncertainty_patch", c.uncertainty_patch);
  getd("sigma_init", c.sigma_init);
  geti("sigma_steps", c.sigma_steps);
  getd("sigma_lr", c.sigma_lr);
  getd("prune_opacity", c.prune_opacity);
  geti("prune_interval", c.prune_interval);
  if (j.contains("init_mode")) {
    if (!j.at("init_mode").is_string())
      throw SchemaError(where + ".init_mode: wrong type");
    c.init_mode = j.at("init_mode").get<std::string>();
  }
  getd("init_jitter", c.init_jitter);
  geti("init_count", c.init_count);
  geti("deform_degree", c.deform_degree);
  getd("lr_mu", c.lr_mu);
  getd("lr_log_scale", c.lr_log_scale);
  getd("lr_rotation", c.lr_rotation);
  getd("lr_color", c.lr_color);
  getd("lr_opacity", c.lr_opacity);
  getd("lr_dyn", c.lr_dyn);
  getd("lr_deform", c.lr_deform);

  static const char* known[] = {
      "steps",          "seed",           "use_w",
      "use_lbi",        "use_schedule",   "use_asg",
      "schedule_rate",  "tau_train",      "tau_d_inference",
      "tau_s_inference", "ssim_weight",   "lambda_prior",
      "uncertainty_patch", "sigma_init",  "sigma_steps",
      "sigma_lr",       "prune_opacity",  "prune_interval",
      "init_mode",      "init_jitter",    "init_count",
      "deform_degree",  "lr_mu",          "lr_log_scale",
      "lr_rotation",    "lr_color",       "lr_opacity",
      "lr_dyn",         "lr_deform"};
  for (auto& [key, val] : j.items()) {
    (void)val;
    bool ok = false;
    for (const char* k : known) ok = ok || key == k;
    if (!ok) throw SchemaError(where + ": unknown key '" + key + "'");
  }
  validate(c);
  return c;
}

void check_loss_finite(const LossBreakdown& lb, long long step) {
  auto bad = [&](const char* name) {
    throw NumericError("step " + std::to_string(step) + ": non-finite " +
                       name);
  };
  if (!std::isfinite(lb.l_recon)) bad("l_recon");
  if (!std::isfinite(lb.l_bi)) bad("l_bi");
  if (!std::isfinite(lb.l_asg)) bad("l_asg");
  if (!std::isfinite(lb.total)) bad("total");
}

void write_u64(std::ostream& out, uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

uint64_t read_u64(const unsigned char* p) {
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(p[i]) << (8 * i);
  return v;
}

std::string hex64(uint64_t v) {
  char buf[17];
  snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

void validate(const TrainConfig& c) {
  auto fail = [](const std::string& msg) { throw SchemaError("config: " + msg); };
  if (c.steps < 0) fail("steps must be >= 0");
  if (c.use_lbi && !c.use_w) fail("use_lbi requires use_w");
  if (c.use_schedule && !c.use_lbi) fail("use_schedule requires use_lbi");
  if (c.use_asg && !c.use_w) fail("use_asg requires use_w");
  if (!(c.schedule_rate > 0)) fail("schedule_rate must be positive");
  if (!(c.tau_train > 0 && c.tau_train < 1)) fail("tau_train must be in (0, 1)");
  if (!(c.tau_s_inference > 0 && c.tau_s_inference < 1))
    fail("tau_s_inference must be in (0, 1)");
  if (!(c.tau_d_inference > 0 && c.tau_d_inference < 1))
    fail("tau_d_inference must be in (0, 1)");
  if (c.tau_s_inference > c.tau_d_inference)
    fail("tau_s_inference must not exceed tau_d_inference");
  if (!(c.ssim_weight >= 0 && c.ssim_weight <= 1))
    fail("ssim_weight must be in [0, 1]");
  if (!(c.lambda_prior > 0)) fail("lambda_prior must be positive");
  if (c.uncertainty_patch < 1) fail("uncertainty_patch must be >= 1");
  if (!(c.sigma_init > 0)) fail("sigma_init must be positive");
  if (c.sigma_steps < 0) fail("sigma_steps must be >= 0");
  if (!(c.sigma_lr > 0)) fail("sigma_lr must be positive");
  if (!(c.prune_opacity >= 0 && c.prune_opacity < 1))
    fail("prune_opacity must be in [0, 1)");
  if (c.prune_interval < 0) fail("prune_interval must be >= 0");
  if (c.init_mode != "truth" && c.init_mode != "random")
    fail("init_mode must be 'truth' or 'random'");
  if (c.init_jitter < 0) fail("init_jitter must be >= 0");
  if (c.init_count < 0) fail("init_count must be >= 0");
  if (c.deform_degree < 0 || c.deform_degree > 8)
    fail("deform_degree must be in [0, 8]");
  for (double lr : {c.lr_mu, c.lr_log_scale, c.lr_rotation, c.lr_color,
                    c.lr_opacity, c.lr_dyn, c.lr_deform})
    if (!(lr >= 0) || !std::isfinite(lr)) fail("learning rates must be >= 0");
}

TrainConfig load_train_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MissingFileError("cannot open file: " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw SchemaError(path + ": " + e.what());
  }
  return config_from_json(j, path);
}

void save_train_config(const TrainConfig& cfg, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write file: " + path);
  out << config_to_json(cfg).dump(1) << "\n";
}

uint64_t dataset_digest(const LoadedDataset& data) {
  uint64_t h = 1469598103934665603ull;
  auto mix = [&h](const void* p, size_t n) {
    const unsigned char* b = static_cast<const unsigned char*>(p);
    for (size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 1099511628211ull;
    }
  };
  auto mix_u = [&](uint64_t v) { mix(&v, 8); };
  auto mix_d = [&](double v) { mix(&v, 8); };

  mix_u(data.cameras.size());
  for (const Camera& c : data.cameras) {
    mix_u(static_cast<uint64_t>(c.width));
    mix_u(static_cast<uint64_t>(c.height));
    mix_d(c.fx);
    mix_d(c.fy);
    mix_d(c.cx);
    mix_d(c.cy);
    for (int r = 0; r < 3; ++r)
      for (int k = 0; k < 4; ++k) mix_d(c.world_to_cam(r, k));
    mix_d(c.near);
    mix_d(c.far);
  }
  mix_u(data.times.size());
  for (double t : data.times) mix_d(t);
  mix_u(data.labels.size());
  for (uint8_t l : data.labels) mix(&l, 1);
  mix_u(data.frames.size());
  for (const FrameSample& fr : data.frames) {
    mix(fr.name.data(), fr.name.size());
    uint8_t held = fr.heldout ? 1 : 0;
    mix(&held, 1);
  }
  return h;
}

Trainer::Trainer(const LoadedDataset& data, const TrainConfig& cfg)
    : data_(&data), cfg_(cfg), extractor_(cfg.uncertainty_patch) {
  validate(cfg_);
  if (cfg_.init_mode == "truth") {
    if (!data.has_truth)
      throw SchemaError(
          "init_mode 'truth' requires a dataset carrying truth_scene");
    scene_ = data.truth;
    Rng jitter = Rng::fork(cfg_.seed, 0xA001);
    for (auto& g : scene_.prims) {
      g.deform = DeformCoeffs(cfg_.deform_degree);
      g.dyn_logit = 0.0;
      if (cfg_.init_jitter > 0)
        for (int a = 0; a < 3; ++a) g.mu0[a] += cfg_.init_jitter * jitter.normal();
    }
  } else {
    int n = cfg_.init_count > 0
                ? cfg_.init_count
                : (data.has_truth ? static_cast<int>(data.truth.size()) : 0);
    if (n <= 0)
      throw SchemaError("init_mode 'random' needs init_count on a dataset "
                        "without truth_scene");
    Rng rng = Rng::fork(cfg_.seed, 0xA002);
    scene_ = init_random_scene(n, Vec3(-1.0, -1.0, -0.7), Vec3(1.0, 1.0, 1.0),
                               cfg_.deform_degree, rng);
  }
  source_.resize(scene_.size());
  for (size_t i = 0; i < source_.size(); ++i)
    source_[i] = static_cast<uint32_t>(i);
  size_t stride = static_cast<size_t>(moment_stride(cfg_.deform_degree));
  m_.assign(scene_.size() * stride, 0.0f);
  v_.assign(scene_.size() * stride, 0.0f);

  fields_.reserve(data.frames.size());
  for (const FrameSample& fr : data.frames) {
    const Camera& cam = data.cameras[fr.camera];
    fields_.emplace_back(patch_count(cam.height, cfg_.uncertainty_patch),
                         patch_count(cam.width, cfg_.uncertainty_patch),
                         cfg_.sigma_init);
  }
  for (size_t i = 0; i < data.frames.size(); ++i)
    if (!data.frames[i].heldout) train_frames_.push_back(i);
}

size_t Trainer::pick_frame(long long step) const {
  size_t n = train_frames_.size();
  long long epoch = (step - 1) / static_cast<long long>(n);
  size_t pos = static_cast<size_t>((step - 1) % static_cast<long long>(n));
  std::vector<size_t> order = train_frames_;
  Rng rng = Rng::fork(cfg_.seed, 0xE0000000ull + static_cast<uint64_t>(epoch));
  rng.shuffle(order);
  return order[pos];
}

StepStats Trainer::train_step() {
  if (train_frames_.empty())
    throw SchemaError("dataset has no training frames");
  const long long s = step_ + 1;
  size_t fi = pick_frame(s);
  const FrameSample& fr = data_->frames[fi];
  if (fr.image.height == 0)
    throw SchemaError("frame " + fr.name + " was loaded without pixels");
  const Camera& cam = data_->cameras[fr.camera];

  RenderOptions opts;
  opts.modulate_w = cfg_.use_w;

  LossWeights lw;
  lw.ssim_weight = cfg_.ssim_weight;
  lw.use_entropy = cfg_.use_lbi;
  lw.lambda_bi = !cfg_.use_lbi
                     ? 0.0
                     : (cfg_.use_schedule ? lambda_bi(s, cfg_.schedule_rate)
                                          : 1.0);
  lw.use_asg = cfg_.use_asg;
  lw.asg_weight = 1.0;

  std::vector<double> dyn_w(scene_.size());
  for (size_t i = 0; i < scene_.size(); ++i) dyn_w[i] = dyn_coeff(scene_[i]);

  GradientSet grads = GradientSet::zeros_like(scene_);
  std::vector<double> d_logit(scene_.size(), 0.0);
  Image d_full(fr.image.height, fr.image.width);
  LossBreakdown lb;
  double train_psnr = 0.0;

  if (cfg_.use_asg) {
    Partition part = partition_training(scene_, cfg_.tau_train);
    SplitRenders sr = render_split(scene_, cam, fr.t, part, opts);

    FeatureGrid f_static = extractor_.extract(sr.img_static.image, fr.name);
    FeatureGrid f_target = extractor_.extract(fr.image, fr.name);
    std::vector<double> res = feature_residuals(f_static, f_target);
    optimize_sigma(fields_[fi], res, cfg_.lambda_prior, cfg_.sigma_steps,
                   cfg_.sigma_lr);
    std::vector<uint8_t> patch_mask = make_mask(fields_[fi]);
    Mask mask = mask_to_pixels(patch_mask, fields_[fi].ph, fields_[fi].pw,
                               fr.image.height, fr.image.width,
                               cfg_.uncertainty_patch);

    Image d_static(fr.image.height, fr.image.width);
    Image d_dynamic(fr.image.height, fr.image.width);
    lb = total_loss(sr.full.image, fr.image, &sr.img_static.image,
                    &sr.img_dynamic.image, &mask, dyn_w, lw, &d_full,
                    &d_static, &d_dynamic, cfg_.use_lbi ? &d_logit : nullptr);
    check_loss_finite(lb, s);

    render_backward(scene_, cam, fr.t, opts, sr.full, d_full, grads);
    render_backward(scene_, cam, fr.t, opts, sr.img_static, d_static, grads);
    render_backward(scene_, cam, fr.t, opts, sr.img_dynamic, d_dynamic, grads);
    train_psnr = psnr(sr.full.image, fr.image);
  } else {
    RenderOutput out = render(scene_, cam, fr.t, opts);
    lb = total_loss(out.image, fr.image, nullptr, nullptr, nullptr, dyn_w, lw,
                    &d_full, nullptr, nullptr,
                    cfg_.use_lbi ? &d_logit : nullptr);
    check_loss_finite(lb, s);
    render_backward(scene_, cam, fr.t, opts, out, d_full, grads);
    train_psnr = psnr(out.image, fr.image);
  }

  if (cfg_.use_lbi)
    for (size_t i = 0; i < scene_.size(); ++i)
      grads[i].dyn_logit += d_logit[i];

  for (size_t i = 0; i < grads.size(); ++i)
    if (!grads[i].finite())
      throw NumericError("step " + std::to_string(s) +
                         ": non-finite gradient on primitive " +
                         std::to_string(i));

  adam_update(grads);
  step_ = s;
  if (cfg_.prune_interval > 0 && s % cfg_.prune_interval == 0) prune_now();

  StepStats st;
  st.step = s;
  st.frame = fi;
  st.loss = lb;
  st.psnr_train = train_psnr;
  return st;
}

void Trainer::adam_update(const GradientSet& grads) {
  const int deg = cfg_.deform_degree;
  const size_t stride = static_cast<size_t>(moment_stride(deg));
  const long long t = step_ + 1;
  const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(t));

  // One scalar at a time: update the float32 moments, then apply the step
  // using the rounded values, so resuming from a checkpoint replays the
  // exact same arithmetic.
  auto upd = [&](size_t k, double g, double lr, double& p) {
    double mo = kBeta1 * static_cast<double>(m_[k]) + (1.0 - kBeta1) * g;
    double vo = kBeta2 * static_cast<double>(v_[k]) + (1.0 - kBeta2) * g * g;
    m_[k] = static_cast<float>(mo);
    v_[k] = static_cast<float>(vo);
    double mhat = static_cast<double>(m_[k]) / c1;
    double vhat = static_cast<double>(v_[k]) / c2;
    p -= lr * mhat / (std::sqrt(vhat) + kAdamEps);
  };

  for (size_t i = 0; i < scene_.size(); ++i) {
    GaussianPrimitive& g = scene_[i];
    const PrimGrad& gr = grads[i];
    size_t base = i * stride;
    for (int a = 0; a < 3; ++a) upd(base + a, gr.mu0[a], cfg_.lr_mu, g.mu0[a]);
    for (int a = 0; a < 3; ++a)
      upd(base + 3 + a, gr.log_scale[a], cfg_.lr_log_scale, g.log_scale[a]);
    for (int a = 0; a < 4; ++a)
      upd(base + 6 + a, gr.rotation[a], cfg_.lr_rotation, g.rotation[a]);
    for (int a = 0; a < 3; ++a)
      upd(base + 10 + a, gr.color[a], cfg_.lr_color, g.color[a]);
    upd(base + 13, gr.opacity_logit, cfg_.lr_opacity, g.opacity_logit);
    if (cfg_.use_w) upd(base + 14, gr.dyn_logit, cfg_.lr_dyn, g.dyn_logit);
    size_t off = base + 15;
    for (int k = 0; k < deg; ++k)
      for (int a = 0; a < 3; ++a)
        upd(off + 3 * k + a, gr.dmu[k][a], cfg_.lr_deform, g.deform.dmu[k][a]);
    off += 3 * static_cast<size_t>(deg);
    for (int k = 0; k < deg; ++k)
      for (int a = 0; a < 3; ++a)
        upd(off + 3 * k + a, gr.dlog_scale[k][a], cfg_.lr_deform,
            g.deform.dlog_scale[k][a]);
    off += 3 * static_cast<size_t>(deg);
    for (int k = 0; k < deg; ++k)
      for (int a = 0; a < 3; ++a)
        upd(off + 3 * k + a, gr.drot[k][a], cfg_.lr_deform,
            g.deform.drot[k][a]);

    g.rotation = quat_normalized(g.rotation);
    // Colors are plain RGB; keep them in domain so saved scenes stay valid.
    for (int a = 0; a < 3; ++a)
      g.color[a] = std::min(1.0, std::max(0.0, g.color[a]));
  }
}

void Trainer::prune_now() {
  const size_t stride = static_cast<size_t>(moment_stride(cfg_.deform_degree));
  std::vector<GaussianPrimitive> keep;
  std::vector<uint32_t> keep_src;
  std::vector<float> keep_m, keep_v;
  keep.reserve(scene_.size());
  for (size_t i = 0; i < scene_.size(); ++i) {
    if (opacity(scene_[i]) < cfg_.prune_opacity) continue;
    keep.push_back(scene_[i]);
    keep_src.push_back(source_[i]);
    keep_m.insert(keep_m.end(), m_.begin() + i * stride,
                  m_.begin() + (i + 1) * stride);
    keep_v.insert(keep_v.end(), v_.begin() + i * stride,
                  v_.begin() + (i + 1) * stride);
  }
  scene_.prims = std::move(keep);
  source_ = std::move(keep_src);
  m_ = std::move(keep_m);
  v_ = std::move(keep_v);
}

void Trainer::train(std::ostream* log) {
  while (step_ < cfg_.steps) {
    StepStats st = train_step();
    if (log) {
      json j;
      j["step"] = st.step;
      j["frame"] = st.frame;
      j["l_recon"] = st.loss.l_recon;
      j["l_bi"] = st.loss.l_bi;
      j["lambda_bi"] = st.loss.lambda_bi;
      j["l_asg"] = st.loss.l_asg;
      j["total"] = st.loss.total;
      j["psnr_train"] = st.psnr_train;
      (*log) << j.dump() << "\n";
    }
  }
  if (log) log->flush();
}

std::vector<uint8_t> Trainer::current_labels() const {
  std::vector<uint8_t> out;
  if (data_->labels.empty()) return out;
  out.reserve(scene_.size());
  for (uint32_t src : source_) {
    if (src >= data_->labels.size())
      throw SchemaError("source index " + std::to_string(src) +
                        " outside the dataset label table");
    out.push_back(data_->labels[src]);
  }
  return out;
}

Mask Trainer::eval_mask(size_t frame_idx, const Partition& part) const {
  const FrameSample& fr = data_->frames[frame_idx];
  const Camera& cam = data_->cameras[fr.camera];
  RenderOptions opts;
  opts.modulate_w = cfg_.use_w;
  RenderOutput st = render(scene_, cam, fr.t, opts, &part.is_static);
  FeatureGrid f_static = extractor_.extract(st.image, fr.name);
  FeatureGrid f_target = extractor_.extract(fr.image, fr.name);
  std::vector<double> res = feature_residuals(f_static, f_target);
  UncertaintyField field(patch_count(fr.image.height, cfg_.uncertainty_patch),
                         patch_count(fr.image.width, cfg_.uncertainty_patch),
                         cfg_.sigma_init);
  optimize_sigma(field, res, cfg_.lambda_prior, 400, cfg_.sigma_lr);
  std::vector<uint8_t> patch_mask = make_mask(field);
  return mask_to_pixels(patch_mask, field.ph, field.pw, fr.image.height,
                        fr.image.width, cfg_.uncertainty_patch);
}

Mask Trainer::predicted_mask(size_t frame_idx) const {
  if (frame_idx >= data_->frames.size())
    throw SchemaError("frame index " + std::to_string(frame_idx) +
                      " outside the dataset");
  return eval_mask(frame_idx, partition_training(scene_, cfg_.tau_train));
}

EvalReport Trainer::evaluate() const {
  EvalReport rep;
  rep.n_prims = static_cast<long>(scene_.size());
  RenderOptions opts;
  opts.modulate_w = cfg_.use_w;

  std::vector<size_t> eval_frames;
  for (size_t i = 0; i < data_->frames.size(); ++i)
    if (data_->frames[i].heldout) eval_frames.push_back(i);
  rep.n_heldout = static_cast<long>(eval_frames.size());
  if (eval_frames.empty())
    for (size_t i = 0; i < data_->frames.size(); ++i) eval_frames.push_back(i);

  double psum = 0, ssum = 0;
  for (size_t fi : eval_frames) {
    const FrameSample& fr = data_->frames[fi];
    RenderOutput out = render(scene_, data_->cameras[fr.camera], fr.t, opts);
    psum += psnr(out.image, fr.image);
    ssum += ssim(out.image, fr.image);
  }
  rep.psnr_heldout = psum / eval_frames.size();
  rep.ssim_heldout = ssum / eval_frames.size();

  if (!data_->labels.empty()) {
    rep.has_labels = true;
    DecouplingScore ds =
        decoupling_score(scene_, current_labels(), cfg_.tau_train);
    rep.accuracy = ds.accuracy;
    rep.precision = ds.precision;
    rep.recall = ds.recall;
  }
  rep.gap_mass = gap_mass(scene_, cfg_.tau_s_inference, cfg_.tau_d_inference);

  Partition part = partition_training(scene_, cfg_.tau_train);
  double iou = 0, ps_static = 0, ps_dynamic = 0;
  long nm = 0;
  for (size_t i = 0; i < data_->frames.size(); ++i) {
    const FrameSample& fr = data_->frames[i];
    if (!fr.has_gt_mask) continue;
    Mask pred = eval_mask(i, part);
    iou += mask_iou(pred, fr.gt_mask);
    RenderOutput out = render(scene_, data_->cameras[fr.camera], fr.t, opts);
    ps_static += region_psnr(out.image, fr.image, fr.gt_mask, true);
    ps_dynamic += region_psnr(out.image, fr.image, fr.gt_mask, false);
    ++nm;
  }
  rep.n_mask_frames = nm;
  if (nm > 0) {
    rep.mask_iou = iou / nm;
    rep.psnr_static_region = ps_static / nm;
    rep.psnr_dynamic_region = ps_dynamic / nm;
  }
  return rep;
}

void Trainer::save_checkpoint(const std::string& path) const {
  json j;
  j["step"] = step_;
  j["config"] = config_to_json(cfg_);
  j["dataset_digest"] = hex64(dataset_digest(*data_));
  j["n_prims"] = scene_.size();
  j["source_indices"] = source_;
  json fl = json::array();
  for (const UncertaintyField& f : fields_)
    fl.push_back({{"ph", f.ph}, {"pw", f.pw}});
  j["fields"] = fl;
  std::string js = j.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write file: " + path);
  out.write(kCkptMagic, sizeof kCkptMagic);
  write_u64(out, js.size());
  out.write(js.data(), static_cast<std::streamsize>(js.size()));

  auto put_d = [&out](double v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
  };
  for (const GaussianPrimitive& g : scene_.prims) {
    for (int a = 0; a < 3; ++a) put_d(g.mu0[a]);
    for (int a = 0; a < 3; ++a) put_d(g.log_scale[a]);
    for (int a = 0; a < 4; ++a) put_d(g.rotation[a]);
    for (int a = 0; a < 3; ++a) put_d(g.color[a]);
    put_d(g.opacity_logit);
    put_d(g.dyn_logit);
    for (int k = 0; k < cfg_.deform_degree; ++k)
      for (int a = 0; a < 3; ++a) put_d(g.deform.dmu[k][a]);
    for (int k = 0; k < cfg_.deform_degree; ++k)
      for (int a = 0; a < 3; ++a) put_d(g.deform.dlog_scale[k][a]);
    for (int k = 0; k < cfg_.deform_degree; ++k)
      for (int a = 0; a < 3; ++a) put_d(g.deform.drot[k][a]);
  }
  if (!m_.empty())
    out.write(reinterpret_cast<const char*>(m_.data()),
              static_cast<std::streamsize>(m_.size() * sizeof(float)));
  if (!v_.empty())
    out.write(reinterpret_cast<const char*>(v_.data()),
              static_cast<std::streamsize>(v_.size() * sizeof(float)));
  for (const UncertaintyField& f : fields_)
    for (double ls : f.log_sigma) put_d(ls);
  if (!out) throw std::runtime_error("write failed: " + path);
}

Trainer Trainer::load_checkpoint(const LoadedDataset& data,
                                 const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingFileError("cannot open file: " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  size_t off = 0;
  auto need = [&](size_t n, const char* what) {
    if (bytes.size() - off < n)
      throw SchemaError(path + ": truncated checkpoint (" + what + ")");
  };
  need(sizeof kCkptMagic, "magic");
  if (std::memcmp(bytes.data(), kCkptMagic, sizeof kCkptMagic) != 0)
    throw SchemaError(path + ": not a checkpoint file");
  off = sizeof kCkptMagic;
  need(8, "header length");
  uint64_t jlen = read_u64(bytes.data() + off);
  off += 8;
  need(jlen, "header");
  json j;
  try {
    j = json::parse(bytes.begin() + off, bytes.begin() + off + jlen);
  } catch (const json::parse_error& e) {
    throw SchemaError(path + ": " + e.what());
  }
  off += jlen;

  Trainer tr;
  tr.data_ = &data;
  if (!j.contains("config"))
    throw SchemaError(path + ": checkpoint header lacks config");
  tr.cfg_ = config_from_json(j.at("config"), path + ".config");
  tr.extractor_ = PatchStatsExtractor(tr.cfg_.uncertainty_patch);
  if (j.value("dataset_digest", std::string()) !=
      hex64(dataset_digest(data)))
    throw SchemaError(path +
                      ": checkpoint was trained against a different dataset");
  tr.step_ = j.value("step", 0ll);
  if (tr.step_ < 0) throw SchemaError(path + ": negative step");

  size_t n = j.value("n_prims", size_t{0});
  tr.source_.clear();
  if (j.contains("source_indices")) {
    if (!j.at("source_indices").is_array() ||
        j.at("source_indices").size() != n)
      throw SchemaError(path + ": source_indices length mismatch");
    for (const auto& e : j.at("source_indices"))
      tr.source_.push_back(e.get<uint32_t>());
  }

  const int deg = tr.cfg_.deform_degree;
  auto take_d = [&]() {
    double v;
    std::memcpy(&v, bytes.data() + off, sizeof v);
    off += sizeof v;
    return v;
  };
  need(n * static_cast<size_t>(moment_stride(deg)) * 8, "scene parameters");
  tr.scene_.prims.resize(n);
  for (size_t i = 0; i < n; ++i) {
    GaussianPrimitive& g = tr.scene_[i];
    g.deform = DeformCoeffs(deg);
    for (int a = 0; a < 3; ++a) g.mu0[a] = take_d();
    for (int a = 0; a < 3; ++a) g.log_scale[a] = take_d();
    for (int a = 0; a < 4; ++a) g.rotation[a] = take_d();
    for (int a = 0; a < 3; ++a) g.color[a] = take_d();
    g.opacity_logit = take_d();
    g.dyn_logit = take_d();
    for (int k = 0; k < deg; ++k)
      for (int a = 0; a < 3; ++a) g.deform.dmu[k][a] = take_d();
    for (int k = 0; k < deg; ++k)
      for (int a = 0; a < 3; ++a) g.deform.dlog_scale[k][a] = take_d();
    for (int k = 0; k < deg; ++k)
      for (int a = 0; a < 3; ++a) g.deform.drot[k][a] = take_d();
  }

  size_t nm = n * static_cast<size_t>(moment_stride(deg));
  need(nm * sizeof(float) * 2, "optimizer moments");
  tr.m_.resize(nm);
  tr.v_.resize(nm);
  if (nm) {
    std::memcpy(tr.m_.data(), bytes.data() + off, nm * sizeof(float));
    off += nm * sizeof(float);
    std::memcpy(tr.v_.data(), bytes.data() + off, nm * sizeof(float));
    off += nm * sizeof(float);
  }

  if (!j.contains("fields") || !j.at("fields").is_array() ||
      j.at("fields").size() != data.frames.size())
    throw SchemaError(path + ": uncertainty field count does not match the "
                             "dataset frame count");
  tr.fields_.clear();
  for (size_t i = 0; i < data.frames.size(); ++i) {
    const json& fd = j.at("fields")[i];
    int ph = fd.value("ph", 0);
    int pw = fd.value("pw", 0);
    const Camera& cam = data.cameras[data.frames[i].camera];
    if (ph != patch_count(cam.height, tr.cfg_.uncertainty_patch) ||
        pw != patch_count(cam.width, tr.cfg_.uncertainty_patch))
      throw SchemaError(path + ": uncertainty field dims do not match the "
                               "dataset");
    UncertaintyField f(ph, pw, tr.cfg_.sigma_init);
    need(f.log_sigma.size() * 8, "uncertainty fields");
    for (double& ls : f.log_sigma) ls = take_d();
    tr.fields_.push_back(std::move(f));
  }
  if (off != bytes.size())
    throw SchemaError(path + ": trailing bytes after checkpoint payload");

  if (tr.source_.size() != n) {
    tr.source_.resize(n);
    for (size_t i = 0; i < n; ++i) tr.source_[i] = static_cast<uint32_t>(i);
  }
  for (size_t i = 0; i < data.frames.size(); ++i)
    if (!data.frames[i].heldout) tr.train_frames_.push_back(i);
  return tr;
}

CheckpointScene load_checkpoint_scene(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingFileError("cannot open file: " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  size_t off = 0;
  auto need = [&](size_t n, const char* what) {
    if (bytes.size() - off < n)
      throw SchemaError(path + ": truncated checkpoint (" + what + ")");
  };
  need(sizeof kCkptMagic, "magic");
  if (std::memcmp(bytes.data(), kCkptMagic, sizeof kCkptMagic) != 0)
    throw SchemaError(path + ": not a checkpoint file");
  off = sizeof kCkptMagic;
  need(8, "header length");
  uint64_t jlen = read_u64(bytes.data() + off);
  off += 8;
  need(jlen, "header");
  json j;
  try {
    j = json::parse(bytes.begin() + off, bytes.begin() + off + jlen);
  } catch (const json::parse_error& e) {
    throw SchemaError(path + ": " + e.what());
  }
  off += jlen;

  CheckpointScene cs;
  if (!j.contains("config"))
    throw SchemaError(path + ": checkpoint header lacks config");
  cs.config = config_from_json(j.at("config"), path + ".config");
  cs.step = j.value("step", 0ll);
  size_t n = j.value("n_prims", size_t{0});
  const int deg = cs.config.deform_degree;
  const size_t stride = static_cast<size_t>(moment_stride(deg));

  auto take_d = [&]() {
    double v;
    std::memcpy(&v, bytes.data() + off, sizeof v);
    off += sizeof v;
    return v;
  };
  need(n * stride * 8, "scene parameters");
  cs.scene.prims.resize(n);
  for (size_t i = 0; i < n; ++i) {
    GaussianPrimitive& g = cs.scene[i];
    g.deform = DeformCoeffs(deg);
    for (int a = 0; a < 3; ++a) g.mu0[a] = take_d();
    for (int a = 0; a < 3; ++a) g.log_scale[a] = take_d();
    for (int a = 0; a < 4; ++a) g.rotation[a] = take_d();
    for (int a = 0; a < 3; ++a) g.color[a] = take_d();
    g.opacity_logit = take_d();
    g.dyn_logit = take_d();
    for (int k = 0; k < deg; ++k)
      for (int a = 0; a < 3; ++a) g.deform.dmu[k][a] = take_d();
    for (int k = 0; k < deg; ++k)
      for (int a = 0; a < 3; ++a) g.deform.dlog_scale[k][a] = take_d();
    for (int k = 0; k < deg; ++k)
      for (int a = 0; a < 3; ++a) g.deform.drot[k][a] = take_d();
  }

  // Moments and uncertainty fields are not materialized here, but the file
  // must still account for them exactly.
  size_t rest = n * stride * sizeof(float) * 2;
  if (j.contains("fields")) {
    if (!j.at("fields").is_array())
      throw SchemaError(path + ": fields must be an array");
    for (const auto& fd : j.at("fields"))
      rest += static_cast<size_t>(fd.value("ph", 0)) * fd.value("pw", 0) * 8;
  }
  if (bytes.size() - off != rest)
    throw SchemaError(path + ": checkpoint payload size mismatch");
  return cs;
}

void write_eval_json(const EvalReport& rep, const std::string& path) {
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
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write file: " + path);
  out << j.dump(1) << "\n";
}

std::vector<AblationRow> run_ablation(const LoadedDataset& data,
                                      const TrainConfig& base,
                                      const std::vector<uint64_t>& seeds,
                                      std::ostream* progress) {
  struct RowDef {
    const char* name;
    bool w, lbi, sch, asg;
  };
  static const RowDef defs[] = {
      {"a", false, false, false, false},  {"b", true, false, false, false},
      {"c", true, true, false, false},    {"d", true, true, true, false},
      {"full", true, true, true, true},
  };
  std::vector<AblationRow> rows;
  for (uint64_t seed : seeds) {
    for (const RowDef& def : defs) {
      TrainConfig cfg = base;
      cfg.seed = seed;
      cfg.use_w = def.w;
      cfg.use_lbi = def.lbi;
      cfg.use_schedule = def.sch;
      cfg.use_asg = def.asg;
      if (progress)
        (*progress) << "ablation " << def.name << " seed " << seed << ": "
                    << cfg.steps << " steps" << std::endl;
      Trainer tr(data, cfg);
      StepStats last;
      while (tr.step() < cfg.steps) last = tr.train_step();
      AblationRow row;
      row.name = def.name;
      row.seed = seed;
      row.final_total = last.loss.total;
      row.eval = tr.evaluate();
      rows.push_back(std::move(row));
      if (progress) {
        const EvalReport& e = rows.back().eval;
        char buf[160];
        snprintf(buf, sizeof buf,
                 "  psnr %.2f  ssim %.4f  acc %.3f  gap %.3f  iou %.3f",
                 e.psnr_heldout, e.ssim_heldout, e.accuracy, e.gap_mass,
                 e.mask_iou);
        (*progress) << buf << std::endl;
      }
    }
  }
  return rows;
}

std::string ablation_table(const std::vector<AblationRow>& rows) {
  std::string out;
  char buf[200];
  snprintf(buf, sizeof buf, "%-6s %-6s %10s %8s %8s %8s %8s %8s\n", "row",
           "seed", "psnr", "ssim", "acc", "gap", "iou", "prims");
  out += buf;
  for (const AblationRow& r : rows) {
    snprintf(buf, sizeof buf,
             "%-6s %-6llu %10.3f %8.4f %8.3f %8.3f %8.3f %8ld\n",
             r.name.c_str(), static_cast<unsigned long long>(r.seed),
             r.eval.psnr_heldout, r.eval.ssim_heldout, r.eval.accuracy,
             r.eval.gap_mass, r.eval.mask_iou, r.eval.n_prims);
    out += buf;
  }
  return out;
}

void write_ablation_json(const std::vector<AblationRow>& rows,
                         const std::string& path) {
  json arr = json::array();
  for (const AblationRow& r : rows) {
    json j;
    j["name"] = r.name;
    j["seed"] = r.seed;
    j["final_total"] = r.final_total;
    j["psnr_heldout"] = r.eval.psnr_heldout;
    j["ssim_heldout"] = r.eval.ssim_heldout;
    j["n_heldout"] = r.eval.n_heldout;
    j["has_labels"] = r.eval.has_labels;
    j["accuracy"] = r.eval.accuracy;
    j["precision"] = r.eval.precision;
    j["recall"] = r.eval.recall;
    j["gap_mass"] = r.eval.gap_mass;
    j["mask_iou"] = r.eval.mask_iou;
    j["psnr_static_region"] = r.eval.psnr_static_region;
    j["psnr_dynamic_region"] = r.eval.psnr_dynamic_region;
    j["n_prims"] = r.eval.n_prims;
    arr.push_back(std::move(j));
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write file: " + path);
  out << arr.dump(1) << "\n";
}

}  // namespace sdd

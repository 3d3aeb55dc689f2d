#include "sdd/synthetic.hpp"

#include <Eigen/Geometry>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "json.hpp"
#include "sdd/errors.hpp"
#include "sdd/rng.hpp"

namespace sdd {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kOrbitSweep = 1.5707963267948966;  // quarter turn

std::string frame_name(int cam, int frame) {
  return "cam" + std::to_string(cam) + "_t" + std::to_string(frame);
}

Camera make_camera(int width, int height, double azimuth_deg) {
  Camera cam;
  cam.width = width;
  cam.height = height;
  double fov = 55.0 * M_PI / 180.0;
  cam.fx = cam.fy = 0.5 * width / std::tan(0.5 * fov);
  cam.cx = 0.5 * width;
  cam.cy = 0.5 * height;
  cam.near = 0.1;
  cam.far = 20.0;

  double az = azimuth_deg * M_PI / 180.0;
  Vec3 pos(4.0 * std::sin(az), 0.0, -4.0 * std::cos(az));
  Vec3 fwd = (-pos).normalized();  // look at the origin
  Vec3 right = Vec3(0, 1, 0).cross(fwd).normalized();
  Vec3 down = right.cross(fwd);
  cam.world_to_cam.block<1, 3>(0, 0) = right.transpose();
  cam.world_to_cam.block<1, 3>(1, 0) = down.transpose();
  cam.world_to_cam.block<1, 3>(2, 0) = fwd.transpose();
  cam.world_to_cam.col(3) = -(cam.world_to_cam.block<3, 3>(0, 0) * pos);
  return cam;
}

// Least-squares degree-2 fit (no constant term) of offsets sampled at the
// frame times; exact for the linear and oscillation families.
void fit_deform(const TruthMotion& motion, const std::vector<double>& times,
                DeformCoeffs& out) {
  for (auto& row : out.dmu) row.setZero();
  if (times.size() < 3 || out.degree < 2) return;
  double s2 = 0, s3 = 0, s4 = 0;
  Vec3 b1 = Vec3::Zero(), b2 = Vec3::Zero();
  for (double t : times) {
    Vec3 y = motion.offset(t);
    s2 += t * t;
    s3 += t * t * t;
    s4 += t * t * t * t;
    b1 += t * y;
    b2 += t * t * y;
  }
  double det = s2 * s4 - s3 * s3;
  if (std::abs(det) < 1e-12) return;
  out.dmu[0] = (s4 * b1 - s3 * b2) / det;
  out.dmu[1] = (s2 * b2 - s3 * b1) / det;
}

}  // namespace

Vec3 TruthMotion::offset(double t) const {
  switch (family) {
    case MotionFamily::kLinear:
      return amplitude * t * axis_u;
    case MotionFamily::kOrbit: {
      double a = kOrbitSweep * t;
      return amplitude * ((std::cos(a) - 1.0) * axis_u + std::sin(a) * axis_v);
    }
    case MotionFamily::kOscillation:
    default:
      return amplitude * 4.0 * t * (1.0 - t) * axis_u;
  }
}

SyntheticSpec load_synth_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MissingFileError("cannot open file: " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw SchemaError(path + ": " + e.what());
  }
  SyntheticSpec s;
  auto get_int = [&](const char* k, int& dst, int lo, int hi) {
    if (!j.contains(k)) return;
    if (!j[k].is_number_integer())
      throw SchemaError(path + "." + k + ": expected an integer");
    long long v = j[k].get<long long>();
    if (v < lo || v > hi)
      throw SchemaError(path + "." + k + ": out of range");
    dst = static_cast<int>(v);
  };
  auto get_num = [&](const char* k, double& dst, double lo) {
    if (!j.contains(k)) return;
    if (!j[k].is_number())
      throw SchemaError(path + "." + k + ": expected a number");
    dst = j[k].get<double>();
    if (!std::isfinite(dst) || dst < lo)
      throw SchemaError(path + "." + k + ": out of range");
  };
  get_int("n_static", s.n_static, 0, 1000000);
  get_int("n_dynamic", s.n_dynamic, 0, 1000000);
  get_int("n_frames", s.n_frames, 1, 100000);
  get_int("n_cameras", s.n_cameras, 1, 1024);
  get_int("width", s.width, 1, 16384);
  get_int("height", s.height, 1, 16384);
  get_num("noise_std", s.noise_std, 0.0);
  get_num("amplitude", s.amplitude, 0.0);
  if (j.contains("seed")) {
    if (!j["seed"].is_number_integer())
      throw SchemaError(path + ".seed: expected an integer");
    s.seed = j["seed"].get<uint64_t>();
  }
  for (auto& [key, val] : j.items()) {
    (void)val;
    static const char* known[] = {"n_static", "n_dynamic", "n_frames",
                                  "n_cameras", "width",    "height",
                                  "noise_std", "amplitude", "seed"};
    bool ok = false;
    for (const char* k : known) ok = ok || key == k;
    if (!ok) throw SchemaError(path + ": unknown key '" + key + "'");
  }
  return s;
}

void save_synth_spec(const SyntheticSpec& s, const std::string& path) {
  json j;
  j["n_static"] = s.n_static;
  j["n_dynamic"] = s.n_dynamic;
  j["n_frames"] = s.n_frames;
  j["n_cameras"] = s.n_cameras;
  j["width"] = s.width;
  j["height"] = s.height;
  j["noise_std"] = s.noise_std;
  j["amplitude"] = s.amplitude;
  j["seed"] = s.seed;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write file: " + path);
  out << j.dump(1) << "\n";
}

SyntheticDataset generate(const SyntheticSpec& spec) {
  SyntheticDataset ds;
  ds.spec = spec;
  Rng rng(spec.seed * 0x9e3779b97f4a7c15ull + 17);

  int n = spec.n_static + spec.n_dynamic;
  ds.truth.prims.reserve(n);
  ds.labels.assign(n, 0);
  ds.motions.assign(n, TruthMotion{});

  // Background slab of static Gaussians behind the action.
  for (int i = 0; i < spec.n_static; ++i) {
    GaussianPrimitive g;
    g.mu0 = Vec3(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0),
                 rng.uniform(0.1, 1.0));
    double base = rng.uniform(0.06, 0.13);
    for (int a = 0; a < 3; ++a)
      g.log_scale[a] = std::log(base * rng.uniform(0.85, 1.2));
    Vec4 q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
    g.rotation = quat_normalized(q);
    for (int c = 0; c < 3; ++c) g.color[c] = rng.uniform(0.15, 0.85);
    g.opacity_logit = logit(rng.uniform(0.55, 0.9));
    g.dyn_logit = -4.0;
    g.deform = DeformCoeffs(2);
    ds.truth.prims.push_back(g);
  }

  // Foreground groups of dynamic Gaussians, one trajectory per group so
  // each moves as a compact object. Group centers are kept apart.
  int n_groups = spec.n_dynamic > 0 ? std::min(3, spec.n_dynamic) : 0;
  std::vector<Vec3> centers;
  for (int c = 0; c < n_groups; ++c) {
    Vec3 cand;
    for (int tries = 0; tries < 200; ++tries) {
      cand = Vec3(rng.uniform(-0.55, 0.55), rng.uniform(-0.55, 0.55),
                  rng.uniform(-0.5, -0.1));
      bool ok = true;
      for (const Vec3& prev : centers)
        if ((cand - prev).head<2>().norm() < 0.75) ok = false;
      if (ok) break;
    }
    centers.push_back(cand);
  }
  std::vector<TruthMotion> group_motion(n_groups);
  for (int c = 0; c < n_groups; ++c) {
    TruthMotion m;
    m.family = static_cast<MotionFamily>(c % 3);
    m.amplitude = spec.amplitude;
    Vec3 dir(rng.normal(), rng.normal(), 0.3 * rng.normal());
    if (dir.norm() < 1e-6) dir = Vec3::UnitX();
    m.axis_u = dir.normalized();
    Vec3 other(rng.normal(), rng.normal(), 0.3 * rng.normal());
    Vec3 v = other - other.dot(m.axis_u) * m.axis_u;
    if (v.norm() < 1e-6) v = m.axis_u.unitOrthogonal();
    m.axis_v = v.normalized();
    group_motion[c] = m;
  }
  for (int i = 0; i < spec.n_dynamic; ++i) {
    int c = n_groups ? i * n_groups / spec.n_dynamic : 0;
    GaussianPrimitive g;
    g.mu0 = centers[c] + Vec3(rng.normal(0, 0.11), rng.normal(0, 0.11),
                              rng.normal(0, 0.06));
    double base = rng.uniform(0.05, 0.09);
    for (int a = 0; a < 3; ++a)
      g.log_scale[a] = std::log(base * rng.uniform(0.9, 1.1));
    Vec4 q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
    g.rotation = quat_normalized(q);
    for (int ch = 0; ch < 3; ++ch) g.color[ch] = rng.uniform(0.3, 0.95);
    g.opacity_logit = logit(rng.uniform(0.85, 0.95));
    g.dyn_logit = 4.0;
    g.deform = DeformCoeffs(2);
    int idx = spec.n_static + i;
    ds.labels[idx] = 1;
    ds.motions[idx] = group_motion[c];
    ds.truth.prims.push_back(g);
  }

  ds.times.resize(spec.n_frames);
  for (int k = 0; k < spec.n_frames; ++k)
    ds.times[k] = spec.n_frames > 1
                      ? static_cast<double>(k) / (spec.n_frames - 1)
                      : 0.0;
  ds.heldout.assign(spec.n_frames, 0);
  if (spec.n_frames >= 8)
    for (int k = 4; k < spec.n_frames; k += 8) ds.heldout[k] = 1;

  // The stored deformation is pre-divided by the truth dynamic coefficient,
  // so a modulated render of the truth scene follows the fitted trajectory
  // itself rather than a w-scaled copy of it.
  for (int i = 0; i < n; ++i) {
    if (!ds.labels[i]) continue;
    fit_deform(ds.motions[i], ds.times, ds.truth[i].deform);
    double w = dyn_coeff(ds.truth[i]);
    for (auto& row : ds.truth[i].deform.dmu) row /= w;
  }

  double arc = spec.n_cameras > 1 ? 24.0 : 0.0;
  for (int c = 0; c < spec.n_cameras; ++c) {
    double az = spec.n_cameras > 1
                    ? -0.5 * arc + arc * c / (spec.n_cameras - 1)
                    : 0.0;
    ds.cameras.push_back(make_camera(spec.width, spec.height, az));
  }

  // Render every frame from a per-time flattened copy: positions displaced
  // along the true trajectories, deformation cleared so nothing is applied
  // twice.
  RenderOptions opts;
  for (int c = 0; c < spec.n_cameras; ++c) {
    for (int k = 0; k < spec.n_frames; ++k) {
      double t = ds.times[k];
      GaussianSet flat = ds.truth;
      for (int i = 0; i < n; ++i) {
        flat[i].deform = DeformCoeffs(ds.truth[i].deform.degree);
        if (ds.labels[i]) flat[i].mu0 += ds.motions[i].offset(t);
      }
      FrameSample fr;
      fr.camera = c;
      fr.t = t;
      fr.heldout = ds.heldout[k] != 0;
      fr.name = frame_name(c, k);
      RenderOutput ro = render(flat, ds.cameras[c], t, opts);
      fr.image = std::move(ro.image);
      if (spec.noise_std > 0.0) {
        Rng noise = Rng::fork(spec.seed, 0x1000 + c * 100000 + k);
        for (double& v : fr.image.data) {
          v += noise.normal(0.0, spec.noise_std);
          if (v < 0.0) v = 0.0;
          if (v > 1.0) v = 1.0;
        }
      }

      std::vector<uint8_t> dyn_subset(ds.labels.begin(), ds.labels.end());
      RenderOutput dyn = render(flat, ds.cameras[c], t, opts, &dyn_subset);
      fr.gt_mask = Mask(spec.height, spec.width);
      for (int y = 0; y < spec.height; ++y)
        for (int x = 0; x < spec.width; ++x) {
          bool on = false;
          for (int ch = 0; ch < 3 && !on; ++ch)
            on = std::abs(dyn.image.at(y, x, ch) - opts.background[ch]) >
                 1.0 / 255.0;
          fr.gt_mask.at(y, x) = on ? 1 : 0;
        }
      fr.has_gt_mask = true;
      ds.frames.push_back(std::move(fr));
    }
  }
  return ds;
}

void write_dataset(const SyntheticDataset& ds, const std::string& dir) {
  fs::create_directories(fs::path(dir) / "frames");
  fs::create_directories(fs::path(dir) / "frames_f32");
  fs::create_directories(fs::path(dir) / "masks");

  for (const auto& fr : ds.frames) {
    save_png(fr.image, (fs::path(dir) / "frames" / (fr.name + ".png")).string());
    save_image_dump(
        fr.image, (fs::path(dir) / "frames_f32" / (fr.name + ".f32")).string());
    save_mask_png(fr.gt_mask,
                  (fs::path(dir) / "masks" / (fr.name + ".png")).string());
  }
  save_camera_list(ds.cameras, (fs::path(dir) / "cameras.txt").string());
  {
    std::ofstream out(fs::path(dir) / "times.txt");
    char buf[64];
    for (double t : ds.times) {
      snprintf(buf, sizeof buf, "%.17g\n", t);
      out << buf;
    }
  }
  {
    std::ofstream out(fs::path(dir) / "labels.txt");
    for (uint8_t v : ds.labels) out << (v ? "1" : "0") << "\n";
  }
  {
    std::ofstream out(fs::path(dir) / "split.txt");
    for (uint8_t v : ds.heldout) out << (v ? "test" : "train") << "\n";
  }
  save_scene(ds.truth, (fs::path(dir) / "truth_scene").string());
  save_synth_spec(ds.spec, (fs::path(dir) / "spec.json").string());
}

LoadedDataset load_dataset(const std::string& dir, bool load_images) {
  LoadedDataset ds;
  if (!fs::exists(dir)) throw MissingFileError("dataset not found: " + dir);
  ds.cameras = load_camera_list((fs::path(dir) / "cameras.txt").string());
  {
    std::ifstream in(fs::path(dir) / "times.txt");
    if (!in)
      throw MissingFileError("cannot open file: " + dir + "/times.txt");
    double t;
    while (in >> t) {
      if (!(t >= 0.0 && t <= 1.0))
        throw SchemaError(dir + "/times.txt: time outside [0, 1]");
      ds.times.push_back(t);
    }
    if (ds.times.empty()) throw SchemaError(dir + "/times.txt: empty");
  }
  ds.heldout.assign(ds.times.size(), 0);
  if (fs::exists(fs::path(dir) / "split.txt")) {
    std::ifstream in(fs::path(dir) / "split.txt");
    std::string tok;
    size_t k = 0;
    while (in >> tok && k < ds.heldout.size()) {
      if (tok != "train" && tok != "test")
        throw SchemaError(dir + "/split.txt: expected train/test tokens");
      ds.heldout[k++] = tok == "test" ? 1 : 0;
    }
  }
  if (fs::exists(fs::path(dir) / "truth_scene")) {
    ds.truth = load_scene((fs::path(dir) / "truth_scene").string());
    ds.has_truth = true;
  }
  if (fs::exists(fs::path(dir) / "labels.txt")) {
    std::ifstream in(fs::path(dir) / "labels.txt");
    std::string tok;
    while (in >> tok) {
      if (tok != "0" && tok != "1")
        throw SchemaError(dir + "/labels.txt: expected 0/1 per line");
      ds.labels.push_back(tok == "1" ? 1 : 0);
    }
    if (ds.has_truth && ds.labels.size() != ds.truth.size())
      throw SchemaError(dir + ": labels.txt length does not match truth_scene");
  }

  for (size_t c = 0; c < ds.cameras.size(); ++c) {
    for (size_t k = 0; k < ds.times.size(); ++k) {
      FrameSample fr;
      fr.camera = static_cast<int>(c);
      fr.t = ds.times[k];
      fr.heldout = ds.heldout[k] != 0;
      fr.name = frame_name(static_cast<int>(c), static_cast<int>(k));
      if (load_images) {
        fs::path f32 = fs::path(dir) / "frames_f32" / (fr.name + ".f32");
        fs::path png = fs::path(dir) / "frames" / (fr.name + ".png");
        if (fs::exists(f32)) {
          fr.image = load_image_dump(f32.string(), ds.cameras[c].height,
                                     ds.cameras[c].width);
        } else if (fs::exists(png)) {
          fr.image = load_png(png.string());
          if (fr.image.height != ds.cameras[c].height ||
              fr.image.width != ds.cameras[c].width)
            throw SchemaError(png.string() + ": size does not match camera");
        } else {
          throw MissingFileError("missing frame image: " + png.string());
        }
        fs::path maskp = fs::path(dir) / "masks" / (fr.name + ".png");
        if (fs::exists(maskp)) {
          fr.gt_mask = load_mask_png(maskp.string());
          fr.has_gt_mask = true;
        }
      }
      ds.frames.push_back(std::move(fr));
    }
  }
  return ds;
}

size_t frame_index(const LoadedDataset& ds, int camera, int frame) {
  return static_cast<size_t>(camera) * ds.times.size() + frame;
}

}  // namespace sdd

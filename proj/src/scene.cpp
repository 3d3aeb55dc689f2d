#include "sdd/scene.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "sdd/errors.hpp"

namespace sdd {

using nlohmann::json;

namespace {

json parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MissingFileError("cannot open file: " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw SchemaError(path + ": " + e.what());
  }
}

double require_number(const json& j, const std::string& key,
                      const std::string& ctx) {
  if (!j.contains(key)) throw SchemaError(ctx + ": missing field '" + key + "'");
  const json& v = j.at(key);
  if (!v.is_number()) throw SchemaError(ctx + "." + key + ": expected a number");
  double d = v.get<double>();
  if (!std::isfinite(d))
    throw SchemaError(ctx + "." + key + ": non-finite value");
  return d;
}

void read_vec(const json& j, const std::string& key, int n, double* out,
              const std::string& ctx) {
  if (!j.contains(key)) throw SchemaError(ctx + ": missing field '" + key + "'");
  const json& v = j.at(key);
  if (!v.is_array() || static_cast<int>(v.size()) != n)
    throw SchemaError(ctx + "." + key + ": expected an array of " +
                      std::to_string(n) + " numbers");
  for (int i = 0; i < n; ++i) {
    if (!v[i].is_number())
      throw SchemaError(ctx + "." + key + ": expected a number at index " +
                        std::to_string(i));
    out[i] = v[i].get<double>();
    if (!std::isfinite(out[i]))
      throw SchemaError(ctx + "." + key + ": non-finite value at index " +
                        std::to_string(i));
  }
}

json vec_to_json(const double* v, int n) {
  json a = json::array();
  for (int i = 0; i < n; ++i) a.push_back(v[i]);
  return a;
}

constexpr const char* kSceneVersion = "sdd-scene-v1";

}  // namespace

double opacity(const GaussianPrimitive& g) { return sigmoid(g.opacity_logit); }

double dyn_coeff(const GaussianPrimitive& g) { return sigmoid(g.dyn_logit); }

Mat3 covariance_matrix(const Vec3& log_scale, const Vec4& rotation) {
  Mat3 r = quat_to_rotmat(quat_normalized(rotation));
  Vec3 var = (2.0 * log_scale).array().exp();
  return r * var.asDiagonal() * r.transpose();
}

Mat3 covariance_matrix(const GaussianPrimitive& g) {
  return covariance_matrix(g.log_scale, g.rotation);
}

GaussianSet init_random_scene(int n, const Vec3& box_lo, const Vec3& box_hi,
                              int deform_degree, Rng& rng) {
  GaussianSet set;
  set.prims.reserve(n);
  double extent = (box_hi - box_lo).maxCoeff();
  double ls = std::log(0.05 * extent);
  for (int i = 0; i < n; ++i) {
    GaussianPrimitive g;
    for (int a = 0; a < 3; ++a) g.mu0[a] = rng.uniform(box_lo[a], box_hi[a]);
    g.log_scale = Vec3(ls, ls, ls);
    g.rotation = Vec4(1, 0, 0, 0);
    g.color = Vec3(0.5, 0.5, 0.5);
    g.opacity_logit = logit(0.1);
    g.dyn_logit = 0.0;
    g.deform = DeformCoeffs(deform_degree);
    set.prims.push_back(g);
  }
  return set;
}

static json deform_to_json(const DeformCoeffs& d) {
  json j;
  j["degree"] = d.degree;
  json dmu = json::array(), dls = json::array(), drot = json::array();
  for (int k = 0; k < d.degree; ++k) {
    dmu.push_back(vec_to_json(d.dmu[k].data(), 3));
    dls.push_back(vec_to_json(d.dlog_scale[k].data(), 3));
    drot.push_back(vec_to_json(d.drot[k].data(), 3));
  }
  j["dmu"] = dmu;
  j["dlog_scale"] = dls;
  j["drot"] = drot;
  return j;
}

static DeformCoeffs deform_from_json(const json& j, const std::string& ctx) {
  double deg = require_number(j, "degree", ctx);
  int k = static_cast<int>(deg);
  if (k < 1 || k > 16 || deg != k)
    throw SchemaError(ctx + ".degree: expected an integer in [1, 16]");
  DeformCoeffs d(k);
  const char* names[3] = {"dmu", "dlog_scale", "drot"};
  std::vector<Vec3>* rows[3] = {&d.dmu, &d.dlog_scale, &d.drot};
  for (int f = 0; f < 3; ++f) {
    if (!j.contains(names[f]))
      throw SchemaError(ctx + ": missing field '" + std::string(names[f]) + "'");
    const json& arr = j.at(names[f]);
    if (!arr.is_array() || static_cast<int>(arr.size()) != k)
      throw SchemaError(ctx + "." + names[f] + ": expected " +
                        std::to_string(k) + " rows");
    for (int r = 0; r < k; ++r) {
      json row_holder;
      row_holder["row"] = arr[r];
      read_vec(row_holder, "row", 3, (*rows[f])[r].data(),
               ctx + "." + names[f] + "[" + std::to_string(r) + "]");
    }
  }
  return d;
}

void save_scene(const GaussianSet& set, const std::string& path) {
  json j;
  j["version"] = kSceneVersion;
  json prims = json::array();
  for (const auto& g : set.prims) {
    json p;
    p["mu0"] = vec_to_json(g.mu0.data(), 3);
    p["log_scale"] = vec_to_json(g.log_scale.data(), 3);
    p["rotation"] = vec_to_json(g.rotation.data(), 4);
    p["color"] = vec_to_json(g.color.data(), 3);
    p["opacity_logit"] = g.opacity_logit;
    p["dyn_logit"] = g.dyn_logit;
    p["deform"] = deform_to_json(g.deform);
    prims.push_back(std::move(p));
  }
  j["primitives"] = std::move(prims);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write file: " + path);
  out << j.dump(1) << "\n";
}

GaussianSet load_scene(const std::string& path,
                       std::vector<std::string>* warnings) {
  json j = parse_file(path);
  if (!j.is_object() || !j.contains("version") || !j["version"].is_string())
    throw SchemaError(path + ": missing scene version tag");
  if (j["version"].get<std::string>() != kSceneVersion)
    throw SchemaError(path + ": unsupported scene version '" +
                      j["version"].get<std::string>() + "', expected '" +
                      kSceneVersion + "'");
  if (!j.contains("primitives") || !j["primitives"].is_array())
    throw SchemaError(path + ": missing 'primitives' array");
  GaussianSet set;
  const json& prims = j["primitives"];
  set.prims.reserve(prims.size());
  for (size_t i = 0; i < prims.size(); ++i) {
    std::string ctx = path + ": primitive " + std::to_string(i);
    const json& p = prims[i];
    if (!p.is_object()) throw SchemaError(ctx + ": expected an object");
    GaussianPrimitive g;
    read_vec(p, "mu0", 3, g.mu0.data(), ctx);
    read_vec(p, "log_scale", 3, g.log_scale.data(), ctx);
    read_vec(p, "rotation", 4, g.rotation.data(), ctx);
    read_vec(p, "color", 3, g.color.data(), ctx);
    for (int c = 0; c < 3; ++c)
      if (g.color[c] < 0.0 || g.color[c] > 1.0)
        throw SchemaError(ctx + ".color: component outside [0, 1]");
    g.opacity_logit = require_number(p, "opacity_logit", ctx);
    g.dyn_logit = require_number(p, "dyn_logit", ctx);
    if (!p.contains("deform"))
      throw SchemaError(ctx + ": missing field 'deform'");
    g.deform = deform_from_json(p.at("deform"), ctx + ".deform");
    double qn = g.rotation.norm();
    if (qn == 0.0)
      throw SchemaError(ctx + ".rotation: zero quaternion");
    if (std::abs(qn - 1.0) > 1e-9) {
      g.rotation /= qn;
      if (warnings)
        warnings->push_back(ctx + ".rotation: renormalized (norm was " +
                            std::to_string(qn) + ")");
    }
    set.prims.push_back(std::move(g));
  }
  return set;
}

static json camera_to_json_obj(const Camera& cam) {
  json j;
  j["width"] = cam.width;
  j["height"] = cam.height;
  j["fx"] = cam.fx;
  j["fy"] = cam.fy;
  j["cx"] = cam.cx;
  j["cy"] = cam.cy;
  double w2c[12];
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 4; ++c) w2c[r * 4 + c] = cam.world_to_cam(r, c);
  j["world_to_cam"] = vec_to_json(w2c, 12);
  j["near"] = cam.near;
  j["far"] = cam.far;
  return j;
}

static Camera camera_from_json_obj(const json& j, const std::string& ctx) {
  if (!j.is_object()) throw SchemaError(ctx + ": expected an object");
  Camera cam;
  double w = require_number(j, "width", ctx);
  double h = require_number(j, "height", ctx);
  cam.width = static_cast<int>(w);
  cam.height = static_cast<int>(h);
  if (cam.width <= 0 || cam.height <= 0 || w != cam.width || h != cam.height)
    throw SchemaError(ctx + ": width/height must be positive integers");
  cam.fx = require_number(j, "fx", ctx);
  cam.fy = require_number(j, "fy", ctx);
  if (cam.fx <= 0 || cam.fy <= 0)
    throw SchemaError(ctx + ": focal lengths must be positive");
  cam.cx = require_number(j, "cx", ctx);
  cam.cy = require_number(j, "cy", ctx);
  double w2c[12];
  read_vec(j, "world_to_cam", 12, w2c, ctx);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 4; ++c) cam.world_to_cam(r, c) = w2c[r * 4 + c];
  Mat3 rt_r = cam.rot().transpose() * cam.rot();
  if ((rt_r - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-6)
    throw SchemaError(ctx + ".world_to_cam: rotation block is not orthonormal");
  cam.near = require_number(j, "near", ctx);
  cam.far = require_number(j, "far", ctx);
  if (!(cam.near > 0.0) || !(cam.far > cam.near))
    throw SchemaError(ctx + ": need 0 < near < far");
  return cam;
}

std::string camera_to_json(const Camera& cam) {
  return camera_to_json_obj(cam).dump();
}

Camera camera_from_json(const std::string& json_text,
                        const std::string& context) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw SchemaError(context + ": " + e.what());
  }
  return camera_from_json_obj(j, context);
}

void save_camera(const Camera& cam, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write file: " + path);
  out << camera_to_json_obj(cam).dump(1) << "\n";
}

Camera load_camera(const std::string& path) {
  json j = parse_file(path);
  return camera_from_json_obj(j, path);
}

void save_camera_list(const std::vector<Camera>& cams,
                      const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write file: " + path);
  for (const auto& cam : cams) out << camera_to_json_obj(cam).dump() << "\n";
}

std::vector<Camera> load_camera_list(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MissingFileError("cannot open file: " + path);
  std::vector<Camera> cams;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    cams.push_back(
        camera_from_json(line, path + ":" + std::to_string(line_no)));
  }
  if (cams.empty()) throw SchemaError(path + ": no camera records");
  return cams;
}

}  // namespace sdd

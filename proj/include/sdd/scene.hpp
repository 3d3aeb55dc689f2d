#pragma once

#include <string>
#include <vector>

#include "sdd/image.hpp"
#include "sdd/math.hpp"
#include "sdd/rng.hpp"

namespace sdd {

// Per-degree coefficients of a polynomial in t with no constant term:
// delta(t) = sum_{k=1..degree} row[k-1] * t^k, one 3-vector row per degree,
// separately for position, log-scale, and rotation-vector deltas.
struct DeformCoeffs {
  int degree = 2;
  std::vector<Vec3> dmu;        // degree rows
  std::vector<Vec3> dlog_scale;  // degree rows
  std::vector<Vec3> drot;        // degree rows

  explicit DeformCoeffs(int k = 2)
      : degree(k),
        dmu(k, Vec3::Zero()),
        dlog_scale(k, Vec3::Zero()),
        drot(k, Vec3::Zero()) {}
};

struct GaussianPrimitive {
  Vec3 mu0 = Vec3::Zero();           // canonical position
  Vec3 log_scale = Vec3::Zero();      // per-axis log standard deviation
  Vec4 rotation = Vec4(1, 0, 0, 0);   // unit quaternion (w, x, y, z)
  Vec3 color = Vec3(0.5, 0.5, 0.5);   // RGB in [0, 1]
  double opacity_logit = 0.0;
  double dyn_logit = 0.0;             // sigmoid gives the dynamic coefficient
  DeformCoeffs deform;
};

struct GaussianSet {
  std::vector<GaussianPrimitive> prims;

  size_t size() const { return prims.size(); }
  GaussianPrimitive& operator[](size_t i) { return prims[i]; }
  const GaussianPrimitive& operator[](size_t i) const { return prims[i]; }
};

struct Camera {
  int width = 0;
  int height = 0;
  double fx = 0, fy = 0, cx = 0, cy = 0;
  Mat34 world_to_cam = Mat34::Zero();  // [R | t], row-major on disk
  double near = 0.01;
  double far = 100.0;

  Mat3 rot() const { return world_to_cam.block<3, 3>(0, 0); }
  Vec3 trans() const { return world_to_cam.col(3); }
};

struct FrameSample {
  int camera = 0;
  double t = 0.0;  // normalized time in [0, 1]
  Image image;
  Mask gt_mask;
  bool has_gt_mask = false;
  bool heldout = false;
  std::string name;
};

double opacity(const GaussianPrimitive& g);

// Dynamic-perception coefficient w = sigmoid(dyn_logit), in (0, 1).
double dyn_coeff(const GaussianPrimitive& g);

// World-space covariance R * diag(exp(2*log_scale)) * R^T for an arbitrary
// (log_scale, rotation) pair; rotation is normalized before use.
Mat3 covariance_matrix(const Vec3& log_scale, const Vec4& rotation);
Mat3 covariance_matrix(const GaussianPrimitive& g);

// Uniform means inside the box, isotropic scales at 5% of the largest box
// extent, identity rotations, mid-gray color, opacity 0.1, dyn_logit 0,
// zero deformation.
GaussianSet init_random_scene(int n, const Vec3& box_lo, const Vec3& box_hi,
                              int deform_degree, Rng& rng);

// Scene files are versioned JSON documents. Loading validates structure and
// value domains, names the offending record and field on failure, rejects
// non-finite values, and renormalizes non-unit quaternions (appending a note
// to warnings when provided).
void save_scene(const GaussianSet& set, const std::string& path);
GaussianSet load_scene(const std::string& path,
                       std::vector<std::string>* warnings = nullptr);

std::string camera_to_json(const Camera& cam);
Camera camera_from_json(const std::string& json_text,
                        const std::string& context);
void save_camera(const Camera& cam, const std::string& path);
Camera load_camera(const std::string& path);

// One camera JSON object per line.
void save_camera_list(const std::vector<Camera>& cams, const std::string& path);
std::vector<Camera> load_camera_list(const std::string& path);

}  // namespace sdd

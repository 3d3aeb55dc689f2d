#pragma once

#include <vector>

#include "sdd/math.hpp"
#include "sdd/scene.hpp"

namespace sdd {

// Gradient of a scalar loss with respect to one primitive's parameters.
// Layout mirrors GaussianPrimitive; rotation gradients are with respect to
// the raw stored quaternion (normalization is part of the forward map).
struct PrimGrad {
  Vec3 mu0 = Vec3::Zero();
  Vec3 log_scale = Vec3::Zero();
  Vec4 rotation = Vec4::Zero();
  Vec3 color = Vec3::Zero();
  double opacity_logit = 0.0;
  double dyn_logit = 0.0;
  std::vector<Vec3> dmu;
  std::vector<Vec3> dlog_scale;
  std::vector<Vec3> drot;

  explicit PrimGrad(int degree = 0)
      : dmu(degree, Vec3::Zero()),
        dlog_scale(degree, Vec3::Zero()),
        drot(degree, Vec3::Zero()) {}

  void add(const PrimGrad& o);
  void scale(double s);
  bool finite() const;
};

struct GradientSet {
  std::vector<PrimGrad> prims;

  static GradientSet zeros_like(const GaussianSet& set);
  void add(const GradientSet& o);
  void scale(double s);
  size_t size() const { return prims.size(); }
  PrimGrad& operator[](size_t i) { return prims[i]; }
  const PrimGrad& operator[](size_t i) const { return prims[i]; }
};

}  // namespace sdd

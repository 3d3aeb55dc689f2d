#pragma once

#include "sdd/gradients.hpp"
#include "sdd/math.hpp"
#include "sdd/scene.hpp"

namespace sdd {

// Raw polynomial deltas at time t, before any modulation.
struct DeformDeltas {
  Vec3 dmu = Vec3::Zero();
  Vec3 dlog_scale = Vec3::Zero();
  Vec3 drot = Vec3::Zero();
};

DeformDeltas eval_deltas(const DeformCoeffs& c, double t);

// Deformed state of one Gaussian at time t under modulation weight w:
//   mu       = mu0 + w * dmu(t)
//   log_scale = log_scale0 + w * dlog_scale(t)
//   rot_q    = normalize(q0 * quat_from_rotvec(w * drot(t)))
// The covariance delta is realized in scale/rotation parameter space, which
// keeps the deformed covariance positive definite for any coefficients.
// Intermediates are kept for the reverse pass.
struct DeformedGaussian {
  Vec3 mu = Vec3::Zero();
  Vec3 log_scale = Vec3::Zero();
  Vec4 rot_q = Vec4(1, 0, 0, 0);

  DeformDeltas deltas;
  Vec3 rotvec = Vec3::Zero();  // w * deltas.drot
  Vec4 e = Vec4(1, 0, 0, 0);   // quat_from_rotvec(rotvec)
  Vec4 q_comp = Vec4(1, 0, 0, 0);  // q0 * e, before normalization
};

DeformedGaussian deform_at(const GaussianPrimitive& g, double t, double w);

// Accumulates parameter gradients given cotangents of the deformed state.
// d_rot_q is with respect to the normalized composed quaternion. When
// w_is_learned is false (modulation disabled), nothing flows to dyn_logit.
void deform_backward(const GaussianPrimitive& g, const DeformedGaussian& fwd,
                     double t, double w, bool w_is_learned, const Vec3& d_mu,
                     const Vec3& d_log_scale, const Vec4& d_rot_q,
                     PrimGrad& out);

}  // namespace sdd

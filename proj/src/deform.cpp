#include "sdd/deform.hpp"

#include <cmath>

namespace sdd {

namespace {

// a * b = quat_right_mat(b) * a, as a matrix acting on a.
Eigen::Matrix4d quat_right_mat(const Vec4& b) {
  Eigen::Matrix4d m;
  m << b[0], -b[1], -b[2], -b[3],
       b[1],  b[0],  b[3], -b[2],
       b[2], -b[3],  b[0],  b[1],
       b[3],  b[2], -b[1],  b[0];
  return m;
}

// a * b = quat_left_mat(a) * b, as a matrix acting on b.
Eigen::Matrix4d quat_left_mat(const Vec4& a) {
  Eigen::Matrix4d m;
  m << a[0], -a[1], -a[2], -a[3],
       a[1],  a[0], -a[3],  a[2],
       a[2],  a[3],  a[0], -a[1],
       a[3], -a[2],  a[1],  a[0];
  return m;
}

// Jacobian of quat_from_rotvec at r (4x3), sharing the series branch used
// in the forward map so values and derivatives agree near zero.
Eigen::Matrix<double, 4, 3> rotvec_quat_jacobian(const Vec3& r) {
  double theta2 = r.squaredNorm();
  double theta = std::sqrt(theta2);
  double k, g;  // e_xyz = k * r; g = k'(theta)/theta
  if (theta < 1e-4) {
    k = 0.5 - theta2 / 48.0;
    g = -1.0 / 24.0 + theta2 / 960.0;
  } else {
    double half = 0.5 * theta;
    k = std::sin(half) / theta;
    double kprime = (0.5 * theta * std::cos(half) - std::sin(half)) / theta2;
    g = kprime / theta;
  }
  Eigen::Matrix<double, 4, 3> jac;
  jac.row(0) = (-0.5 * k) * r.transpose();
  jac.block<3, 3>(1, 0) = k * Mat3::Identity() + g * (r * r.transpose());
  return jac;
}

}  // namespace

void PrimGrad::add(const PrimGrad& o) {
  mu0 += o.mu0;
  log_scale += o.log_scale;
  rotation += o.rotation;
  color += o.color;
  opacity_logit += o.opacity_logit;
  dyn_logit += o.dyn_logit;
  for (size_t k = 0; k < dmu.size(); ++k) {
    dmu[k] += o.dmu[k];
    dlog_scale[k] += o.dlog_scale[k];
    drot[k] += o.drot[k];
  }
}

void PrimGrad::scale(double s) {
  mu0 *= s;
  log_scale *= s;
  rotation *= s;
  color *= s;
  opacity_logit *= s;
  dyn_logit *= s;
  for (size_t k = 0; k < dmu.size(); ++k) {
    dmu[k] *= s;
    dlog_scale[k] *= s;
    drot[k] *= s;
  }
}

bool PrimGrad::finite() const {
  bool ok = mu0.allFinite() && log_scale.allFinite() && rotation.allFinite() &&
            color.allFinite() && std::isfinite(opacity_logit) &&
            std::isfinite(dyn_logit);
  for (size_t k = 0; ok && k < dmu.size(); ++k)
    ok = dmu[k].allFinite() && dlog_scale[k].allFinite() && drot[k].allFinite();
  return ok;
}

GradientSet GradientSet::zeros_like(const GaussianSet& set) {
  GradientSet g;
  g.prims.reserve(set.size());
  for (const auto& p : set.prims) g.prims.emplace_back(p.deform.degree);
  return g;
}

void GradientSet::add(const GradientSet& o) {
  for (size_t i = 0; i < prims.size(); ++i) prims[i].add(o.prims[i]);
}

void GradientSet::scale(double s) {
  for (auto& p : prims) p.scale(s);
}

DeformDeltas eval_deltas(const DeformCoeffs& c, double t) {
  DeformDeltas d;
  double tk = 1.0;
  for (int k = 0; k < c.degree; ++k) {
    tk *= t;
    d.dmu += c.dmu[k] * tk;
    d.dlog_scale += c.dlog_scale[k] * tk;
    d.drot += c.drot[k] * tk;
  }
  return d;
}

DeformedGaussian deform_at(const GaussianPrimitive& g, double t, double w) {
  DeformedGaussian out;
  out.deltas = eval_deltas(g.deform, t);
  out.mu = g.mu0 + w * out.deltas.dmu;
  out.log_scale = g.log_scale + w * out.deltas.dlog_scale;
  out.rotvec = w * out.deltas.drot;
  out.e = quat_from_rotvec(out.rotvec);
  out.q_comp = quat_mul(g.rotation, out.e);
  out.rot_q = quat_normalized(out.q_comp);
  return out;
}

void deform_backward(const GaussianPrimitive& g, const DeformedGaussian& fwd,
                     double t, double w, bool w_is_learned, const Vec3& d_mu,
                     const Vec3& d_log_scale, const Vec4& d_rot_q,
                     PrimGrad& out) {
  out.mu0 += d_mu;
  out.log_scale += d_log_scale;

  // Through normalization: q_n = q_c / |q_c|.
  double n = fwd.q_comp.norm();
  Vec4 d_q_comp =
      (d_rot_q - fwd.rot_q * fwd.rot_q.dot(d_rot_q)) / n;

  // q_comp = q0 * e.
  Vec4 d_q0 = quat_right_mat(fwd.e).transpose() * d_q_comp;
  Vec4 d_e = quat_left_mat(g.rotation).transpose() * d_q_comp;
  out.rotation += d_q0;

  Vec3 d_rotvec = rotvec_quat_jacobian(fwd.rotvec).transpose() * d_e;

  double d_w = 0.0;
  d_w += fwd.deltas.dmu.dot(d_mu);
  d_w += fwd.deltas.dlog_scale.dot(d_log_scale);
  d_w += fwd.deltas.drot.dot(d_rotvec);

  double tk = 1.0;
  for (int k = 0; k < g.deform.degree; ++k) {
    tk *= t;
    out.dmu[k] += (w * tk) * d_mu;
    out.dlog_scale[k] += (w * tk) * d_log_scale;
    out.drot[k] += (w * tk) * d_rotvec;
  }

  if (w_is_learned) out.dyn_logit += d_w * w * (1.0 - w);
}

}  // namespace sdd

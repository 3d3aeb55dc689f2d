#include "sdd/render.hpp"

#include <algorithm>
#include <cmath>

#include "sdd/parallel.hpp"

namespace sdd {

namespace {

constexpr double kContribMin = 1.0 / 255.0;
constexpr double kContribMax = 0.99;
constexpr double kTransmitStop = 1e-4;
constexpr double kDilation = 0.3;
constexpr double kViewportPad = 0.15;  // fraction of each extent per side
constexpr size_t kRowBlock = 16;

// Screen-space gradient accumulators for one projected Gaussian.
struct ScreenGrad {
  Vec2 mean2d = Vec2::Zero();
  Mat2 q = Mat2::Zero();  // w.r.t. the inverse covariance
  Vec3 color = Vec3::Zero();
  double alpha = 0.0;

  void add(const ScreenGrad& o) {
    mean2d += o.mean2d;
    q += o.q;
    color += o.color;
    alpha += o.alpha;
  }
};

// d(rotation matrix)/d(quaternion component), quaternion (w, x, y, z).
Mat3 rotmat_partial(const Vec4& q, int comp) {
  double w = q[0], x = q[1], y = q[2], z = q[3];
  Mat3 m;
  switch (comp) {
    case 0:
      m << 0, -2 * z, 2 * y, 2 * z, 0, -2 * x, -2 * y, 2 * x, 0;
      break;
    case 1:
      m << 0, 2 * y, 2 * z, 2 * y, -4 * x, -2 * w, 2 * z, 2 * w, -4 * x;
      break;
    case 2:
      m << -4 * y, 2 * x, 2 * w, 2 * x, 0, 2 * z, -2 * w, 2 * z, -4 * y;
      break;
    default:
      m << -4 * z, -2 * w, 2 * x, 2 * w, -4 * z, 2 * y, 2 * x, 2 * y, 0;
      break;
  }
  return m;
}

}  // namespace

Projected2D project(const Camera& cam, const DeformedGaussian& dg) {
  Projected2D p;
  Mat3 rot = cam.rot();
  p.x_cam = rot * dg.mu + cam.trans();
  double z = p.x_cam[2];
  if (!(z > cam.near && z < cam.far)) return p;

  double inv_z = 1.0 / z;
  p.mean2d[0] = cam.fx * p.x_cam[0] * inv_z + cam.cx;
  p.mean2d[1] = cam.fy * p.x_cam[1] * inv_z + cam.cy;
  double pad_x = kViewportPad * cam.width;
  double pad_y = kViewportPad * cam.height;
  if (p.mean2d[0] < -pad_x || p.mean2d[0] > cam.width + pad_x ||
      p.mean2d[1] < -pad_y || p.mean2d[1] > cam.height + pad_y)
    return p;

  p.jac.setZero();
  p.jac(0, 0) = cam.fx * inv_z;
  p.jac(0, 2) = -cam.fx * p.x_cam[0] * inv_z * inv_z;
  p.jac(1, 1) = cam.fy * inv_z;
  p.jac(1, 2) = -cam.fy * p.x_cam[1] * inv_z * inv_z;

  Mat3 sigma = covariance_matrix(dg.log_scale, dg.rot_q);
  p.cam_cov = rot * sigma * rot.transpose();
  p.cov2d = p.jac * p.cam_cov * p.jac.transpose();
  p.cov2d(0, 0) += kDilation;
  p.cov2d(1, 1) += kDilation;

  p.depth = z;
  p.dg = dg;
  p.valid = true;
  return p;
}

RenderOutput render(const GaussianSet& set, const Camera& cam, double t,
                    const RenderOptions& opts,
                    const std::vector<uint8_t>* subset) {
  const int W = cam.width, H = cam.height;
  RenderOutput out;
  out.image = Image(H, W);
  out.transmittance.assign(static_cast<size_t>(H) * W, 1.0);
  out.offsets.assign(static_cast<size_t>(H) * W + 1, 0);

  out.projected.reserve(set.size());
  for (size_t i = 0; i < set.size(); ++i) {
    if (subset && !(*subset)[i]) continue;
    const GaussianPrimitive& g = set[i];
    double a = opacity(g);
    if (a < kContribMin) continue;  // below the skip threshold everywhere
    double w = opts.modulate_w ? dyn_coeff(g) : 1.0;
    Projected2D p = project(cam, deform_at(g, t, w));
    if (!p.valid) continue;
    p.index = static_cast<uint32_t>(i);
    p.alpha = a;
    p.w = w;

    double det = p.cov2d(0, 0) * p.cov2d(1, 1) - p.cov2d(0, 1) * p.cov2d(1, 0);
    p.inv_cov(0, 0) = p.cov2d(1, 1) / det;
    p.inv_cov(1, 1) = p.cov2d(0, 0) / det;
    p.inv_cov(0, 1) = p.inv_cov(1, 0) = -p.cov2d(0, 1) / det;

    // Pixels outside the Mahalanobis level set where alpha * p drops below
    // the skip threshold can never contribute, so the raster extent is the
    // tight axis-aligned box of that ellipse.
    double q_max = 2.0 * std::log(255.0 * a);
    double hx = std::sqrt(q_max * p.cov2d(0, 0));
    double hy = std::sqrt(q_max * p.cov2d(1, 1));
    p.x0 = std::max(0, static_cast<int>(std::ceil(p.mean2d[0] - hx)));
    p.x1 = std::min(W, static_cast<int>(std::floor(p.mean2d[0] + hx)) + 1);
    p.y0 = std::max(0, static_cast<int>(std::ceil(p.mean2d[1] - hy)));
    p.y1 = std::min(H, static_cast<int>(std::floor(p.mean2d[1] + hy)) + 1);
    if (p.x0 >= p.x1 || p.y0 >= p.y1) continue;
    out.projected.push_back(std::move(p));
  }

  std::sort(out.projected.begin(), out.projected.end(),
            [](const Projected2D& a, const Projected2D& b) {
              if (a.depth != b.depth) return a.depth < b.depth;
              return a.index < b.index;
            });

  // Per-row candidate lists, preserving global blend order.
  std::vector<std::vector<uint32_t>> rows(H);
  for (uint32_t gi = 0; gi < out.projected.size(); ++gi) {
    const Projected2D& p = out.projected[gi];
    for (int y = p.y0; y < p.y1; ++y) rows[y].push_back(gi);
  }

  size_t n_blocks = (static_cast<size_t>(H) + kRowBlock - 1) / kRowBlock;
  std::vector<std::vector<ContribEntry>> block_contribs(n_blocks);
  std::vector<uint32_t> counts(static_cast<size_t>(H) * W, 0);

  parallel_for_blocked(0, H, kRowBlock, [&](size_t row_lo, size_t row_hi) {
    std::vector<ContribEntry>& local = block_contribs[row_lo / kRowBlock];
    for (size_t y = row_lo; y < row_hi; ++y) {
      const std::vector<uint32_t>& cand = rows[y];
      for (int x = 0; x < W; ++x) {
        size_t pix = y * W + x;
        double T = 1.0;
        Vec3 color = Vec3::Zero();
        uint32_t n_here = 0;
        for (uint32_t gi : cand) {
          const Projected2D& p = out.projected[gi];
          if (x < p.x0 || x >= p.x1) continue;
          double dx = x - p.mean2d[0];
          double dy = static_cast<double>(y) - p.mean2d[1];
          double m = p.inv_cov(0, 0) * dx * dx + p.inv_cov(1, 1) * dy * dy +
                     2.0 * p.inv_cov(0, 1) * dx * dy;
          double a = p.alpha * std::exp(-0.5 * m);
          if (a > kContribMax) a = kContribMax;
          if (a < kContribMin) continue;
          double t_next = T * (1.0 - a);
          if (t_next < kTransmitStop) break;
          color += (a * T) * set[p.index].color;
          local.push_back({gi, a, a * T});
          ++n_here;
          T = t_next;
        }
        color += T * opts.background;
        out.image.at(static_cast<int>(y), x, 0) = color[0];
        out.image.at(static_cast<int>(y), x, 1) = color[1];
        out.image.at(static_cast<int>(y), x, 2) = color[2];
        out.transmittance[pix] = T;
        counts[pix] = n_here;
      }
    }
  });

  for (size_t pix = 0; pix < counts.size(); ++pix)
    out.offsets[pix + 1] = out.offsets[pix] + counts[pix];
  out.contribs.resize(out.offsets.back());
  size_t write = 0;
  for (size_t b = 0; b < n_blocks; ++b) {
    std::copy(block_contribs[b].begin(), block_contribs[b].end(),
              out.contribs.begin() + write);
    write += block_contribs[b].size();
  }
  return out;
}

void render_backward(const GaussianSet& set, const Camera& cam, double t,
                     const RenderOptions& opts, const RenderOutput& out,
                     const Image& d_image, GradientSet& grads) {
  const int W = cam.width, H = cam.height;
  const size_t n_proj = out.projected.size();
  if (n_proj == 0) return;

  size_t n_blocks = (static_cast<size_t>(H) + kRowBlock - 1) / kRowBlock;
  std::vector<std::vector<ScreenGrad>> block_acc(
      n_blocks, std::vector<ScreenGrad>(n_proj));

  parallel_for_blocked(0, H, kRowBlock, [&](size_t row_lo, size_t row_hi) {
    std::vector<ScreenGrad>& acc = block_acc[row_lo / kRowBlock];
    std::vector<double> trans;  // transmittance before each contribution
    for (size_t y = row_lo; y < row_hi; ++y) {
      for (int x = 0; x < W; ++x) {
        size_t pix = y * W + x;
        uint32_t lo = out.offsets[pix], hi = out.offsets[pix + 1];
        if (lo == hi) continue;
        Vec3 dc(d_image.at(static_cast<int>(y), x, 0),
                d_image.at(static_cast<int>(y), x, 1),
                d_image.at(static_cast<int>(y), x, 2));

        trans.clear();
        double T = 1.0;
        for (uint32_t k = lo; k < hi; ++k) {
          trans.push_back(T);
          T *= 1.0 - out.contribs[k].alpha;
        }
        // Suffix of downstream weighted colors, plus the background term.
        double after = T * dc.dot(opts.background);
        for (uint32_t k = hi; k-- > lo;) {
          const ContribEntry& ce = out.contribs[k];
          const Projected2D& p = out.projected[ce.proj];
          const Vec3& col = set[p.index].color;
          double t_before = trans[k - lo];
          double dc_dot_col = dc.dot(col);
          double d_a = t_before * dc_dot_col - after / (1.0 - ce.alpha);
          after += ce.weight * dc_dot_col;

          ScreenGrad& sg = acc[ce.proj];
          sg.color += ce.weight * dc;
          if (ce.alpha < kContribMax) {
            // a = alpha * exp(-m/2); gradients through both factors.
            double d_alpha = d_a * (ce.alpha / p.alpha);
            double d_m = -0.5 * ce.alpha * d_a;
            double dx = x - p.mean2d[0];
            double dy = static_cast<double>(y) - p.mean2d[1];
            Vec2 d(dx, dy);
            Vec2 qd = p.inv_cov * d;
            sg.alpha += d_alpha;
            sg.mean2d += (-2.0 * d_m) * qd;
            sg.q(0, 0) += d_m * dx * dx;
            sg.q(1, 1) += d_m * dy * dy;
            sg.q(0, 1) += d_m * dx * dy;
            sg.q(1, 0) += d_m * dx * dy;
          }
        }
      }
    }
  });

  std::vector<ScreenGrad> acc(n_proj);
  for (size_t b = 0; b < n_blocks; ++b)
    for (size_t gi = 0; gi < n_proj; ++gi) acc[gi].add(block_acc[b][gi]);

  Mat3 rot = cam.rot();
  for (size_t gi = 0; gi < n_proj; ++gi) {
    const Projected2D& p = out.projected[gi];
    const ScreenGrad& sg = acc[gi];
    const GaussianPrimitive& g = set[p.index];
    PrimGrad& pg = grads[p.index];

    pg.color += sg.color;
    pg.opacity_logit += sg.alpha * p.alpha * (1.0 - p.alpha);

    // Through the matrix inverse: d/dC = -Q * (d/dQ) * Q.
    Mat2 d_cov2d = -p.inv_cov * sg.q * p.inv_cov;
    // cov2d = J P J^T (the dilation is additive).
    Mat3 d_p = p.jac.transpose() * d_cov2d * p.jac;
    Mat23 d_jac = 2.0 * d_cov2d * p.jac * p.cam_cov;
    Mat3 d_sigma = rot.transpose() * d_p * rot;

    double x = p.x_cam[0], y = p.x_cam[1], z = p.x_cam[2];
    double inv_z = 1.0 / z, inv_z2 = inv_z * inv_z;
    Vec3 d_xcam = Vec3::Zero();
    d_xcam[0] += sg.mean2d[0] * cam.fx * inv_z;
    d_xcam[1] += sg.mean2d[1] * cam.fy * inv_z;
    d_xcam[2] += -sg.mean2d[0] * cam.fx * x * inv_z2 -
                 sg.mean2d[1] * cam.fy * y * inv_z2;
    d_xcam[0] += d_jac(0, 2) * (-cam.fx * inv_z2);
    d_xcam[1] += d_jac(1, 2) * (-cam.fy * inv_z2);
    d_xcam[2] += d_jac(0, 0) * (-cam.fx * inv_z2) +
                 d_jac(0, 2) * (2.0 * cam.fx * x * inv_z2 * inv_z) +
                 d_jac(1, 1) * (-cam.fy * inv_z2) +
                 d_jac(1, 2) * (2.0 * cam.fy * y * inv_z2 * inv_z);
    Vec3 d_mu = rot.transpose() * d_xcam;

    // Sigma = R S^2 R^T with S^2 = diag(exp(2 * log_scale)).
    Mat3 rmat = quat_to_rotmat(p.dg.rot_q);
    Vec3 var = (2.0 * p.dg.log_scale).array().exp();
    Mat3 d_sigma_sym = 0.5 * (d_sigma + d_sigma.transpose());
    Mat3 d_r = 2.0 * d_sigma_sym * rmat * var.asDiagonal();
    Mat3 rt_g_r = rmat.transpose() * d_sigma_sym * rmat;
    Vec3 d_log_scale;
    for (int k = 0; k < 3; ++k) d_log_scale[k] = rt_g_r(k, k) * 2.0 * var[k];

    Vec4 d_rot_q;
    for (int c = 0; c < 4; ++c)
      d_rot_q[c] = (d_r.array() * rotmat_partial(p.dg.rot_q, c).array()).sum();

    deform_backward(g, p.dg, t, p.w, opts.modulate_w, d_mu, d_log_scale,
                    d_rot_q, pg);
  }
}

}  // namespace sdd

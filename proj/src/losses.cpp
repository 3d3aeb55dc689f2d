#include "sdd/losses.hpp"

#include <cmath>

#include "sdd/parallel.hpp"

namespace sdd {

namespace {

constexpr double kC1 = 1e-4;   // 0.01^2
constexpr double kC2 = 9e-4;   // 0.03^2
constexpr int kWin = 11;
constexpr int kHalf = 5;
constexpr double kWClampLo = 1e-7;
constexpr double kWClampHi = 1.0 - 1e-7;

struct Window {
  double k[kWin];
  Window() {
    double s = 0.0;
    for (int i = 0; i < kWin; ++i) {
      double d = i - kHalf;
      k[i] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
      s += k[i];
    }
    for (int i = 0; i < kWin; ++i) k[i] /= s;
  }
};
const Window kWindow;

// Sum of in-range window weights per coordinate, for border renormalization.
std::vector<double> border_weights(int n) {
  std::vector<double> z(n);
  for (int i = 0; i < n; ++i) {
    double s = 0.0;
    for (int d = -kHalf; d <= kHalf; ++d)
      if (i + d >= 0 && i + d < n) s += kWindow.k[d + kHalf];
    z[i] = s;
  }
  return z;
}

// Separable 11-tap correlation with zero padding, channel-interleaved RGB.
void correlate(const std::vector<double>& in, int h, int w,
               std::vector<double>& out) {
  std::vector<double> tmp(in.size());
  size_t row_stride = static_cast<size_t>(w) * 3;
  for (int y = 0; y < h; ++y) {
    const double* src = in.data() + y * row_stride;
    double* dst = tmp.data() + y * row_stride;
    for (int x = 0; x < w; ++x) {
      int d0 = std::max(-kHalf, -x), d1 = std::min(kHalf, w - 1 - x);
      double acc0 = 0, acc1 = 0, acc2 = 0;
      for (int d = d0; d <= d1; ++d) {
        double kv = kWindow.k[d + kHalf];
        const double* p = src + (x + d) * 3;
        acc0 += kv * p[0];
        acc1 += kv * p[1];
        acc2 += kv * p[2];
      }
      dst[x * 3] = acc0;
      dst[x * 3 + 1] = acc1;
      dst[x * 3 + 2] = acc2;
    }
  }
  out.resize(in.size());
  for (int y = 0; y < h; ++y) {
    int d0 = std::max(-kHalf, -y), d1 = std::min(kHalf, h - 1 - y);
    double* dst = out.data() + y * row_stride;
    for (size_t i = 0; i < row_stride; ++i) {
      double acc = 0;
      for (int d = d0; d <= d1; ++d)
        acc += kWindow.k[d + kHalf] * tmp[(y + d) * row_stride + i];
      dst[i] = acc;
    }
  }
}

void normalize_borders(std::vector<double>& img, int h, int w,
                       const std::vector<double>& zy,
                       const std::vector<double>& zx, bool divide) {
  size_t i = 0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double z = zy[y] * zx[x];
      double f = divide ? 1.0 / z : z;
      img[i++] *= f;
      img[i++] *= f;
      img[i++] *= f;
    }
}

}  // namespace

double l1_loss(const Image& a, const Image& b) {
  double s = 0.0;
  for (size_t i = 0; i < a.data.size(); ++i) s += std::abs(a.data[i] - b.data[i]);
  return s / static_cast<double>(a.data.size());
}

void l1_backward(const Image& a, const Image& b, double scale, Image& d_a) {
  double f = scale / static_cast<double>(a.data.size());
  for (size_t i = 0; i < a.data.size(); ++i) {
    double d = a.data[i] - b.data[i];
    if (d > 0)
      d_a.data[i] += f;
    else if (d < 0)
      d_a.data[i] -= f;
  }
}

double SsimState::forward(const Image& a, const Image& b) {
  h_ = a.height;
  w_ = a.width;
  a_ = &a;
  b_ = &b;
  std::vector<double> zy = border_weights(h_), zx = border_weights(w_);

  std::vector<double> sq(a.data.size());
  correlate(a.data, h_, w_, mu_a_);
  normalize_borders(mu_a_, h_, w_, zy, zx, true);
  correlate(b.data, h_, w_, mu_b_);
  normalize_borders(mu_b_, h_, w_, zy, zx, true);
  for (size_t i = 0; i < sq.size(); ++i) sq[i] = a.data[i] * a.data[i];
  correlate(sq, h_, w_, p_aa_);
  normalize_borders(p_aa_, h_, w_, zy, zx, true);
  for (size_t i = 0; i < sq.size(); ++i) sq[i] = b.data[i] * b.data[i];
  correlate(sq, h_, w_, p_bb_);
  normalize_borders(p_bb_, h_, w_, zy, zx, true);
  for (size_t i = 0; i < sq.size(); ++i) sq[i] = a.data[i] * b.data[i];
  correlate(sq, h_, w_, p_ab_);
  normalize_borders(p_ab_, h_, w_, zy, zx, true);

  double sum = 0.0;
  for (size_t i = 0; i < mu_a_.size(); ++i) {
    double ma = mu_a_[i], mb = mu_b_[i];
    double va = p_aa_[i] - ma * ma;
    double vb = p_bb_[i] - mb * mb;
    double cab = p_ab_[i] - ma * mb;
    double n1 = 2 * ma * mb + kC1, n2 = 2 * cab + kC2;
    double d1 = ma * ma + mb * mb + kC1, d2 = va + vb + kC2;
    sum += (n1 * n2) / (d1 * d2);
  }
  return sum / static_cast<double>(mu_a_.size());
}

void SsimState::backward(double scale, Image& d_a) const {
  size_t n = mu_a_.size();
  double f = scale / static_cast<double>(n);
  // Pointwise partials w.r.t. the filtered maps (mu_a, P_aa, P_ab).
  std::vector<double> g_mu(n), g_paa(n), g_pab(n);
  for (size_t i = 0; i < n; ++i) {
    double ma = mu_a_[i], mb = mu_b_[i];
    double va = p_aa_[i] - ma * ma;
    double vb = p_bb_[i] - mb * mb;
    double cab = p_ab_[i] - ma * mb;
    double n1 = 2 * ma * mb + kC1, n2 = 2 * cab + kC2;
    double d1 = ma * ma + mb * mb + kC1, d2 = va + vb + kC2;
    double inv_dd = 1.0 / (d1 * d2);
    double s = n1 * n2 * inv_dd;
    double ds_dma = 2 * mb * n2 * inv_dd - s * (2 * ma) / d1;
    double ds_dva = -s / d2;
    double ds_dcab = 2 * n1 * inv_dd;
    // Collapse sigma fields onto the independent filtered quantities.
    g_mu[i] = f * (ds_dma + ds_dva * (-2 * ma) + ds_dcab * (-mb));
    g_paa[i] = f * ds_dva;
    g_pab[i] = f * ds_dcab;
  }
  // Adjoint of a border-normalized filter: divide by the weight sums, then
  // run the same zero-padded correlation.
  std::vector<double> zy = border_weights(h_), zx = border_weights(w_);
  normalize_borders(g_mu, h_, w_, zy, zx, true);
  normalize_borders(g_paa, h_, w_, zy, zx, true);
  normalize_borders(g_pab, h_, w_, zy, zx, true);
  std::vector<double> t_mu, t_paa, t_pab;
  correlate(g_mu, h_, w_, t_mu);
  correlate(g_paa, h_, w_, t_paa);
  correlate(g_pab, h_, w_, t_pab);
  for (size_t i = 0; i < n; ++i)
    d_a.data[i] +=
        t_mu[i] + 2.0 * a_->data[i] * t_paa[i] + b_->data[i] * t_pab[i];
}

double ssim(const Image& a, const Image& b) {
  SsimState st;
  return st.forward(a, b);
}

double ssim_loss(const Image& a, const Image& b) {
  return (1.0 - ssim(a, b)) / 2.0;
}

double binary_entropy(double w) {
  if (w < kWClampLo) w = kWClampLo;
  if (w > kWClampHi) w = kWClampHi;
  return -(w * std::log(w) + (1.0 - w) * std::log(1.0 - w));
}

double binary_entropy_grad(double w) {
  if (w < kWClampLo) w = kWClampLo;
  if (w > kWClampHi) w = kWClampHi;
  return std::log((1.0 - w) / w);
}

double lambda_bi(long long step, double rate) {
  return 1.0 - std::exp(-rate * static_cast<double>(step));
}

namespace {

void apply_mask(const Image& src, const Mask& mask, bool invert, Image& out) {
  out = Image(src.height, src.width);
  size_t i = 0;
  for (int y = 0; y < src.height; ++y)
    for (int x = 0; x < src.width; ++x) {
      bool on = mask.at(y, x) != 0;
      if (invert) on = !on;
      if (on)
        for (int c = 0; c < 3; ++c, ++i) out.data[i] = src.data[i];
      else
        i += 3;
    }
}

double masked_l1(const Image& a, const Image& b, const Mask& mask, bool invert,
                 double scale, Image* d_a) {
  double s = 0.0;
  double f = scale / static_cast<double>(a.data.size());
  size_t i = 0;
  for (int y = 0; y < a.height; ++y)
    for (int x = 0; x < a.width; ++x) {
      bool on = mask.at(y, x) != 0;
      if (invert) on = !on;
      if (!on) {
        i += 3;
        continue;
      }
      for (int c = 0; c < 3; ++c, ++i) {
        double d = a.data[i] - b.data[i];
        s += std::abs(d);
        if (d_a) {
          if (d > 0)
            d_a->data[i] += f;
          else if (d < 0)
            d_a->data[i] -= f;
        }
      }
    }
  return s / static_cast<double>(a.data.size());
}

// One branch of the masked supervision: masked L1 plus D-SSIM on masked
// composites. The SSIM gradient reaches the render only through kept
// pixels, since masking zeroes the rest before comparison.
double asg_branch(const Image& target, const Image& render, const Mask& mask,
                  bool invert, double scale, Image* d_render) {
  double value = masked_l1(render, target, mask, invert, scale, d_render);
  Image rm, tm;
  apply_mask(render, mask, invert, rm);
  apply_mask(target, mask, invert, tm);
  SsimState st;
  double s = st.forward(rm, tm);
  value += (1.0 - s) / 2.0;
  if (d_render) {
    Image d_rm(render.height, render.width);
    st.backward(-0.5 * scale, d_rm);
    size_t i = 0;
    for (int y = 0; y < render.height; ++y)
      for (int x = 0; x < render.width; ++x) {
        bool on = mask.at(y, x) != 0;
        if (invert) on = !on;
        if (on)
          for (int c = 0; c < 3; ++c, ++i) d_render->data[i] += d_rm.data[i];
        else
          i += 3;
      }
  }
  return value;
}

}  // namespace

double asg_loss(const Image& target, const Image& img_static,
                const Image& img_dynamic, const Mask& mask, Image* d_static,
                Image* d_dynamic, double scale) {
  double v = asg_branch(target, img_static, mask, true, scale, d_static);
  v += asg_branch(target, img_dynamic, mask, false, scale, d_dynamic);
  return v;
}

LossBreakdown total_loss(const Image& full, const Image& target,
                         const Image* img_static, const Image* img_dynamic,
                         const Mask* mask, const std::vector<double>& dyn_w,
                         const LossWeights& weights, Image* d_full,
                         Image* d_static, Image* d_dynamic,
                         std::vector<double>* d_dyn_logit) {
  LossBreakdown out;

  double l1 = l1_loss(full, target);
  SsimState st;
  double s = st.forward(full, target);
  out.l_recon = l1 + weights.ssim_weight * (1.0 - s) / 2.0;
  if (d_full) {
    l1_backward(full, target, 1.0, *d_full);
    st.backward(-0.5 * weights.ssim_weight, *d_full);
  }

  if (weights.use_entropy && !dyn_w.empty()) {
    double n = static_cast<double>(dyn_w.size());
    double h = 0.0;
    for (double w : dyn_w) h += binary_entropy(w);
    out.l_bi = h / n;
    out.lambda_bi = weights.lambda_bi;
    if (d_dyn_logit) {
      d_dyn_logit->assign(dyn_w.size(), 0.0);
      for (size_t i = 0; i < dyn_w.size(); ++i) {
        double w = dyn_w[i];
        (*d_dyn_logit)[i] =
            weights.lambda_bi / n * binary_entropy_grad(w) * w * (1.0 - w);
      }
    }
  }

  if (weights.use_asg && img_static && img_dynamic && mask) {
    out.l_asg = weights.asg_weight *
                asg_loss(target, *img_static, *img_dynamic, *mask, d_static,
                         d_dynamic, weights.asg_weight);
  }

  out.total = out.l_recon + out.lambda_bi * out.l_bi + out.l_asg;
  return out;
}

}  // namespace sdd

#pragma once

#include <vector>

#include "sdd/image.hpp"
#include "sdd/math.hpp"

namespace sdd {

// Mean absolute difference over all pixels and channels.
double l1_loss(const Image& a, const Image& b);

// Accumulates scale * d(l1_loss)/da into d_a.
void l1_backward(const Image& a, const Image& b, double scale, Image& d_a);

// Structural similarity with an 11x11 Gaussian window (sigma 1.5),
// C1 = 0.01^2, C2 = 0.03^2, computed per channel and averaged over all
// pixels and channels. Window weights are renormalized where the window
// overhangs the border, so every pixel is scored on its valid support.
// The forward pass caches the filtered moment maps; backward reuses them,
// so the images passed to forward must outlive the backward call.
class SsimState {
 public:
  double forward(const Image& a, const Image& b);
  // Accumulates scale * d(mean_ssim)/da into d_a.
  void backward(double scale, Image& d_a) const;

 private:
  int h_ = 0, w_ = 0;
  const Image* a_ = nullptr;
  const Image* b_ = nullptr;
  std::vector<double> mu_a_, mu_b_, p_aa_, p_bb_, p_ab_;
};

double ssim(const Image& a, const Image& b);

// D-SSIM: (1 - ssim) / 2, in [0, 1].
double ssim_loss(const Image& a, const Image& b);

// Entropy of a Bernoulli weight, natural log, with the argument clamped to
// [1e-7, 1 - 1e-7]. Maximum ln 2 at w = 1/2, tends to 0 at the extremes.
double binary_entropy(double w);

// d(binary_entropy)/dw = ln((1-w)/w), with the same clamping.
double binary_entropy_grad(double w);

// Progressive weight 1 - exp(-rate * step): 0 at the start, saturating
// toward 1 so the entropy pressure arrives only after geometry settles.
double lambda_bi(long long step, double rate);

struct LossBreakdown {
  double l_recon = 0.0;
  double l_bi = 0.0;
  double lambda_bi = 0.0;
  double l_asg = 0.0;
  double total = 0.0;
};

struct LossWeights {
  double ssim_weight = 0.2;  // D-SSIM share of the reconstruction term
  double lambda_bi = 0.0;    // schedule-evaluated entropy weight
  double asg_weight = 1.0;
  bool use_entropy = false;
  bool use_asg = false;
};

// Masked two-branch supervision: the static render is compared to the
// target outside the motion mask, the dynamic render inside it. Each
// branch is a per-pixel-masked L1 plus a D-SSIM on the masked composites.
// Normalization stays over the full pixel count, so an empty or full mask
// makes the corresponding branch vanish.
double asg_loss(const Image& target, const Image& img_static,
                const Image& img_dynamic, const Mask& mask,
                Image* d_static = nullptr, Image* d_dynamic = nullptr,
                double scale = 1.0);

// Full objective: l_recon(full vs target) + lambda_bi * l_bi + l_asg.
// The entropy term is reported (and differentiated) only when enabled;
// l_asg requires the split renders and mask. Gradients are accumulated
// into the optional outputs: d_full/d_static/d_dynamic for the three
// rendered images and d_dyn_logit (one entry per weight) for the entropy
// term. The identity total = l_recon + lambda_bi * l_bi + l_asg holds
// exactly as computed.
LossBreakdown total_loss(const Image& full, const Image& target,
                         const Image* img_static, const Image* img_dynamic,
                         const Mask* mask, const std::vector<double>& dyn_w,
                         const LossWeights& weights, Image* d_full = nullptr,
                         Image* d_static = nullptr, Image* d_dynamic = nullptr,
                         std::vector<double>* d_dyn_logit = nullptr);

}  // namespace sdd

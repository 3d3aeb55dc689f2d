#pragma once

#include <cstdint>
#include <vector>

#include "sdd/deform.hpp"
#include "sdd/gradients.hpp"
#include "sdd/image.hpp"
#include "sdd/scene.hpp"

namespace sdd {

// Pixel (row i, col j) samples the image plane at coordinates (u=j, v=i),
// so a Gaussian whose projected mean lands on integer coordinates is
// evaluated at its peak in that pixel.

struct Projected2D {
  bool valid = false;
  uint32_t index = 0;  // index into the source GaussianSet
  Vec2 mean2d = Vec2::Zero();
  Mat2 cov2d = Mat2::Zero();  // screen-space covariance after +0.3 dilation
  double depth = 0.0;         // camera-space z

  // Cached intermediates for shading and the reverse pass.
  Mat2 inv_cov = Mat2::Zero();
  double alpha = 0.0;  // opacity after sigmoid
  double w = 1.0;      // modulation weight used for this render
  Vec3 x_cam = Vec3::Zero();
  Mat23 jac = Mat23::Zero();   // perspective Jacobian at the mean
  Mat3 cam_cov = Mat3::Zero();  // camera-space 3D covariance
  DeformedGaussian dg;

  // Pixel bounds [x0, x1) x [y0, y1) covering every pixel that can pass the
  // contribution threshold, derived from alpha and cov2d.
  int x0 = 0, x1 = 0, y0 = 0, y1 = 0;
};

struct ContribEntry {
  uint32_t proj = 0;   // index into RenderOutput::projected
  double alpha = 0.0;  // per-pixel opacity after the 0.99 clamp
  double weight = 0.0;  // blend weight alpha * transmittance-before
};

struct RenderOutput {
  Image image;
  std::vector<double> transmittance;  // per pixel, after blending
  std::vector<ContribEntry> contribs;  // per-pixel runs, front to back
  std::vector<uint32_t> offsets;       // size H*W + 1, indexes contribs
  std::vector<Projected2D> projected;  // visible Gaussians in blend order
};

struct RenderOptions {
  Vec3 background = Vec3::Zero();
  // When false the deformation is applied unmodulated (w treated as 1),
  // which is the plain-reconstruction baseline.
  bool modulate_w = true;
};

// Projects one deformed Gaussian. Culls when camera-space z is outside
// (near, far) or the projected mean falls outside the viewport padded by
// 1.3x (0.15 of the extent on each side).
Projected2D project(const Camera& cam, const DeformedGaussian& dg);

// Front-to-back alpha blending over a global depth sort (ties broken by
// ascending Gaussian index). Per pixel, a Gaussian's contribution
// alpha * exp(-0.5 * d^T cov2d^-1 d) is clamped to 0.99 and skipped when
// below 1/255; blending stops before a term would drop transmittance below
// 1e-4. The remaining transmittance is filled with the background color.
// subset, when given, must have one entry per primitive; only entries with
// a nonzero value are rendered.
RenderOutput render(const GaussianSet& set, const Camera& cam, double t,
                    const RenderOptions& opts = {},
                    const std::vector<uint8_t>* subset = nullptr);

// Accumulates d(loss)/d(parameters) into grads given d(loss)/d(image).
// Gradients flow to every parameter group: positions, log-scales,
// rotations, colors, opacity logits, deformation coefficients, and (when
// opts.modulate_w) dynamic-perception logits. Depth ordering and the
// clamp/skip/stop decisions are treated as fixed by the forward pass.
// All reductions run in a fixed block order, so results do not depend on
// the worker count.
void render_backward(const GaussianSet& set, const Camera& cam, double t,
                     const RenderOptions& opts, const RenderOutput& out,
                     const Image& d_image, GradientSet& grads);

}  // namespace sdd

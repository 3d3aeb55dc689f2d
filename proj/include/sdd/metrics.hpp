#pragma once

#include <string>
#include <vector>

#include "sdd/image.hpp"
#include "sdd/scene.hpp"

namespace sdd {

// 10 * log10(1 / MSE) over all pixels and channels, capped at 100 dB so
// identical images report 100 instead of infinity.
double psnr(const Image& a, const Image& b);

// PSNR restricted to pixels where the mask (optionally inverted) is set.
// An empty selection reports the 100 dB cap, there being nothing to miss.
double region_psnr(const Image& a, const Image& b, const Mask& mask,
                   bool invert = false);

// Intersection over union of two pixel masks; an empty union counts as 1.
double mask_iou(const Mask& a, const Mask& b);

struct DecouplingScore {
  long tp = 0, fp = 0, tn = 0, fn = 0;
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
};

// Confusion-matrix rates of the thresholded dynamic prediction (w >= tau)
// against per-primitive ground-truth labels, dynamic being the positive
// class. labels must have one entry per primitive. Degenerate denominators
// report 1 (nothing to get wrong).
DecouplingScore decoupling_score(const GaussianSet& set,
                                 const std::vector<uint8_t>& labels,
                                 double tau);

}  // namespace sdd

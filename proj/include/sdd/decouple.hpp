#pragma once

#include <cstdint>
#include <vector>

#include "sdd/render.hpp"
#include "sdd/scene.hpp"

namespace sdd {

struct Partition {
  std::vector<uint8_t> is_static;      // membership flags, one per primitive
  std::vector<uint8_t> is_dynamic;
  std::vector<uint32_t> static_idx;
  std::vector<uint32_t> dynamic_idx;
  std::vector<uint32_t> unassigned_idx;  // empty in training mode
};

// Training mode: two-way split at a single threshold, w >= tau counting as
// dynamic (the tie goes to dynamic so a freshly initialized scene deforms).
Partition partition_training(const GaussianSet& set, double tau);

// Inference mode: dynamic when w > tau_d, static when w < tau_s, otherwise
// unassigned. Requires tau_s <= tau_d.
Partition partition_inference(const GaussianSet& set, double tau_d,
                              double tau_s);

struct SplitRenders {
  RenderOutput full;
  RenderOutput img_static;
  RenderOutput img_dynamic;
};

// Renders the full set plus the two subsets. Unassigned Gaussians appear in
// the full render only. Each subset render is identical, bit for bit, to
// rendering a physically filtered copy of the scene.
SplitRenders render_split(const GaussianSet& set, const Camera& cam, double t,
                          const Partition& part, const RenderOptions& opts);

struct CoeffHistogram {
  std::vector<long> counts;  // uniform bins over [0, 1]
  long total = 0;
};

CoeffHistogram coeff_histogram(const GaussianSet& set, int n_bins);

// Fraction of weights strictly above tau_s and at most tau_d: the mass the
// inference split would leave unassigned between the two thresholds.
double gap_mass(const GaussianSet& set, double tau_s, double tau_d);

}  // namespace sdd

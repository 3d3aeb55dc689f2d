#include "sdd/decouple.hpp"

#include "sdd/errors.hpp"

namespace sdd {

Partition partition_training(const GaussianSet& set, double tau) {
  Partition p;
  size_t n = set.size();
  p.is_static.assign(n, 0);
  p.is_dynamic.assign(n, 0);
  for (size_t i = 0; i < n; ++i) {
    if (dyn_coeff(set[i]) >= tau) {
      p.is_dynamic[i] = 1;
      p.dynamic_idx.push_back(static_cast<uint32_t>(i));
    } else {
      p.is_static[i] = 1;
      p.static_idx.push_back(static_cast<uint32_t>(i));
    }
  }
  return p;
}

Partition partition_inference(const GaussianSet& set, double tau_d,
                              double tau_s) {
  if (tau_s > tau_d)
    throw SchemaError("partition thresholds: need tau_s <= tau_d");
  Partition p;
  size_t n = set.size();
  p.is_static.assign(n, 0);
  p.is_dynamic.assign(n, 0);
  for (size_t i = 0; i < n; ++i) {
    double w = dyn_coeff(set[i]);
    if (w > tau_d) {
      p.is_dynamic[i] = 1;
      p.dynamic_idx.push_back(static_cast<uint32_t>(i));
    } else if (w < tau_s) {
      p.is_static[i] = 1;
      p.static_idx.push_back(static_cast<uint32_t>(i));
    } else {
      p.unassigned_idx.push_back(static_cast<uint32_t>(i));
    }
  }
  return p;
}

SplitRenders render_split(const GaussianSet& set, const Camera& cam, double t,
                          const Partition& part, const RenderOptions& opts) {
  SplitRenders out;
  out.full = render(set, cam, t, opts);
  out.img_static = render(set, cam, t, opts, &part.is_static);
  out.img_dynamic = render(set, cam, t, opts, &part.is_dynamic);
  return out;
}

CoeffHistogram coeff_histogram(const GaussianSet& set, int n_bins) {
  CoeffHistogram h;
  h.counts.assign(n_bins, 0);
  for (const auto& g : set.prims) {
    double w = dyn_coeff(g);
    int b = static_cast<int>(w * n_bins);
    if (b >= n_bins) b = n_bins - 1;
    if (b < 0) b = 0;
    ++h.counts[b];
    ++h.total;
  }
  return h;
}

double gap_mass(const GaussianSet& set, double tau_s, double tau_d) {
  if (set.size() == 0) return 0.0;
  long in_gap = 0;
  for (const auto& g : set.prims) {
    double w = dyn_coeff(g);
    if (w > tau_s && w <= tau_d) ++in_gap;
  }
  return static_cast<double>(in_gap) / static_cast<double>(set.size());
}

}  // namespace sdd

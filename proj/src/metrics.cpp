#include "sdd/metrics.hpp"

#include <cmath>

#include "sdd/errors.hpp"

namespace sdd {

namespace {
constexpr double kPsnrCap = 100.0;

double mse_to_psnr(double mse) {
  if (mse <= 0.0) return kPsnrCap;
  double v = 10.0 * std::log10(1.0 / mse);
  return v > kPsnrCap ? kPsnrCap : v;
}
}  // namespace

double psnr(const Image& a, const Image& b) {
  double s = 0.0;
  for (size_t i = 0; i < a.data.size(); ++i) {
    double d = a.data[i] - b.data[i];
    s += d * d;
  }
  return mse_to_psnr(s / static_cast<double>(a.data.size()));
}

double region_psnr(const Image& a, const Image& b, const Mask& mask,
                   bool invert) {
  double s = 0.0;
  long n = 0;
  for (int y = 0; y < a.height; ++y)
    for (int x = 0; x < a.width; ++x) {
      bool on = mask.at(y, x) != 0;
      if (invert) on = !on;
      if (!on) continue;
      for (int c = 0; c < 3; ++c) {
        double d = a.at(y, x, c) - b.at(y, x, c);
        s += d * d;
      }
      n += 3;
    }
  if (n == 0) return kPsnrCap;
  return mse_to_psnr(s / static_cast<double>(n));
}

double mask_iou(const Mask& a, const Mask& b) {
  long inter = 0, uni = 0;
  for (size_t i = 0; i < a.data.size(); ++i) {
    bool pa = a.data[i] != 0, pb = b.data[i] != 0;
    if (pa && pb) ++inter;
    if (pa || pb) ++uni;
  }
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

DecouplingScore decoupling_score(const GaussianSet& set,
                                 const std::vector<uint8_t>& labels,
                                 double tau) {
  if (labels.size() != set.size())
    throw SchemaError("decoupling_score: label count " +
                      std::to_string(labels.size()) +
                      " does not match primitive count " +
                      std::to_string(set.size()));
  DecouplingScore s;
  for (size_t i = 0; i < set.size(); ++i) {
    bool pred = dyn_coeff(set[i]) >= tau;
    bool truth = labels[i] != 0;
    if (pred && truth)
      ++s.tp;
    else if (pred && !truth)
      ++s.fp;
    else if (!pred && truth)
      ++s.fn;
    else
      ++s.tn;
  }
  long total = s.tp + s.fp + s.tn + s.fn;
  s.accuracy = total ? static_cast<double>(s.tp + s.tn) / total : 1.0;
  s.precision = (s.tp + s.fp) ? static_cast<double>(s.tp) / (s.tp + s.fp) : 1.0;
  s.recall = (s.tp + s.fn) ? static_cast<double>(s.tp) / (s.tp + s.fn) : 1.0;
  return s;
}

}  // namespace sdd

#pragma once

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "sdd/image.hpp"

namespace sdd {

// Per-patch descriptor grid: ph x pw patches, dim values per patch.
struct FeatureGrid {
  int ph = 0, pw = 0, dim = 0;
  std::vector<double> data;

  FeatureGrid() = default;
  FeatureGrid(int h, int w, int d)
      : ph(h), pw(w), dim(d), data(static_cast<size_t>(h) * w * d, 0.0) {}

  double& at(int py, int px, int k) {
    return data[(static_cast<size_t>(py) * pw + px) * dim + k];
  }
  double at(int py, int px, int k) const {
    return data[(static_cast<size_t>(py) * pw + px) * dim + k];
  }
  size_t patches() const { return static_cast<size_t>(ph) * pw; }
};

// Binary file format: magic "SDDFEATv1", three uint32 dims (ph, pw, dim),
// then row-major float32 values.
void save_features(const FeatureGrid& g, const std::string& path);
FeatureGrid load_features(const std::string& path);

// Patch descriptor source. Implementations must be deterministic functions
// of the image content; name is an identity hint used by file-backed
// extractors to locate precomputed descriptors.
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual int patch_size() const = 0;
  virtual int feature_dim() const = 0;
  virtual FeatureGrid extract(const Image& img,
                              const std::string& name = "") const = 0;
};

// Default 8-dimensional patch statistics: per-channel mean and standard
// deviation, plus mean absolute horizontal and vertical differences
// averaged over channels.
class PatchStatsExtractor : public FeatureExtractor {
 public:
  explicit PatchStatsExtractor(int patch = 8) : patch_(patch) {}
  int patch_size() const override { return patch_; }
  int feature_dim() const override { return 8; }
  FeatureGrid extract(const Image& img,
                      const std::string& name) const override;

 private:
  int patch_;
};

// Reads `<dir>/<name>.feat` written by save_features, enabling externally
// computed descriptors.
class FileFeatureExtractor : public FeatureExtractor {
 public:
  FileFeatureExtractor(std::string dir, int patch, int dim)
      : dir_(std::move(dir)), patch_(patch), dim_(dim) {}
  int patch_size() const override { return patch_; }
  int feature_dim() const override { return dim_; }
  FeatureGrid extract(const Image& img,
                      const std::string& name) const override;

 private:
  std::string dir_;
  int patch_;
  int dim_;
};

// Per-patch uncertainty, parameterized in log space for positivity.
struct UncertaintyField {
  int ph = 0, pw = 0;
  std::vector<double> log_sigma;

  UncertaintyField() = default;
  UncertaintyField(int h, int w, double sigma_init = 1.0)
      : ph(h),
        pw(w),
        log_sigma(static_cast<size_t>(h) * w, std::log(sigma_init)) {}
};

// Patch residual r = min(1, 2 - 2 * cos(f_a, f_b)) per patch; a zero-norm
// descriptor on either side counts as a perfect match.
std::vector<double> feature_residuals(const FeatureGrid& a,
                                      const FeatureGrid& b);

// Mean over patches of r_p / (2 sigma_p^2) + lambda_prior * log(sigma_p).
// Minimized per patch at sigma^2 = r / lambda_prior. This objective only
// ever trains sigma; scene parameters are never part of it.
double uncertainty_loss(const std::vector<double>& residuals,
                        const UncertaintyField& field, double lambda_prior);

// Gradient descent on log(sigma), per patch, holding residuals fixed.
// log(sigma) is kept in [-8, 8] so zero-residual patches stay finite.
void optimize_sigma(UncertaintyField& field,
                    const std::vector<double>& residuals, double lambda_prior,
                    int steps, double rate);

// A patch is flagged dynamic when its uncertainty survived above the
// boundary: m = 1 iff sigma^2 > 1/2, exactly 1/2 giving m = 0. High
// residual means high sigma at the optimum, so the flagged patches are the
// ones the compared render fails to explain.
std::vector<uint8_t> make_mask(const UncertaintyField& field);

// Nearest-patch upsampling of the patch mask to pixel resolution.
Mask mask_to_pixels(const std::vector<uint8_t>& patch_mask, int ph, int pw,
                    int height, int width, int patch);

int patch_count(int extent, int patch);

}  // namespace sdd

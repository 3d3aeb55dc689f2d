#include "sdd/uncertainty.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <memory>

#include "sdd/errors.hpp"

namespace sdd {

namespace {
constexpr char kFeatMagic[9] = {'S', 'D', 'D', 'F', 'E', 'A', 'T', 'v', '1'};
constexpr double kLogSigmaMin = -8.0;
constexpr double kLogSigmaMax = 8.0;
}  // namespace

int patch_count(int extent, int patch) { return (extent + patch - 1) / patch; }

void save_features(const FeatureGrid& g, const std::string& path) {
  FILE* f = fopen(path.c_str(), "wb");
  if (!f) throw std::runtime_error("cannot write file: " + path);
  fwrite(kFeatMagic, 1, 9, f);
  uint32_t dims[3] = {static_cast<uint32_t>(g.ph), static_cast<uint32_t>(g.pw),
                      static_cast<uint32_t>(g.dim)};
  fwrite(dims, sizeof(uint32_t), 3, f);
  std::vector<float> vals(g.data.size());
  for (size_t i = 0; i < vals.size(); ++i)
    vals[i] = static_cast<float>(g.data[i]);
  fwrite(vals.data(), sizeof(float), vals.size(), f);
  fclose(f);
}

FeatureGrid load_features(const std::string& path) {
  FILE* f = fopen(path.c_str(), "rb");
  if (!f) throw MissingFileError("cannot open file: " + path);
  char magic[9];
  uint32_t dims[3];
  if (fread(magic, 1, 9, f) != 9 || memcmp(magic, kFeatMagic, 9) != 0) {
    fclose(f);
    throw SchemaError("bad feature file header: " + path);
  }
  if (fread(dims, sizeof(uint32_t), 3, f) != 3) {
    fclose(f);
    throw SchemaError("feature file truncated: " + path);
  }
  if (dims[0] == 0 || dims[1] == 0 || dims[2] == 0 || dims[0] > 1u << 16 ||
      dims[1] > 1u << 16 || dims[2] > 1u << 12) {
    fclose(f);
    throw SchemaError("feature file dims out of range: " + path);
  }
  FeatureGrid g(dims[0], dims[1], dims[2]);
  std::vector<float> vals(g.data.size());
  if (fread(vals.data(), sizeof(float), vals.size(), f) != vals.size()) {
    fclose(f);
    throw SchemaError("feature file truncated: " + path);
  }
  fclose(f);
  for (size_t i = 0; i < vals.size(); ++i) g.data[i] = vals[i];
  return g;
}

FeatureGrid PatchStatsExtractor::extract(const Image& img,
                                         const std::string&) const {
  int ph = patch_count(img.height, patch_);
  int pw = patch_count(img.width, patch_);
  FeatureGrid g(ph, pw, 8);
  for (int py = 0; py < ph; ++py) {
    for (int px = 0; px < pw; ++px) {
      int y0 = py * patch_, y1 = std::min(img.height, y0 + patch_);
      int x0 = px * patch_, x1 = std::min(img.width, x0 + patch_);
      double n = static_cast<double>(y1 - y0) * (x1 - x0);
      double mean[3] = {0, 0, 0}, var[3] = {0, 0, 0};
      for (int c = 0; c < 3; ++c) {
        for (int y = y0; y < y1; ++y)
          for (int x = x0; x < x1; ++x) mean[c] += img.at(y, x, c);
        mean[c] /= n;
        for (int y = y0; y < y1; ++y)
          for (int x = x0; x < x1; ++x) {
            double d = img.at(y, x, c) - mean[c];
            var[c] += d * d;
          }
        var[c] /= n;
      }
      double gx = 0.0, gy = 0.0;
      long nx = 0, ny = 0;
      for (int c = 0; c < 3; ++c) {
        for (int y = y0; y < y1; ++y)
          for (int x = x0; x + 1 < x1; ++x) {
            gx += std::abs(img.at(y, x + 1, c) - img.at(y, x, c));
            ++nx;
          }
        for (int y = y0; y + 1 < y1; ++y)
          for (int x = x0; x < x1; ++x) {
            gy += std::abs(img.at(y + 1, x, c) - img.at(y, x, c));
            ++ny;
          }
      }
      g.at(py, px, 0) = mean[0];
      g.at(py, px, 1) = mean[1];
      g.at(py, px, 2) = mean[2];
      g.at(py, px, 3) = std::sqrt(var[0]);
      g.at(py, px, 4) = std::sqrt(var[1]);
      g.at(py, px, 5) = std::sqrt(var[2]);
      g.at(py, px, 6) = nx ? gx / nx : 0.0;
      g.at(py, px, 7) = ny ? gy / ny : 0.0;
    }
  }
  return g;
}

FeatureGrid FileFeatureExtractor::extract(const Image&,
                                          const std::string& name) const {
  if (name.empty())
    throw SchemaError("file feature extractor needs a frame name");
  FeatureGrid g = load_features(dir_ + "/" + name + ".feat");
  if (g.dim != dim_)
    throw SchemaError("feature file " + dir_ + "/" + name +
                      ".feat: dimension mismatch");
  return g;
}

std::vector<double> feature_residuals(const FeatureGrid& a,
                                      const FeatureGrid& b) {
  std::vector<double> r(a.patches());
  for (size_t p = 0; p < a.patches(); ++p) {
    const double* fa = a.data.data() + p * a.dim;
    const double* fb = b.data.data() + p * a.dim;
    double dot = 0, na = 0, nb = 0;
    for (int k = 0; k < a.dim; ++k) {
      dot += fa[k] * fb[k];
      na += fa[k] * fa[k];
      nb += fb[k] * fb[k];
    }
    double s;
    if (na == 0.0 || nb == 0.0)
      s = 1.0;
    else
      s = dot / (std::sqrt(na) * std::sqrt(nb));
    double d = 2.0 - 2.0 * s;
    r[p] = d < 1.0 ? d : 1.0;
  }
  return r;
}

double uncertainty_loss(const std::vector<double>& residuals,
                        const UncertaintyField& field, double lambda_prior) {
  double sum = 0.0;
  for (size_t p = 0; p < residuals.size(); ++p) {
    double ls = field.log_sigma[p];
    sum += residuals[p] * 0.5 * std::exp(-2.0 * ls) + lambda_prior * ls;
  }
  return sum / static_cast<double>(residuals.size());
}

void optimize_sigma(UncertaintyField& field,
                    const std::vector<double>& residuals, double lambda_prior,
                    int steps, double rate) {
  for (size_t p = 0; p < residuals.size(); ++p) {
    double ls = field.log_sigma[p];
    double r = residuals[p];
    for (int s = 0; s < steps; ++s) {
      double grad = -r * std::exp(-2.0 * ls) + lambda_prior;
      ls -= rate * grad;
      if (ls < kLogSigmaMin) ls = kLogSigmaMin;
      if (ls > kLogSigmaMax) ls = kLogSigmaMax;
    }
    field.log_sigma[p] = ls;
  }
}

std::vector<uint8_t> make_mask(const UncertaintyField& field) {
  std::vector<uint8_t> m(field.log_sigma.size());
  for (size_t p = 0; p < m.size(); ++p) {
    double sigma2 = std::exp(2.0 * field.log_sigma[p]);
    m[p] = sigma2 > 0.5 ? 1 : 0;
  }
  return m;
}

Mask mask_to_pixels(const std::vector<uint8_t>& patch_mask, int ph, int pw,
                    int height, int width, int patch) {
  Mask out(height, width);
  for (int y = 0; y < height; ++y) {
    int py = std::min(y / patch, ph - 1);
    for (int x = 0; x < width; ++x) {
      int px = std::min(x / patch, pw - 1);
      out.at(y, x) = patch_mask[static_cast<size_t>(py) * pw + px];
    }
  }
  return out;
}

}  // namespace sdd

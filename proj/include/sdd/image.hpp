#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace sdd {

// Row-major RGB image, values nominally in [0, 1]. Math runs in double;
// quantization happens only at the PNG boundary.
struct Image {
  int height = 0;
  int width = 0;
  std::vector<double> data;  // height * width * 3

  Image() = default;
  Image(int h, int w, double fill = 0.0)
      : height(h), width(w), data(static_cast<size_t>(h) * w * 3, fill) {}

  double& at(int y, int x, int c) {
    return data[(static_cast<size_t>(y) * width + x) * 3 + c];
  }
  double at(int y, int x, int c) const {
    return data[(static_cast<size_t>(y) * width + x) * 3 + c];
  }
  size_t pixel_count() const { return static_cast<size_t>(height) * width; }
  bool same_shape(const Image& o) const {
    return height == o.height && width == o.width;
  }
};

// Per-pixel binary mask (0 or 1 per entry).
struct Mask {
  int height = 0;
  int width = 0;
  std::vector<uint8_t> data;

  Mask() = default;
  Mask(int h, int w, uint8_t fill = 0)
      : height(h), width(w), data(static_cast<size_t>(h) * w, fill) {}

  uint8_t& at(int y, int x) { return data[static_cast<size_t>(y) * width + x]; }
  uint8_t at(int y, int x) const {
    return data[static_cast<size_t>(y) * width + x];
  }
};

// 8-bit PNG. Values are quantized as round(clamp(v, 0, 1) * 255).
void save_png(const Image& img, const std::string& path);
Image load_png(const std::string& path);

// Mask PNGs are 8-bit grayscale, 0 or 255.
void save_mask_png(const Mask& mask, const std::string& path);
Mask load_mask_png(const std::string& path);

// Lossless-enough dump for bit-exactness checks: the 8-byte magic "SDDIMGv1"
// followed directly by raw little-endian float32 samples, H*W*3 of them.
// The format carries no dimensions, so loading requires the expected shape
// and the file size is validated against it.
void save_image_dump(const Image& img, const std::string& path);
Image load_image_dump(const std::string& path, int height, int width);

uint8_t quantize_byte(double v);

}  // namespace sdd

#include "sdd/image.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <memory>

#include "sdd/errors.hpp"

namespace sdd {

namespace {

struct FileCloser {
  void operator()(FILE* f) const {
    if (f) fclose(f);
  }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

FilePtr open_or_throw(const std::string& path, const char* mode) {
  FilePtr f(fopen(path.c_str(), mode));
  if (!f) {
    if (mode[0] == 'r')
      throw MissingFileError("cannot open file: " + path);
    throw std::runtime_error("cannot write file: " + path);
  }
  return f;
}

void write_png_rows(const std::string& path, int height, int width,
                    int color_type, const std::vector<uint8_t>& bytes,
                    int bytes_per_row) {
  FilePtr f = open_or_throw(path, "wb");
  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw std::runtime_error("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw std::runtime_error("png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("libpng error while writing " + path);
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, width, height, 8, color_type, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < height; ++y) {
    png_write_row(png, const_cast<png_bytep>(
                           bytes.data() + static_cast<size_t>(y) * bytes_per_row));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

// Decodes any 8/16-bit PNG into packed 8-bit RGB.
std::vector<uint8_t> read_png_rgb(const std::string& path, int* height,
                                  int* width) {
  FilePtr f = open_or_throw(path, "rb");
  uint8_t header[8];
  if (fread(header, 1, 8, f.get()) != 8 || png_sig_cmp(header, 0, 8) != 0)
    throw SchemaError("not a PNG file: " + path);
  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw std::runtime_error("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw std::runtime_error("png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw SchemaError("corrupt PNG file: " + path);
  }
  png_init_io(png, f.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  png_set_expand(png);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_gray_to_rgb(png);
  png_read_update_info(png, info);

  *height = png_get_image_height(png, info);
  *width = png_get_image_width(png, info);
  size_t rowbytes = png_get_rowbytes(png, info);
  std::vector<uint8_t> out(static_cast<size_t>(*height) * rowbytes);
  for (int y = 0; y < *height; ++y)
    png_read_row(png, out.data() + static_cast<size_t>(y) * rowbytes, nullptr);
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  if (rowbytes != static_cast<size_t>(*width) * 3)
    throw SchemaError("unexpected PNG row layout: " + path);
  return out;
}

constexpr char kImageMagic[8] = {'S', 'D', 'D', 'I', 'M', 'G', 'v', '1'};

}  // namespace

uint8_t quantize_byte(double v) {
  if (!(v > 0.0)) v = 0.0;
  if (v > 1.0) v = 1.0;
  return static_cast<uint8_t>(std::lround(v * 255.0));
}

void save_png(const Image& img, const std::string& path) {
  std::vector<uint8_t> bytes(img.data.size());
  for (size_t i = 0; i < img.data.size(); ++i) bytes[i] = quantize_byte(img.data[i]);
  write_png_rows(path, img.height, img.width, PNG_COLOR_TYPE_RGB, bytes,
                 img.width * 3);
}

Image load_png(const std::string& path) {
  int h = 0, w = 0;
  std::vector<uint8_t> bytes = read_png_rgb(path, &h, &w);
  Image img(h, w);
  for (size_t i = 0; i < img.data.size(); ++i) img.data[i] = bytes[i] / 255.0;
  return img;
}

void save_mask_png(const Mask& mask, const std::string& path) {
  std::vector<uint8_t> bytes(mask.data.size());
  for (size_t i = 0; i < mask.data.size(); ++i)
    bytes[i] = mask.data[i] ? 255 : 0;
  write_png_rows(path, mask.height, mask.width, PNG_COLOR_TYPE_GRAY, bytes,
                 mask.width);
}

Mask load_mask_png(const std::string& path) {
  int h = 0, w = 0;
  std::vector<uint8_t> bytes = read_png_rgb(path, &h, &w);
  Mask mask(h, w);
  for (size_t i = 0; i < mask.data.size(); ++i)
    mask.data[i] = bytes[i * 3] >= 128 ? 1 : 0;
  return mask;
}

void save_image_dump(const Image& img, const std::string& path) {
  FilePtr f = open_or_throw(path, "wb");
  if (fwrite(kImageMagic, 1, 8, f.get()) != 8)
    throw std::runtime_error("short write: " + path);
  std::vector<float> vals(img.data.size());
  for (size_t i = 0; i < img.data.size(); ++i)
    vals[i] = static_cast<float>(img.data[i]);
  if (fwrite(vals.data(), sizeof(float), vals.size(), f.get()) != vals.size())
    throw std::runtime_error("short write: " + path);
}

Image load_image_dump(const std::string& path, int height, int width) {
  FilePtr f = open_or_throw(path, "rb");
  char magic[8];
  if (fread(magic, 1, 8, f.get()) != 8 || memcmp(magic, kImageMagic, 8) != 0)
    throw SchemaError("bad image dump header: " + path);
  size_t n = static_cast<size_t>(height) * width * 3;
  std::vector<float> vals(n);
  if (fread(vals.data(), sizeof(float), n, f.get()) != n)
    throw SchemaError("image dump truncated: " + path);
  uint8_t extra;
  if (fread(&extra, 1, 1, f.get()) == 1)
    throw SchemaError("image dump larger than expected shape: " + path);
  Image img(height, width);
  for (size_t i = 0; i < n; ++i) img.data[i] = vals[i];
  return img;
}

}  // namespace sdd

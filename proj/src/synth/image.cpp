#include "tap/synth/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

#include "tap/core/errors.hpp"

namespace tap::synth {

void Image::clamp01() {
  for (auto& v : pixels) v = std::clamp(v, 0.0, 1.0);
}

Tensor to_tensor(const std::vector<const Image*>& images) {
  if (images.empty()) throw ShapeError("to_tensor: no images");
  const std::size_t h = images[0]->height, w = images[0]->width;
  std::vector<double> data;
  data.reserve(images.size() * h * w * 3);
  for (const auto* im : images) {
    if (im->height != h || im->width != w) throw ShapeError("to_tensor: images differ in size");
    data.insert(data.end(), im->pixels.begin(), im->pixels.end());
  }
  return Tensor::from({images.size(), h, w, 3}, data);
}

Tensor to_tensor(const Image& image) { return to_tensor(std::vector<const Image*>{&image}); }

Image from_tensor(const Tensor& batch, std::size_t b) {
  if (batch.dim() != 4 || batch.size(3) != 3 || b >= batch.size(0)) {
    throw ShapeError("from_tensor: expected [B,H,W,3], got " + shape_str(batch.shape()));
  }
  Image im(batch.size(1), batch.size(2));
  const auto d = batch.data();
  std::copy_n(d.begin() + static_cast<long>(b * im.pixels.size()), im.pixels.size(), im.pixels.begin());
  return im;
}

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};

std::unique_ptr<std::FILE, FileCloser> open_file(const std::string& path, const char* mode) {
  std::unique_ptr<std::FILE, FileCloser> f(std::fopen(path.c_str(), mode));
  if (!f) throw IoError("cannot open '" + path + "'");
  return f;
}

void write_rows(const std::string& path, std::size_t height, std::size_t width, int color_type, int channels,
                const std::vector<png_byte>& bytes) {
  auto f = open_file(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng init failed for '" + path + "'");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("PNG write failed for '" + path + "'");
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8, color_type,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (std::size_t y = 0; y < height; ++y) {
    png_write_row(png, bytes.data() + y * width * static_cast<std::size_t>(channels));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

png_byte quantize(double v) { return static_cast<png_byte>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); }

}  // namespace

void write_png(const std::string& path, const Image& image) {
  std::vector<png_byte> bytes(image.pixels.size());
  for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = quantize(image.pixels[i]);
  write_rows(path, image.height, image.width, PNG_COLOR_TYPE_RGB, 3, bytes);
}

void write_gray_png(const std::string& path, std::size_t height, std::size_t width, const std::vector<double>& values) {
  if (values.size() != height * width) throw ShapeError("write_gray_png: buffer size mismatch");
  std::vector<png_byte> bytes(values.size());
  for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = quantize(values[i]);
  write_rows(path, height, width, PNG_COLOR_TYPE_GRAY, 1, bytes);
}

Image read_png(const std::string& path) {
  auto f = open_file(path, "rb");
  png_byte sig[8];
  if (std::fread(sig, 1, 8, f.get()) != 8 || png_sig_cmp(sig, 0, 8)) throw IoError("'" + path + "' is not a PNG");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("libpng init failed for '" + path + "'");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("PNG read failed for '" + path + "'");
  }
  png_init_io(png, f.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_palette_to_rgb(png);
  png_set_expand_gray_1_2_4_to_8(png);
  png_set_gray_to_rgb(png);
  png_read_update_info(png, info);
  const std::size_t w = png_get_image_width(png, info), h = png_get_image_height(png, info);
  std::vector<png_byte> row(png_get_rowbytes(png, info));
  Image im(h, w);
  for (std::size_t y = 0; y < h; ++y) {
    png_read_row(png, row.data(), nullptr);
    for (std::size_t i = 0; i < w * 3; ++i) im.pixels[y * w * 3 + i] = row[i] / 255.0;
  }
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return im;
}

}  // namespace tap::synth

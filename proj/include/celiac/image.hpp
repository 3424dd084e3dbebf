#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <vector>

#include "celiac/tensor.hpp"

namespace celiac {

// 8-bit RGB raster, row-major, 3 bytes per pixel.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;

  static Image filled(int width, int height, std::uint8_t r, std::uint8_t g,
                      std::uint8_t b);
  std::uint8_t* pixel(int x, int y) {
    return rgb.data() + (static_cast<std::size_t>(y) * width + x) * 3;
  }
  const std::uint8_t* pixel(int x, int y) const {
    return rgb.data() + (static_cast<std::size_t>(y) * width + x) * 3;
  }
  bool operator==(const Image& o) const = default;
};

// PNG (any 8-bit variant is converted to RGB on read). Writes are atomic.
Image read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Image& img);

// Single-level stripped TIFF, 8-bit RGB, compression none (1) or deflate (8),
// horizontal-differencing predictor accepted on read.
Image read_tiff(const std::filesystem::path& path);
void write_tiff(const std::filesystem::path& path, const Image& img,
                bool deflate = false);

// Dispatch on file magic.
Image read_image(const std::filesystem::path& path);

// Streaming row reader so a gigapixel slide never needs to be fully resident.
class SlideReader {
 public:
  virtual ~SlideReader() = default;
  virtual int width() const = 0;
  virtual int height() const = 0;
  // Fills `row` (width*3 bytes) with the next scanline; rows are delivered
  // top to bottom exactly once.
  virtual void read_row(std::uint8_t* row) = 0;

  static std::unique_ptr<SlideReader> open(const std::filesystem::path& path);
};

// Bilinear resampling with the half-pixel-center (corner-aligned = false)
// convention; channel values round half to even.
Image resize_bilinear(const Image& img, int target_w, int target_h);

Image hflip(const Image& img);
Image vflip(const Image& img);
Image rot180(const Image& img);

// [1,3,H,W] tensor scaled to [0,1].
Tensor image_to_tensor(const Image& img);
// Batch version: [N,3,H,W] from equally-sized images.
Tensor images_to_tensor(const std::vector<Image>& imgs);

}  // namespace celiac

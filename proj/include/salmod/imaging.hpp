#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "salmod/tensor.hpp"

namespace salmod {

/// Binary foreground mask, row-major, 1 = foreground.
struct Mask {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> bits;

  Mask() = default;
  Mask(std::size_t h, std::size_t w) : height(h), width(w), bits(h * w, 0) {}

  std::uint8_t at(std::size_t y, std::size_t x) const { return bits[y * width + x]; }
  std::uint8_t& at(std::size_t y, std::size_t x) { return bits[y * width + x]; }
  std::size_t count() const;
  bool empty() const { return count() == 0; }

  friend bool operator==(const Mask&, const Mask&) = default;
};

/// Inclusive pixel box.
struct BBox {
  std::size_t x0 = 0, y0 = 0, x1 = 0, y1 = 0;

  std::size_t area() const { return (x1 - x0 + 1) * (y1 - y0 + 1); }
  bool contains(std::size_t x, std::size_t y) const {
    return x >= x0 && x <= x1 && y >= y0 && y <= y1;
  }
  friend bool operator==(const BBox&, const BBox&) = default;
};

/// Tight bounding box of a nonempty mask.
BBox tight_bbox(const Mask& mask);

class FormatError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// 8-bit raster as stored in a binary netpbm file.
struct Raster {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 1;  // 1 for P5, 3 for P6
  std::vector<std::uint8_t> bytes;
};

/// Reads binary P5/P6 with maxval <= 255. Errors name the file.
Raster read_netpbm(const std::filesystem::path& path);
void write_netpbm(const std::filesystem::path& path, const Raster& raster);

/// Quantizes [0,1] reals to round(255 v).
std::uint8_t to_byte(Real v);

/// RGB image tensor [3,H,W] in [0,1] <-> P6 raster.
Raster image_to_raster(const Tensor& image);
Tensor raster_to_image(const Raster& raster);
Raster mask_to_raster(const Mask& mask);
Mask raster_to_mask(const Raster& raster);

/// Bilinear resampling of one row-major plane with pixel-center alignment.
std::vector<Real> resize_bilinear(const std::vector<Real>& plane, std::size_t h, std::size_t w,
                                  std::size_t new_h, std::size_t new_w);
Tensor resize_image(const Tensor& image, std::size_t new_h, std::size_t new_w);
/// Nearest-neighbour resampling keeps masks binary.
Mask resize_mask(const Mask& mask, std::size_t new_h, std::size_t new_w);

/// Separable Gaussian blur with replicated borders.
std::vector<Real> gaussian_blur(const std::vector<Real>& plane, std::size_t h, std::size_t w,
                                Real sigma);

}  // namespace salmod

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "salmod/imaging.hpp"
#include "salmod/tensor.hpp"

namespace salmod {

/// Single-channel map with every value in [0,1].
class SaliencyMap {
public:
  SaliencyMap() = default;
  SaliencyMap(std::size_t height, std::size_t width, Real fill);
  /// Throws std::domain_error if a value lies outside [0,1].
  SaliencyMap(std::size_t height, std::size_t width, std::vector<Real> values);

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  Real at(std::size_t y, std::size_t x) const { return values_[y * width_ + x]; }
  const std::vector<Real>& values() const { return values_; }

  /// [1,H,W] tensor, the shape the saliency branch consumes.
  Tensor as_tensor() const;

  friend bool operator==(const SaliencyMap&, const SaliencyMap&) = default;

private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<Real> values_;
};

struct Fixation {
  std::size_t x = 0;
  std::size_t y = 0;
};
using FixationSet = std::vector<Fixation>;

/// Rescales to [0,1]; a constant plane (zero range) becomes all zeros.
std::vector<Real> minmax_normalize(std::vector<Real> plane);

SaliencyMap white_map(std::size_t height, std::size_t width);

inline constexpr Real kDefaultCenterSigma = 0.25;
/// Isotropic Gaussian centred on the image, sigma = sigma_fraction * min(h,w),
/// scaled so the largest value is 1.
SaliencyMap center_map(std::size_t height, std::size_t width,
                       Real sigma_fraction = kDefaultCenterSigma);

/// Center-surround contrast over a Gaussian pyramid for intensity, R-G and
/// B-Y channels (centre levels 1..3, surround two levels coarser). Images
/// need at least 32 pixels on the short side.
SaliencyMap itti_koch_map(const Tensor& image);

/// Boolean-map surroundedness: mean over randomly thresholded channel maps
/// (both polarities) of the indicator of 8-connected regions that do not
/// touch the border, min-max normalized.
SaliencyMap bms_map(const Tensor& image, std::size_t n_thresholds, std::uint64_t seed);

/// q * blur(mask) + (1 - q) * uniform noise, min-max normalized.
SaliencyMap oracle_map(const Mask& mask, Real quality, std::uint64_t seed);

/// Normalized scanpath saliency: mean z-score (population std) of the map at
/// the fixations. Zero-variance maps score 0.
Real nss(const SaliencyMap& map, const FixationSet& fixations);

/// Up to max_count distinct foreground pixels, seeded.
FixationSet sample_fixations(const Mask& mask, std::size_t max_count, std::uint64_t seed);

SaliencyMap resize_map(const SaliencyMap& map, std::size_t height, std::size_t width);

/// P5 file, byte = round(255 s).
void save_map(const SaliencyMap& map, const std::filesystem::path& path);

struct LoadedMap {
  SaliencyMap map;
  bool resized = false;
};
/// Loads a P5 map. With a nonzero target size the map is bilinearly resized
/// to it when dimensions differ; the resize is reported and logged.
LoadedMap load_map(const std::filesystem::path& path, std::size_t target_height = 0,
                   std::size_t target_width = 0);

}  // namespace salmod

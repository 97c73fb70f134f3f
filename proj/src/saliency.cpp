#include "salmod/saliency.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <stdexcept>
#include <string>

#include "salmod/rng.hpp"

namespace salmod {

SaliencyMap::SaliencyMap(std::size_t height, std::size_t width, Real fill)
    : SaliencyMap(height, width, std::vector<Real>(height * width, fill)) {}

SaliencyMap::SaliencyMap(std::size_t height, std::size_t width, std::vector<Real> values)
    : height_(height), width_(width), values_(std::move(values)) {
  if (height == 0 || width == 0) throw ShapeError("saliency map with zero dimension");
  if (values_.size() != height * width) throw ShapeError("saliency map value count mismatch");
  for (Real v : values_) {
    if (!(v >= 0 && v <= 1)) throw std::domain_error("saliency value outside [0,1]");
  }
}

Tensor SaliencyMap::as_tensor() const { return Tensor({1, height_, width_}, values_); }

std::vector<Real> minmax_normalize(std::vector<Real> plane) {
  if (plane.empty()) return plane;
  const auto [lo_it, hi_it] = std::minmax_element(plane.begin(), plane.end());
  const Real lo = *lo_it;
  const Real range = *hi_it - lo;
  for (Real& v : plane) v = range > 0 ? std::clamp((v - lo) / range, Real{0}, Real{1}) : Real{0};
  return plane;
}

SaliencyMap white_map(std::size_t height, std::size_t width) {
  return SaliencyMap(height, width, Real{1});
}

SaliencyMap center_map(std::size_t height, std::size_t width, Real sigma_fraction) {
  if (!(sigma_fraction > 0)) throw std::invalid_argument("center_map: sigma_fraction must be > 0");
  if (height == 0 || width == 0) throw ShapeError("center_map: zero dimension");
  const Real sigma = sigma_fraction * static_cast<Real>(std::min(height, width));
  const Real cy = (static_cast<Real>(height) - 1) / 2;
  const Real cx = (static_cast<Real>(width) - 1) / 2;
  std::vector<Real> v(height * width);
  Real peak = 0;
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      const Real dy = static_cast<Real>(y) - cy;
      const Real dx = static_cast<Real>(x) - cx;
      const Real g = std::exp(-(dx * dx + dy * dy) / (2 * sigma * sigma));
      v[y * width + x] = g;
      peak = std::max(peak, g);
    }
  }
  if (peak != 1) {
    for (Real& g : v) g = std::min(Real{1}, g / peak);
  }
  return SaliencyMap(height, width, std::move(v));
}

namespace {

struct Plane {
  std::size_t h = 0, w = 0;
  std::vector<Real> v;
};

Plane downsample(const Plane& p) {
  static const Real k[5] = {1.0 / 16, 4.0 / 16, 6.0 / 16, 4.0 / 16, 1.0 / 16};
  auto clampi = [](long i, std::size_t n) {
    return static_cast<std::size_t>(std::clamp(i, 0L, static_cast<long>(n) - 1));
  };
  std::vector<Real> tmp(p.h * p.w);
  for (std::size_t y = 0; y < p.h; ++y) {
    for (std::size_t x = 0; x < p.w; ++x) {
      Real s = 0;
      for (long i = -2; i <= 2; ++i) s += k[i + 2] * p.v[y * p.w + clampi(static_cast<long>(x) + i, p.w)];
      tmp[y * p.w + x] = s;
    }
  }
  Plane out{std::max<std::size_t>(1, p.h / 2), std::max<std::size_t>(1, p.w / 2), {}};
  out.v.resize(out.h * out.w);
  for (std::size_t y = 0; y < out.h; ++y) {
    for (std::size_t x = 0; x < out.w; ++x) {
      Real s = 0;
      for (long i = -2; i <= 2; ++i) {
        s += k[i + 2] * tmp[clampi(static_cast<long>(2 * y) + i, p.h) * p.w + 2 * x];
      }
      out.v[y * out.w + x] = s;
    }
  }
  return out;
}

void scale_to_unit_peak(std::vector<Real>& v) {
  const Real peak = *std::max_element(v.begin(), v.end());
  if (peak > 0) {
    for (Real& x : v) x /= peak;
  }
}

constexpr std::size_t kCenterLevels[] = {1, 2, 3};
constexpr std::size_t kSurroundOffset = 2;
constexpr std::size_t kCoarsestLevel = 5;

std::vector<Real> conspicuity(const Plane& base) {
  std::vector<Plane> pyramid{base};
  for (std::size_t l = 1; l <= kCoarsestLevel; ++l) pyramid.push_back(downsample(pyramid.back()));
  std::vector<Real> acc(base.h * base.w, Real{0});
  for (std::size_t c : kCenterLevels) {
    const Plane& center = pyramid[c];
    const Plane& surround = pyramid[c + kSurroundOffset];
    auto up = resize_bilinear(surround.v, surround.h, surround.w, center.h, center.w);
    for (std::size_t i = 0; i < up.size(); ++i) up[i] = std::abs(center.v[i] - up[i]);
    auto full = resize_bilinear(up, center.h, center.w, base.h, base.w);
    scale_to_unit_peak(full);
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += full[i];
  }
  scale_to_unit_peak(acc);
  return acc;
}

void require_rgb(const Tensor& image, const char* who) {
  if (image.rank() != 3 || image.dim(0) != 3) {
    throw ShapeError(std::string(who) + ": expected a [3,H,W] image, got " +
                     shape_string(image.shape()));
  }
}

}  // namespace

SaliencyMap itti_koch_map(const Tensor& image) {
  require_rgb(image, "itti_koch_map");
  const std::size_t h = image.dim(1), w = image.dim(2);
  const std::size_t min_side = std::size_t{1} << kCoarsestLevel;
  if (h < min_side || w < min_side) {
    throw ShapeError("itti_koch_map: image " + std::to_string(h) + "x" + std::to_string(w) +
                     " smaller than the coarsest pyramid level needs (" +
                     std::to_string(min_side) + ")");
  }
  const std::size_t n = h * w;
  Plane intensity{h, w, std::vector<Real>(n)};
  Plane red_green{h, w, std::vector<Real>(n)};
  Plane blue_yellow{h, w, std::vector<Real>(n)};
  for (std::size_t i = 0; i < n; ++i) {
    const Real r = image[i], g = image[n + i], b = image[2 * n + i];
    intensity.v[i] = (r + g + b) / 3;
    red_green.v[i] = r - g;
    blue_yellow.v[i] = b - (r + g) / 2;
  }
  std::vector<Real> total(n, Real{0});
  for (const Plane* p : {&intensity, &red_green, &blue_yellow}) {
    auto c = conspicuity(*p);
    for (std::size_t i = 0; i < n; ++i) total[i] += c[i];
  }
  return SaliencyMap(h, w, minmax_normalize(std::move(total)));
}

namespace {

// Adds 1 to every pixel of `value == polarity` whose 8-connected component
// avoids the border.
void add_surrounded(const std::vector<std::uint8_t>& value, std::uint8_t polarity, std::size_t h,
                    std::size_t w, std::vector<Real>& acc) {
  std::vector<std::uint8_t> seen(h * w, 0);
  std::vector<std::size_t> component;
  std::vector<std::size_t> stack;
  for (std::size_t start = 0; start < h * w; ++start) {
    if (seen[start] || value[start] != polarity) continue;
    component.clear();
    stack.assign(1, start);
    seen[start] = 1;
    bool touches_border = false;
    while (!stack.empty()) {
      const std::size_t p = stack.back();
      stack.pop_back();
      component.push_back(p);
      const std::size_t y = p / w, x = p % w;
      if (y == 0 || x == 0 || y == h - 1 || x == w - 1) touches_border = true;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          if (!dy && !dx) continue;
          const long ny = static_cast<long>(y) + dy, nx = static_cast<long>(x) + dx;
          if (ny < 0 || nx < 0 || ny >= static_cast<long>(h) || nx >= static_cast<long>(w)) continue;
          const std::size_t q = static_cast<std::size_t>(ny) * w + static_cast<std::size_t>(nx);
          if (!seen[q] && value[q] == polarity) {
            seen[q] = 1;
            stack.push_back(q);
          }
        }
      }
    }
    if (!touches_border) {
      for (std::size_t p : component) acc[p] += 1;
    }
  }
}

}  // namespace

SaliencyMap bms_map(const Tensor& image, std::size_t n_thresholds, std::uint64_t seed) {
  require_rgb(image, "bms_map");
  if (n_thresholds == 0) throw std::invalid_argument("bms_map: need at least one threshold");
  const std::size_t h = image.dim(1), w = image.dim(2), n = h * w;
  Real lo[3], hi[3];
  for (std::size_t c = 0; c < 3; ++c) {
    const auto [mn, mx] = std::minmax_element(image.data() + c * n, image.data() + (c + 1) * n);
    lo[c] = *mn;
    hi[c] = *mx;
  }
  Rng rng(derive_seed(seed, "bms"));
  std::vector<Real> acc(n, Real{0});
  std::vector<std::uint8_t> boolean(n);
  for (std::size_t t = 0; t < n_thresholds; ++t) {
    const std::size_t c = rng.below(3);
    const Real thr = rng.uniform(lo[c], hi[c]);
    const Real* ch = image.data() + c * n;
    for (std::size_t i = 0; i < n; ++i) boolean[i] = ch[i] > thr ? 1 : 0;
    add_surrounded(boolean, 1, h, w, acc);
    add_surrounded(boolean, 0, h, w, acc);
  }
  for (Real& v : acc) v /= static_cast<Real>(2 * n_thresholds);
  return SaliencyMap(h, w, minmax_normalize(std::move(acc)));
}

SaliencyMap oracle_map(const Mask& mask, Real quality, std::uint64_t seed) {
  if (!(quality >= 0 && quality <= 1)) throw std::invalid_argument("oracle_map: quality outside [0,1]");
  if (mask.empty()) throw std::invalid_argument("oracle_map: empty foreground mask");
  const std::size_t h = mask.height, w = mask.width;
  std::vector<Real> fg(h * w);
  for (std::size_t i = 0; i < fg.size(); ++i) fg[i] = mask.bits[i] ? 1 : 0;
  const Real sigma = std::max<Real>(1, static_cast<Real>(std::min(h, w)) / 32);
  auto blurred = gaussian_blur(fg, h, w, sigma);
  Rng rng(derive_seed(seed, "oracle"));
  std::vector<Real> v(h * w);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = quality * blurred[i] + (1 - quality) * rng.uniform();
  return SaliencyMap(h, w, minmax_normalize(std::move(v)));
}

Real nss(const SaliencyMap& map, const FixationSet& fixations) {
  if (fixations.empty()) throw std::invalid_argument("nss: empty fixation set");
  const auto& v = map.values();
  const Real n = static_cast<Real>(v.size());
  Real mean = 0;
  for (Real x : v) mean += x;
  mean /= n;
  Real var = 0;
  for (Real x : v) var += (x - mean) * (x - mean);
  const Real sd = std::sqrt(var / n);
  if (sd <= 1e-12 * std::max(Real{1}, std::abs(mean))) return 0;
  Real total = 0;
  for (const Fixation& f : fixations) {
    if (f.x >= map.width() || f.y >= map.height()) throw std::out_of_range("nss: fixation out of bounds");
    total += (map.at(f.y, f.x) - mean) / sd;
  }
  return total / static_cast<Real>(fixations.size());
}

FixationSet sample_fixations(const Mask& mask, std::size_t max_count, std::uint64_t seed) {
  FixationSet all;
  for (std::size_t y = 0; y < mask.height; ++y) {
    for (std::size_t x = 0; x < mask.width; ++x) {
      if (mask.at(y, x)) all.push_back({x, y});
    }
  }
  if (all.size() <= max_count) return all;
  Rng rng(derive_seed(seed, "fixations"));
  for (std::size_t i = 0; i < max_count; ++i) {
    const std::size_t j = i + rng.below(all.size() - i);
    std::swap(all[i], all[j]);
  }
  all.resize(max_count);
  return all;
}

SaliencyMap resize_map(const SaliencyMap& map, std::size_t height, std::size_t width) {
  if (map.height() == height && map.width() == width) return map;
  auto v = resize_bilinear(map.values(), map.height(), map.width(), height, width);
  for (Real& x : v) x = std::clamp(x, Real{0}, Real{1});
  return SaliencyMap(height, width, std::move(v));
}

void save_map(const SaliencyMap& map, const std::filesystem::path& path) {
  Raster r{map.width(), map.height(), 1, {}};
  r.bytes.reserve(map.values().size());
  for (Real v : map.values()) r.bytes.push_back(to_byte(v));
  write_netpbm(path, r);
}

LoadedMap load_map(const std::filesystem::path& path, std::size_t target_height,
                   std::size_t target_width) {
  Raster r = read_netpbm(path);
  if (r.channels != 1) throw FormatError(path.string() + ": saliency map must be P5 grayscale");
  std::vector<Real> v(r.bytes.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = r.bytes[i] / Real{255};
  LoadedMap out{SaliencyMap(r.height, r.width, std::move(v)), false};
  if (target_height && target_width &&
      (r.height != target_height || r.width != target_width)) {
    std::clog << "saliency: resized " << path.string() << " from " << r.width << "x" << r.height
              << " to " << target_width << "x" << target_height << '\n';
    out.map = resize_map(out.map, target_height, target_width);
    out.resized = true;
  }
  return out;
}

}  // namespace salmod

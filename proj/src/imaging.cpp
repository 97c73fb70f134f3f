#include "salmod/imaging.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>

namespace salmod {

std::size_t Mask::count() const {
  return static_cast<std::size_t>(std::count_if(bits.begin(), bits.end(), [](auto b) { return b != 0; }));
}

BBox tight_bbox(const Mask& mask) {
  BBox box{mask.width, mask.height, 0, 0};
  bool any = false;
  for (std::size_t y = 0; y < mask.height; ++y) {
    for (std::size_t x = 0; x < mask.width; ++x) {
      if (!mask.at(y, x)) continue;
      any = true;
      box.x0 = std::min(box.x0, x);
      box.y0 = std::min(box.y0, y);
      box.x1 = std::max(box.x1, x);
      box.y1 = std::max(box.y1, y);
    }
  }
  if (!any) throw std::invalid_argument("bounding box of an empty mask");
  return box;
}

namespace {

class HeaderReader {
public:
  HeaderReader(const std::vector<std::uint8_t>& bytes, const std::filesystem::path& path)
      : bytes_(bytes), path_(path) {}

  std::string magic() {
    if (bytes_.size() < 2) fail("truncated header");
    pos_ = 2;
    return std::string(bytes_.begin(), bytes_.begin() + 2);
  }

  std::size_t number() {
    skip_space_and_comments();
    std::size_t value = 0;
    std::size_t digits = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      value = value * 10 + (bytes_[pos_] - '0');
      ++pos_;
      if (++digits > 9) fail("header number too large");
    }
    if (digits == 0) fail("malformed header");
    return value;
  }

  std::size_t data_start() {
    if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) fail("malformed header");
    return pos_ + 1;
  }

  [[noreturn]] void fail(const std::string& why) const {
    throw FormatError(path_.string() + ": " + why);
  }

private:
  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  const std::vector<std::uint8_t>& bytes_;
  const std::filesystem::path& path_;
  std::size_t pos_ = 0;
};

}  // namespace

Raster read_netpbm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(path.string() + ": cannot open");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  HeaderReader header(bytes, path);
  const std::string magic = header.magic();
  Raster r;
  if (magic == "P5") {
    r.channels = 1;
  } else if (magic == "P6") {
    r.channels = 3;
  } else {
    header.fail("unsupported magic '" + magic + "'");
  }
  r.width = header.number();
  r.height = header.number();
  const std::size_t maxval = header.number();
  if (r.width == 0 || r.height == 0) header.fail("zero image dimension");
  if (maxval == 0 || maxval > 255) header.fail("maxval must be in [1, 255]");
  const std::size_t start = header.data_start();
  const std::size_t n = r.width * r.height * r.channels;
  if (bytes.size() < start + n) header.fail("truncated pixel data");
  r.bytes.assign(bytes.begin() + static_cast<std::ptrdiff_t>(start),
                 bytes.begin() + static_cast<std::ptrdiff_t>(start + n));
  if (maxval != 255) {
    for (auto& b : r.bytes) {
      if (b > maxval) header.fail("sample exceeds maxval");
      b = static_cast<std::uint8_t>((b * 255 + maxval / 2) / maxval);
    }
  }
  return r;
}

void write_netpbm(const std::filesystem::path& path, const Raster& raster) {
  if (raster.channels != 1 && raster.channels != 3) {
    throw std::invalid_argument("netpbm raster must have 1 or 3 channels");
  }
  if (raster.bytes.size() != raster.width * raster.height * raster.channels) {
    throw std::invalid_argument("raster byte count does not match its dimensions");
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error(path.string() + ": cannot open for writing");
  out << (raster.channels == 1 ? "P5" : "P6") << '\n'
      << raster.width << ' ' << raster.height << '\n'
      << 255 << '\n';
  out.write(reinterpret_cast<const char*>(raster.bytes.data()),
            static_cast<std::streamsize>(raster.bytes.size()));
  if (!out) throw std::runtime_error(path.string() + ": write failed");
}

std::uint8_t to_byte(Real v) {
  const Real clamped = std::clamp(v, Real{0}, Real{1});
  return static_cast<std::uint8_t>(std::lround(255 * clamped));
}

Raster image_to_raster(const Tensor& image) {
  if (image.rank() != 3 || image.dim(0) != 3) {
    throw ShapeError("expected a [3,H,W] image, got " + shape_string(image.shape()));
  }
  Raster r{image.dim(2), image.dim(1), 3, {}};
  const std::size_t plane = r.width * r.height;
  r.bytes.resize(plane * 3);
  for (std::size_t p = 0; p < plane; ++p) {
    for (std::size_t c = 0; c < 3; ++c) r.bytes[p * 3 + c] = to_byte(image[c * plane + p]);
  }
  return r;
}

Tensor raster_to_image(const Raster& raster) {
  if (raster.channels != 3) throw FormatError("expected an RGB (P6) raster");
  const std::size_t plane = raster.width * raster.height;
  Tensor image({3, raster.height, raster.width}, Real{0});
  for (std::size_t p = 0; p < plane; ++p) {
    for (std::size_t c = 0; c < 3; ++c) image[c * plane + p] = raster.bytes[p * 3 + c] / Real{255};
  }
  return image;
}

Raster mask_to_raster(const Mask& mask) {
  Raster r{mask.width, mask.height, 1, {}};
  r.bytes.resize(mask.bits.size());
  for (std::size_t i = 0; i < mask.bits.size(); ++i) r.bytes[i] = mask.bits[i] ? 255 : 0;
  return r;
}

Mask raster_to_mask(const Raster& raster) {
  if (raster.channels != 1) throw FormatError("expected a grayscale (P5) mask");
  Mask m(raster.height, raster.width);
  for (std::size_t i = 0; i < raster.bytes.size(); ++i) m.bits[i] = raster.bytes[i] >= 128 ? 1 : 0;
  return m;
}

std::vector<Real> resize_bilinear(const std::vector<Real>& plane, std::size_t h, std::size_t w,
                                  std::size_t new_h, std::size_t new_w) {
  if (plane.size() != h * w) throw ShapeError("resize_bilinear: plane size mismatch");
  if (new_h == 0 || new_w == 0) throw ShapeError("resize_bilinear: empty target");
  std::vector<Real> out(new_h * new_w);
  const Real sy = static_cast<Real>(h) / static_cast<Real>(new_h);
  const Real sx = static_cast<Real>(w) / static_cast<Real>(new_w);
  for (std::size_t y = 0; y < new_h; ++y) {
    const Real fy = std::clamp((y + Real{0.5}) * sy - Real{0.5}, Real{0}, static_cast<Real>(h - 1));
    const std::size_t y0 = static_cast<std::size_t>(fy);
    const std::size_t y1 = std::min(y0 + 1, h - 1);
    const Real ty = fy - static_cast<Real>(y0);
    for (std::size_t x = 0; x < new_w; ++x) {
      const Real fx =
          std::clamp((x + Real{0.5}) * sx - Real{0.5}, Real{0}, static_cast<Real>(w - 1));
      const std::size_t x0 = static_cast<std::size_t>(fx);
      const std::size_t x1 = std::min(x0 + 1, w - 1);
      const Real tx = fx - static_cast<Real>(x0);
      const Real top = plane[y0 * w + x0] * (1 - tx) + plane[y0 * w + x1] * tx;
      const Real bottom = plane[y1 * w + x0] * (1 - tx) + plane[y1 * w + x1] * tx;
      out[y * new_w + x] = top * (1 - ty) + bottom * ty;
    }
  }
  return out;
}

Tensor resize_image(const Tensor& image, std::size_t new_h, std::size_t new_w) {
  const std::size_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
  if (h == new_h && w == new_w) return image;
  std::vector<Real> out;
  out.reserve(c * new_h * new_w);
  for (std::size_t ch = 0; ch < c; ++ch) {
    std::vector<Real> plane(image.data() + ch * h * w, image.data() + (ch + 1) * h * w);
    auto r = resize_bilinear(plane, h, w, new_h, new_w);
    out.insert(out.end(), r.begin(), r.end());
  }
  return Tensor({c, new_h, new_w}, std::move(out));
}

Mask resize_mask(const Mask& mask, std::size_t new_h, std::size_t new_w) {
  if (mask.height == new_h && mask.width == new_w) return mask;
  Mask out(new_h, new_w);
  for (std::size_t y = 0; y < new_h; ++y) {
    const std::size_t sy = std::min(mask.height - 1, (2 * y + 1) * mask.height / (2 * new_h));
    for (std::size_t x = 0; x < new_w; ++x) {
      const std::size_t sx = std::min(mask.width - 1, (2 * x + 1) * mask.width / (2 * new_w));
      out.at(y, x) = mask.at(sy, sx);
    }
  }
  return out;
}

std::vector<Real> gaussian_blur(const std::vector<Real>& plane, std::size_t h, std::size_t w,
                                Real sigma) {
  if (sigma <= 0) return plane;
  const long radius = static_cast<long>(std::ceil(3 * sigma));
  std::vector<Real> kernel(static_cast<std::size_t>(2 * radius + 1));
  Real total = 0;
  for (long i = -radius; i <= radius; ++i) {
    const Real v = std::exp(-(static_cast<Real>(i * i)) / (2 * sigma * sigma));
    kernel[static_cast<std::size_t>(i + radius)] = v;
    total += v;
  }
  for (Real& k : kernel) k /= total;

  auto clampi = [](long v, std::size_t n) {
    return static_cast<std::size_t>(std::clamp(v, 0L, static_cast<long>(n) - 1));
  };
  std::vector<Real> tmp(h * w), out(h * w);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      Real s = 0;
      for (long i = -radius; i <= radius; ++i) {
        s += kernel[static_cast<std::size_t>(i + radius)] *
             plane[y * w + clampi(static_cast<long>(x) + i, w)];
      }
      tmp[y * w + x] = s;
    }
  }
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      Real s = 0;
      for (long i = -radius; i <= radius; ++i) {
        s += kernel[static_cast<std::size_t>(i + radius)] *
             tmp[clampi(static_cast<long>(y) + i, h) * w + x];
      }
      out[y * w + x] = s;
    }
  }
  return out;
}

}  // namespace salmod

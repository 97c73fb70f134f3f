#include "salmod/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>
#include <stdexcept>

#include "salmod/rng.hpp"

namespace salmod {

void DatasetSpec::validate() const {
  if (num_classes < 2) throw std::invalid_argument("num_classes must be >= 2");
  if (samples_per_class < kTestPerClass + kValPerClass + 1) {
    throw std::invalid_argument("samples_per_class must be >= 11 (5 test + 5 val + 1 train), got " +
                                std::to_string(samples_per_class));
  }
  if (!(subtlety > 0 && subtlety <= 1)) throw std::invalid_argument("subtlety must be in (0,1]");
  if (!(clutter >= 0 && clutter < 1)) throw std::invalid_argument("clutter must be in [0,1)");
  if (std::min(height, width) < 16) {
    throw std::invalid_argument("image " + std::to_string(height) + "x" + std::to_string(width) +
                                " too small for the minimum foreground size (16 px side)");
  }
}

DatasetSpec base_task_spec(const DatasetSpec& target) {
  DatasetSpec base = target;
  base.num_classes = 50;
  base.samples_per_class = 100;
  base.subtlety = 1.0;
  base.family = TaskFamily::base;
  base.seed = derive_seed(target.seed, "base-task");
  return base;
}

namespace {

enum class ShapeKind { ellipse, rectangle, triangle, diamond, cross };
constexpr std::size_t kShapeKinds = 5;

struct Texture {
  Real theta = 0;
  Real freq = 0;
  Real hue = 0;
  Real phase = 0;
};

struct Placement {
  ShapeKind kind = ShapeKind::ellipse;
  Real cx = 0, cy = 0;
  Real radius = 1;
  Real aspect = 1;
  Real rotation = 0;
};

constexpr Real kFreqCenter = 0.26;
constexpr Real kFreqRange = 0.28;
constexpr Real kHueCenter = 0.35;

bool inside(const Placement& p, Real x, Real y) {
  const Real dx = x - p.cx, dy = y - p.cy;
  const Real c = std::cos(p.rotation), s = std::sin(p.rotation);
  const Real u = (c * dx + s * dy) / p.radius;
  const Real v = (-s * dx + c * dy) / (p.radius * p.aspect);
  switch (p.kind) {
    case ShapeKind::ellipse:
      return u * u + v * v <= 1;
    case ShapeKind::rectangle:
      return std::abs(u) <= 0.85 && std::abs(v) <= 0.85;
    case ShapeKind::triangle:
      // Vertices (0,-1), (0.87,0.5), (-0.87,0.5).
      return v <= 0.5 && v >= -1 + 1.7236 * std::abs(u);
    case ShapeKind::diamond:
      return std::abs(u) + std::abs(v) <= 1;
    case ShapeKind::cross:
      return (std::abs(u) <= 0.35 && std::abs(v) <= 1) || (std::abs(u) <= 1 && std::abs(v) <= 0.35);
  }
  return false;
}

void hsv_to_rgb(Real h, Real s, Real v, Real rgb[3]) {
  h = h - std::floor(h);
  const Real hh = h * 6;
  const int sector = static_cast<int>(hh) % 6;
  const Real f = hh - std::floor(hh);
  const Real p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
  const Real table[6][3] = {{v, t, p}, {q, v, p}, {p, v, t}, {p, q, v}, {t, p, v}, {v, p, q}};
  for (int i = 0; i < 3; ++i) rgb[i] = table[sector][i];
}

// Class texture on a regular grid in (orientation, frequency, hue) space,
// contracted towards the grid centre by the subtlety factor.
Texture class_texture(const DatasetSpec& spec, std::size_t label) {
  std::size_t n = 2;
  while (n * n * n < spec.num_classes) ++n;
  const std::size_t total = n * n * n;
  const std::size_t point = label * total / spec.num_classes;
  const Real u0 = (static_cast<Real>(point % n) + 0.5) / static_cast<Real>(n);
  const Real u1 = (static_cast<Real>((point / n) % n) + 0.5) / static_cast<Real>(n);
  const Real u2 = (static_cast<Real>(point / (n * n)) + 0.5) / static_cast<Real>(n);
  const Real delta = spec.family == TaskFamily::base ? Real{1} : spec.subtlety;
  Texture t;
  t.theta = std::numbers::pi / 2 + delta * (u0 - 0.5) * std::numbers::pi;
  t.freq = kFreqCenter + delta * (u1 - 0.5) * kFreqRange;
  t.hue = kHueCenter + delta * (u2 - 0.5);
  return t;
}

// Per-instance variation around a class texture.
Texture jittered(Texture t, Rng& rng) {
  t.theta += 0.03 * rng.normal();
  t.freq *= 1 + rng.uniform(-0.04, 0.04);
  t.hue += 0.02 * rng.normal();
  t.phase = rng.uniform(0, 2 * std::numbers::pi);
  return t;
}

void texture_color(const Texture& t, Real x, Real y, Real rgb[3]) {
  const Real coord = x * std::cos(t.theta) + y * std::sin(t.theta);
  const Real s = 0.5 + 0.5 * std::cos(2 * std::numbers::pi * t.freq * coord + t.phase);
  Real light[3], dark[3];
  hsv_to_rgb(t.hue, 0.75, 0.95, light);
  hsv_to_rgb(t.hue, 0.75, 0.30, dark);
  for (int i = 0; i < 3; ++i) rgb[i] = dark[i] + s * (light[i] - dark[i]);
}

void paint(Tensor& image, const Placement& p, const Texture& t, Mask* coverage) {
  const std::size_t h = image.dim(1), w = image.dim(2), n = h * w;
  const long r = static_cast<long>(std::ceil(p.radius * std::max<Real>(1, 1 / std::min<Real>(1, p.aspect)))) + 1;
  const long y_lo = std::max(0L, static_cast<long>(p.cy) - r);
  const long y_hi = std::min(static_cast<long>(h) - 1, static_cast<long>(p.cy) + r);
  const long x_lo = std::max(0L, static_cast<long>(p.cx) - r);
  const long x_hi = std::min(static_cast<long>(w) - 1, static_cast<long>(p.cx) + r);
  for (long y = y_lo; y <= y_hi; ++y) {
    for (long x = x_lo; x <= x_hi; ++x) {
      if (!inside(p, static_cast<Real>(x), static_cast<Real>(y))) continue;
      Real rgb[3];
      texture_color(t, static_cast<Real>(x), static_cast<Real>(y), rgb);
      const std::size_t i = static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x);
      for (std::size_t c = 0; c < 3; ++c) image[c * n + i] = rgb[c];
      if (coverage) coverage->bits[i] = 1;
    }
  }
}

Mask rasterize(const Placement& p, std::size_t h, std::size_t w) {
  Mask m(h, w);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      if (inside(p, static_cast<Real>(x), static_cast<Real>(y))) m.at(y, x) = 1;
    }
  }
  return m;
}

std::uint64_t family_tag(TaskFamily f) { return f == TaskFamily::base ? 0xba5eULL : 0xf19eULL; }

}  // namespace

Sample generate_sample(const DatasetSpec& spec, std::size_t label, std::size_t index) {
  const std::size_t h = spec.height, w = spec.width, n = h * w;
  const Real side = static_cast<Real>(std::min(h, w));
  Rng rng(derive_seed(derive_seed(spec.seed, family_tag(spec.family)),
                      label * spec.samples_per_class + index));

  Sample s;
  s.label = label;
  s.name = (spec.family == TaskFamily::base ? "base_c" : "c") + std::to_string(label) + "_" +
           std::to_string(index);

  // Background: desaturated colour with a linear ramp.
  Real bg[3];
  hsv_to_rgb(rng.uniform(), rng.uniform(0.1, 0.35), rng.uniform(0.35, 0.6), bg);
  const Real ramp_angle = rng.uniform(0, 2 * std::numbers::pi);
  const Real ramp = rng.uniform(0, 0.15);
  s.image = Tensor({3, h, w}, Real{0});
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const Real t = ((static_cast<Real>(x) / side - 0.5) * std::cos(ramp_angle) +
                      (static_cast<Real>(y) / side - 0.5) * std::sin(ramp_angle)) * ramp;
      for (std::size_t c = 0; c < 3; ++c) s.image[c * n + y * w + x] = bg[c] + t;
    }
  }

  Placement fg;
  fg.kind = spec.family == TaskFamily::base
                ? static_cast<ShapeKind>(1 + label % (kShapeKinds - 1))
                : ShapeKind::ellipse;
  fg.radius = rng.uniform(0.18, 0.26) * side;
  fg.aspect = rng.uniform(0.65, 1.0);
  fg.rotation = rng.uniform(0, std::numbers::pi);
  fg.cx = rng.uniform(fg.radius, static_cast<Real>(w) - 1 - fg.radius);
  fg.cy = rng.uniform(fg.radius, static_cast<Real>(h) - 1 - fg.radius);
  s.mask = rasterize(fg, h, w);
  if (s.mask.empty()) throw std::logic_error("generated an empty foreground");

  const Texture tex = jittered(class_texture(spec, label), rng);

  // Distractors until the requested share of background pixels is covered.
  // They wear class textures, so texture alone does not say which region
  // carries the label; only the object's extent does.
  const std::size_t background = n - s.mask.count();
  Mask covered(h, w);
  std::size_t covered_bg = 0;
  for (int attempt = 0; attempt < 400 && static_cast<Real>(covered_bg) <
                                             spec.clutter * static_cast<Real>(background);
       ++attempt) {
    Placement d;
    d.kind = static_cast<ShapeKind>(rng.below(kShapeKinds));
    d.radius = rng.uniform(0.06, 0.13) * side;
    d.aspect = rng.uniform(0.6, 1.0);
    d.rotation = rng.uniform(0, std::numbers::pi);
    d.cx = rng.uniform(0, static_cast<Real>(w - 1));
    d.cy = rng.uniform(0, static_cast<Real>(h - 1));
    paint(s.image, d, jittered(class_texture(spec, rng.below(spec.num_classes)), rng), &covered);
    covered_bg = 0;
    for (std::size_t i = 0; i < n; ++i) covered_bg += covered.bits[i] && !s.mask.bits[i];
  }

  paint(s.image, fg, tex, nullptr);
  for (Real& v : s.image.values()) v = std::clamp(v + 0.02 * rng.normal(), Real{0}, Real{1});
  s.bbox = tight_bbox(s.mask);
  return s;
}

GeneratedDataset generate(const DatasetSpec& spec) {
  spec.validate();
  GeneratedDataset out;
  out.data.num_classes = spec.num_classes;
  out.data.samples.reserve(spec.num_classes * spec.samples_per_class);
  for (std::size_t c = 0; c < spec.num_classes; ++c) {
    for (std::size_t i = 0; i < spec.samples_per_class; ++i) {
      out.data.samples.push_back(generate_sample(spec, c, i));
    }
  }
  out.plan = make_split(out.data, derive_seed(spec.seed, "split"));
  return out;
}

std::vector<std::size_t> SplitPlan::test_ids() const {
  std::vector<std::size_t> ids;
  for (const auto& c : classes) ids.insert(ids.end(), c.test.begin(), c.test.end());
  return ids;
}

std::vector<std::size_t> SplitPlan::val_ids() const {
  std::vector<std::size_t> ids;
  for (const auto& c : classes) ids.insert(ids.end(), c.val.begin(), c.val.end());
  return ids;
}

std::size_t SplitPlan::min_pool() const {
  std::size_t m = kFullPool;
  for (const auto& c : classes) m = std::min(m, c.pool.size());
  return m;
}

SplitPlan make_split(const Dataset& data, std::uint64_t seed) {
  SplitPlan plan;
  plan.classes.resize(data.num_classes);
  std::vector<std::vector<std::size_t>> members(data.num_classes);
  for (std::size_t i = 0; i < data.samples.size(); ++i) {
    const std::size_t label = data.samples[i].label;
    if (label >= data.num_classes) throw std::out_of_range("sample label exceeds class count");
    members[label].push_back(i);
  }
  for (std::size_t c = 0; c < data.num_classes; ++c) {
    auto ids = members[c];
    if (ids.size() < kTestPerClass + kValPerClass + 1) {
      throw std::invalid_argument("class " + std::to_string(c) + " has " +
                                  std::to_string(ids.size()) +
                                  " samples; the split needs at least 11");
    }
    Rng rng(derive_seed(seed, c));
    shuffle(ids, rng);
    auto& cs = plan.classes[c];
    cs.test.assign(ids.begin(), ids.begin() + kTestPerClass);
    cs.val.assign(ids.begin() + kTestPerClass, ids.begin() + kTestPerClass + kValPerClass);
    cs.pool.assign(ids.begin() + kTestPerClass + kValPerClass, ids.end());
  }
  return plan;
}

std::vector<std::size_t> subset(const SplitPlan& plan, std::size_t k, std::uint64_t seed) {
  if (k == 0) throw std::invalid_argument("subset: k must be positive");
  std::vector<std::size_t> ids;
  for (std::size_t c = 0; c < plan.classes.size(); ++c) {
    auto pool = plan.classes[c].pool;
    if (k != kFullPool && k > pool.size()) {
      throw std::invalid_argument("subset: k=" + std::to_string(k) + " exceeds pool of " +
                                  std::to_string(pool.size()) + " in class " + std::to_string(c));
    }
    Rng rng(derive_seed(derive_seed(seed, "subset"), c));
    shuffle(pool, rng);
    const std::size_t take = k == kFullPool ? pool.size() : k;
    ids.insert(ids.end(), pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(take));
  }
  return ids;
}

std::string k_label(std::size_t k) { return k == kFullPool ? "K" : std::to_string(k); }

std::string format_bbox(const BBox& b) {
  return std::to_string(b.x0) + ":" + std::to_string(b.y0) + ":" + std::to_string(b.x1) + ":" +
         std::to_string(b.y1);
}

BBox parse_bbox(const std::string& text) {
  BBox b;
  char c1 = 0, c2 = 0, c3 = 0;
  std::istringstream is(text);
  if (!(is >> b.x0 >> c1 >> b.y0 >> c2 >> b.x1 >> c3 >> b.y1) || c1 != ':' || c2 != ':' ||
      c3 != ':' || b.x1 < b.x0 || b.y1 < b.y0) {
    throw FormatError("malformed bbox '" + text + "', expected x0:y0:x1:y1");
  }
  return b;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  fields.push_back(cur);
  return fields;
}

}  // namespace

Dataset ingest_folder(const std::filesystem::path& root, std::size_t height, std::size_t width) {
  const auto index_path = root / kIndexFile;
  std::ifstream in(index_path);
  if (!in) throw std::runtime_error(index_path.string() + ": index file not found");
  std::string line;
  if (!std::getline(in, line) || split_csv_line(line).front() != "image") {
    throw FormatError(index_path.string() + ": missing header '" + kIndexHeader + "'");
  }
  Dataset data;
  std::set<std::size_t> labels;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    auto f = split_csv_line(line);
    f.resize(5);
    if (f[0].empty() || f[1].empty()) {
      throw FormatError(index_path.string() + ":" + std::to_string(row) + ": image and label are required");
    }
    Sample s;
    const auto image_path = root / f[0];
    if (!std::filesystem::exists(image_path)) throw std::runtime_error(image_path.string() + ": missing image");
    s.name = std::filesystem::path(f[0]).stem().string();
    s.image = raster_to_image(read_netpbm(image_path));
    try {
      s.label = std::stoul(f[1]);
    } catch (const std::exception&) {
      throw FormatError(index_path.string() + ":" + std::to_string(row) + ": bad label '" + f[1] + "'");
    }
    const std::size_t src_h = s.image.dim(1), src_w = s.image.dim(2);
    if (!f[2].empty()) {
      const auto mask_path = root / f[2];
      if (!std::filesystem::exists(mask_path)) throw std::runtime_error(mask_path.string() + ": missing mask");
      s.mask = raster_to_mask(read_netpbm(mask_path));
      if (s.mask.height != src_h || s.mask.width != src_w) {
        throw FormatError(mask_path.string() + ": mask size differs from its image");
      }
    } else if (!f[3].empty()) {
      const BBox b = parse_bbox(f[3]);
      if (b.x1 >= src_w || b.y1 >= src_h) throw FormatError(index_path.string() + ": bbox outside image");
      s.mask = Mask(src_h, src_w);
      for (std::size_t y = b.y0; y <= b.y1; ++y) {
        for (std::size_t x = b.x0; x <= b.x1; ++x) s.mask.at(y, x) = 1;
      }
    } else {
      s.mask = Mask(src_h, src_w);
      std::fill(s.mask.bits.begin(), s.mask.bits.end(), 1);
    }
    if (height && width) {
      s.image = resize_image(s.image, height, width);
      s.mask = resize_mask(s.mask, height, width);
    }
    if (s.mask.empty()) throw FormatError(image_path.string() + ": empty foreground mask");
    s.bbox = tight_bbox(s.mask);
    if (!f[4].empty()) {
      const auto map_path = root / f[4];
      if (!std::filesystem::exists(map_path)) throw std::runtime_error(map_path.string() + ": missing saliency map");
      s.saliency = load_map(map_path, s.image.dim(1), s.image.dim(2)).map;
    }
    labels.insert(s.label);
    data.samples.push_back(std::move(s));
  }
  if (data.samples.empty()) throw FormatError(index_path.string() + ": no samples");
  const std::size_t max_label = *labels.rbegin();
  if (labels.size() != max_label + 1) {
    throw FormatError(index_path.string() + ": labels must be contiguous from 0, gap below " +
                      std::to_string(max_label));
  }
  data.num_classes = max_label + 1;
  return data;
}

void write_dataset(const Dataset& data, const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  fs::create_directories(root / "images");
  fs::create_directories(root / "masks");
  std::ostringstream index;
  index << kIndexHeader << '\n';
  for (const Sample& s : data.samples) {
    const std::string image_rel = "images/" + s.name + ".ppm";
    const std::string mask_rel = "masks/" + s.name + ".pgm";
    write_netpbm(root / image_rel, image_to_raster(s.image));
    write_netpbm(root / mask_rel, mask_to_raster(s.mask));
    std::string sal_rel;
    if (s.saliency) {
      fs::create_directories(root / "saliency");
      sal_rel = "saliency/" + s.name + ".pgm";
      save_map(*s.saliency, root / sal_rel);
    }
    index << image_rel << ',' << s.label << ',' << mask_rel << ',' << format_bbox(s.bbox) << ','
          << sal_rel << '\n';
  }
  std::ofstream out(root / kIndexFile, std::ios::trunc);
  if (!out) throw std::runtime_error((root / kIndexFile).string() + ": cannot write index");
  out << index.str();
}

}  // namespace salmod

#include "salmod/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "salmod/rng.hpp"

namespace salmod {

std::string to_string(Variant v) {
  switch (v) {
    case Variant::baseline_rgb: return "baseline_rgb";
    case Variant::early_fusion: return "early_fusion";
    case Variant::delayed_fusion: return "delayed_fusion";
  }
  return "?";
}

std::string to_string(PoolPosition p) {
  return p == PoolPosition::before_fusion ? "before_fusion" : "after_fusion";
}

std::string to_string(InitMode m) {
  switch (m) {
    case InitMode::none: return "none";
    case InitMode::scratch: return "scratch";
    case InitMode::pretrained: return "pretrained";
  }
  return "?";
}

Variant parse_variant(const std::string& s) {
  if (s == "baseline_rgb") return Variant::baseline_rgb;
  if (s == "early_fusion") return Variant::early_fusion;
  if (s == "delayed_fusion") return Variant::delayed_fusion;
  throw std::invalid_argument("unknown variant '" + s + "'");
}

PoolPosition parse_pool_position(const std::string& s) {
  if (s == "before_fusion") return PoolPosition::before_fusion;
  if (s == "after_fusion") return PoolPosition::after_fusion;
  throw std::invalid_argument("unknown pool position '" + s + "'");
}

InitMode parse_init_mode(const std::string& s) {
  if (s == "none") return InitMode::none;
  if (s == "scratch") return InitMode::scratch;
  if (s == "pretrained") return InitMode::pretrained;
  throw std::invalid_argument("unknown init mode '" + s + "'");
}

PoolPosition default_pool_position(Variant v) {
  return v == Variant::delayed_fusion ? PoolPosition::after_fusion : PoolPosition::before_fusion;
}

namespace {

// MiniNet: conv1 3->16 (5x5/2), conv2 16->32, conv3 32->48, conv4 48->48,
// conv5 48->32 (3x3/1, pad 1), 2x2 max pools after conv1, conv2 and conv5,
// then fc6 ->256, fc7 ->128, fc8 ->classes.
struct ConvLevel {
  std::size_t out;
  std::size_t kernel;
  ConvGeometry geometry;
  bool pool_after;
};

constexpr ConvLevel kLevels[5] = {
    {16, 5, {2, 2}, true},
    {32, 3, {1, 1}, true},
    {48, 3, {1, 1}, false},
    {48, 3, {1, 1}, false},
    {32, 3, {1, 1}, true},
};
constexpr std::size_t kFc6 = 256;
constexpr std::size_t kFc7 = 128;
constexpr std::size_t kPoolWindow = 2;
constexpr std::size_t kSaliencyHidden = 8;

// A pool is skipped when the map has already collapsed below the window.
bool pool_applies(std::size_t h, std::size_t w) { return h >= kPoolWindow && w >= kPoolWindow; }

std::size_t pooled(std::size_t n) { return conv_output_size(n, kPoolWindow, kPoolWindow, 0); }

struct Spatial {
  std::size_t h, w;
};

Spatial after_conv(Spatial s, const ConvLevel& l) {
  return {conv_output_size(s.h, l.kernel, l.geometry.stride, l.geometry.padding),
          conv_output_size(s.w, l.kernel, l.geometry.stride, l.geometry.padding)};
}

}  // namespace

void NetworkConfig::validate() const {
  if (fusion_level < 1 || fusion_level > 5) throw std::invalid_argument("fusion_level must be in 1..5");
  if (saliency_depth != 2 && saliency_depth != 3) throw std::invalid_argument("saliency_depth must be 2 or 3");
  if (!(saliency_width > 0 && saliency_width <= 1)) throw std::invalid_argument("saliency_width must be in (0,1]");
  if (num_classes < 2) throw std::invalid_argument("num_classes must be >= 2");
  if (variant != Variant::delayed_fusion && pool_position == PoolPosition::after_fusion) {
    throw std::invalid_argument("pool_position=after_fusion is meaningless for " + to_string(variant) +
                                "; use before_fusion");
  }
  if (variant == Variant::baseline_rgb && init == InitMode::pretrained) {
    throw std::invalid_argument("init=pretrained needs a saliency input; baseline_rgb uses scratch");
  }
  if (freeze_saliency && variant != Variant::delayed_fusion) {
    throw std::invalid_argument("freeze_saliency requires delayed_fusion");
  }
  // Throws ShapeError if the input collapses before fc6.
  (void)layer_plan(*this);
}

std::string NetworkConfig::name() const {
  switch (variant) {
    case Variant::baseline_rgb: return "baseline_rgb";
    case Variant::early_fusion: return "early_fusion";
    case Variant::delayed_fusion: break;
  }
  std::string n = "delayed_L" + std::to_string(fusion_level) + "_S" + std::to_string(saliency_depth) +
                  "_w" + std::to_string(static_cast<int>(std::lround(saliency_width * 100)));
  n += skip ? "_skip" : "_noskip";
  n += pool_position == PoolPosition::after_fusion ? "_after" : "_before";
  return n;
}

Shape LayerSpec::weight_shape() const {
  if (conv) return {out, in, kernel, kernel};
  return {out, in};
}

std::size_t LayerSpec::fan_in() const { return conv ? in * kernel * kernel : in; }
std::size_t LayerSpec::fan_out() const { return conv ? out * kernel * kernel : out; }
Real LayerSpec::xavier_bound() const {
  return std::sqrt(Real{6} / static_cast<Real>(fan_in() + fan_out()));
}

std::size_t saliency_hidden_channels(const NetworkConfig& config) {
  return std::max<std::size_t>(
      1, static_cast<std::size_t>(std::lround(kSaliencyHidden * config.saliency_width)));
}

std::vector<LayerSpec> layer_plan(const NetworkConfig& config) {
  std::vector<LayerSpec> plan;
  std::size_t channels = config.variant == Variant::early_fusion ? 4 : 3;
  Spatial s{config.input_height, config.input_width};
  for (std::size_t i = 0; i < 5; ++i) {
    const ConvLevel& l = kLevels[i];
    plan.push_back({"conv" + std::to_string(i + 1), true, channels, l.out, l.kernel, l.geometry});
    channels = l.out;
    s = after_conv(s, l);
    if (l.pool_after && pool_applies(s.h, s.w)) s = {pooled(s.h), pooled(s.w)};
  }
  plan.push_back({"fc6", false, channels * s.h * s.w, kFc6, 0, {}});
  plan.push_back({"fc7", false, kFc6, kFc7, 0, {}});
  plan.push_back({kClassifierLayer, false, kFc7, config.num_classes, 0, {}});

  if (config.has_saliency_branch()) {
    const std::size_t hidden = saliency_hidden_channels(config);
    const ConvLevel& first = kLevels[0];
    const ConvGeometry same{1, 1};
    plan.push_back({"sal.conv1", true, 1, hidden, first.kernel, first.geometry});
    if (config.saliency_depth == 3) plan.push_back({"sal.conv2", true, hidden, hidden, 3, same});
    plan.push_back({"sal.conv" + std::to_string(config.saliency_depth), true, hidden, 1, 3, same});
  }
  return plan;
}

std::size_t fusion_stride(const NetworkConfig& config) {
  std::size_t stride = 1;
  Spatial s{config.input_height, config.input_width};
  const auto level = static_cast<std::size_t>(config.fusion_level);
  for (std::size_t i = 0; i < level; ++i) {
    const ConvLevel& l = kLevels[i];
    s = after_conv(s, l);
    stride *= l.geometry.stride;
    const bool last = i + 1 == level;
    const bool pool_here = l.pool_after && pool_applies(s.h, s.w) &&
                           (!last || (config.variant == Variant::delayed_fusion &&
                                      config.pool_position == PoolPosition::before_fusion));
    if (pool_here) {
      s = {pooled(s.h), pooled(s.w)};
      stride *= kPoolWindow;
    }
  }
  return stride;
}

std::size_t ModelState::parameter_count(const std::string& prefix) const {
  std::size_t n = 0;
  for (const auto& [name, t] : params) {
    if (name.rfind(prefix, 0) == 0) n += t.size();
  }
  return n;
}

bool ModelState::all_finite() const {
  return std::all_of(params.begin(), params.end(), [](const auto& kv) { return kv.second.all_finite(); });
}

ModelState build(const NetworkConfig& config, std::uint64_t seed) {
  config.validate();
  ModelState state;
  for (const LayerSpec& layer : layer_plan(config)) {
    Rng rng(derive_seed(seed, layer.name));
    const Real bound = layer.xavier_bound();
    Tensor w(layer.weight_shape(), Real{0});
    for (Real& v : w.values()) v = rng.uniform(-bound, bound);
    state.params[layer.name + ".weight"] = std::move(w);
    state.params[layer.name + ".bias"] = Tensor({layer.out}, Real{0});
    state.provenance[layer.name] = "xavier";
  }
  return state;
}

ModelState transfer(const ModelState& source, const NetworkConfig& target, std::uint64_t seed,
                    const std::string& provenance) {
  ModelState out = build(target, seed);
  const std::string classifier = std::string(kClassifierLayer) + ".";
  for (auto& [name, tensor] : out.params) {
    if (name.rfind(classifier, 0) == 0) continue;
    auto it = source.params.find(name);
    if (it == source.params.end()) continue;
    const Tensor& src = it->second;
    const std::string layer = name.substr(0, name.rfind('.'));
    if (src.shape() == tensor.shape()) {
      tensor = src;
      out.provenance[layer] = provenance;
    } else if (name == "conv1.weight" && src.rank() == 4 && tensor.dim(1) == 4 && src.dim(1) == 3 &&
               src.dim(0) == tensor.dim(0) && src.dim(2) == tensor.dim(2) && src.dim(3) == tensor.dim(3)) {
      // Early fusion: RGB slices inherited, the saliency slice keeps its Xavier draw.
      const std::size_t plane = src.dim(2) * src.dim(3);
      for (std::size_t o = 0; o < src.dim(0); ++o) {
        for (std::size_t c = 0; c < 3; ++c) {
          std::copy_n(src.data() + (o * 3 + c) * plane, plane, tensor.data() + (o * 4 + c) * plane);
        }
      }
      out.provenance[layer] = provenance + "+xavier(saliency slice)";
    }
  }
  return out;
}

bool is_frozen(const std::string& name, const std::vector<std::string>& frozen_prefixes) {
  return std::any_of(frozen_prefixes.begin(), frozen_prefixes.end(),
                     [&](const std::string& p) { return name.rfind(p, 0) == 0; });
}

BoundParameters bind_parameters(Tape& tape, const ModelState& state,
                     const std::vector<std::string>& frozen_prefixes) {
  BoundParameters bound;
  for (const auto& [name, tensor] : state.params) {
    bound.emplace(name, tape.parameter(tensor, !is_frozen(name, frozen_prefixes)));
  }
  return bound;
}

namespace {

Var param(const BoundParameters& p, const std::string& name) {
  auto it = p.find(name);
  if (it == p.end()) throw std::invalid_argument("model state lacks parameter '" + name + "'");
  return it->second;
}

Var conv_layer(const BoundParameters& p, const std::string& layer, Var x, ConvGeometry g) {
  return conv2d(x, param(p, layer + ".weight"), param(p, layer + ".bias"), g);
}

Var pool(Var x) { return maxpool2d(x, kPoolWindow, kPoolWindow); }

bool can_pool(Var x) { return pool_applies(x.shape()[1], x.shape()[2]); }

Var saliency_branch(Tape& tape, const BoundParameters& p, const NetworkConfig& config,
                    const SaliencyMap& saliency) {
  Var s = tape.constant(saliency.as_tensor());
  s = relu(conv_layer(p, "sal.conv1", s, kLevels[0].geometry));
  // Reproduce the RGB path's down-sampling up to the fusion point.
  const auto level = static_cast<std::size_t>(config.fusion_level);
  for (std::size_t i = 0; i < level; ++i) {
    const bool last = i + 1 == level;
    if (!kLevels[i].pool_after) continue;
    if (last && config.pool_position == PoolPosition::after_fusion) continue;
    if (can_pool(s)) s = pool(s);
  }
  const ConvGeometry same{1, 1};
  if (config.saliency_depth == 3) s = relu(conv_layer(p, "sal.conv2", s, same));
  return sigmoid(conv_layer(p, "sal.conv" + std::to_string(config.saliency_depth), s, same));
}

}  // namespace

ForwardResult forward(Tape& tape, const BoundParameters& p, const NetworkConfig& config,
                      const Tensor& image, const SaliencyMap* saliency, bool record_fusion_input) {
  if (image.rank() != 3 || image.dim(0) != 3 || image.dim(1) != config.input_height ||
      image.dim(2) != config.input_width) {
    throw ShapeError("forward: image " + shape_string(image.shape()) + " does not match the configured input");
  }
  if (config.uses_saliency()) {
    if (!saliency) throw std::invalid_argument(to_string(config.variant) + " requires a saliency map");
    if (saliency->height() != config.input_height || saliency->width() != config.input_width) {
      throw ShapeError("forward: saliency map size does not match the image");
    }
  }

  ForwardResult result;
  // RGB enters centred on mid-grey; with all-positive inputs the deep ReLU
  // stack maps every image to nearly the same direction at initialization.
  std::vector<Real> input(image.values().begin(), image.values().end());
  for (Real& v : input) v -= kInputCentre;
  Var x;
  if (config.variant == Variant::early_fusion) {
    input.insert(input.end(), saliency->values().begin(), saliency->values().end());
    x = tape.constant(Tensor({4, config.input_height, config.input_width}, std::move(input)));
  } else {
    x = tape.constant(Tensor(image.shape(), std::move(input)));
  }

  const auto level = static_cast<std::size_t>(config.fusion_level);
  for (std::size_t i = 0; i < 5; ++i) {
    const ConvLevel& l = kLevels[i];
    x = relu(conv_layer(p, "conv" + std::to_string(i + 1), x, l.geometry));
    bool pool_pending = l.pool_after && can_pool(x);
    if (i + 1 != level) {
      if (pool_pending) x = pool(x);
      continue;
    }
    if (config.variant == Variant::delayed_fusion) {
      if (pool_pending && config.pool_position == PoolPosition::before_fusion) {
        x = pool(x);
        pool_pending = false;
      }
      if (record_fusion_input) result.fusion_input = x;
      Var m = saliency_branch(tape, p, config, *saliency);
      if (m.shape()[1] != x.shape()[1] || m.shape()[2] != x.shape()[2]) {
        throw std::logic_error("saliency branch resolution differs from the fusion features");
      }
      result.modulation = m;
      x = modulate(x, m, config.skip);
    } else if (record_fusion_input) {
      result.fusion_input = x;
    }
    if (pool_pending) x = pool(x);
  }

  x = relu(fully_connected(x, param(p, "fc6.weight"), param(p, "fc6.bias")));
  x = relu(fully_connected(x, param(p, "fc7.weight"), param(p, "fc7.bias")));
  result.logits = fully_connected(x, param(p, "fc8.weight"), param(p, "fc8.bias"));
  return result;
}

}  // namespace salmod

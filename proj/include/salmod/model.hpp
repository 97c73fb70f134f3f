#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "salmod/layers.hpp"
#include "salmod/saliency.hpp"
#include "salmod/tape.hpp"

namespace salmod {

enum class Variant { baseline_rgb, early_fusion, delayed_fusion };
enum class PoolPosition { before_fusion, after_fusion };
enum class InitMode { none, scratch, pretrained };

std::string to_string(Variant v);
std::string to_string(PoolPosition p);
std::string to_string(InitMode m);
Variant parse_variant(const std::string& s);
PoolPosition parse_pool_position(const std::string& s);
InitMode parse_init_mode(const std::string& s);

/// Architecture of the two-branch MiniNet (5 conv + 3 FC) and its variants.
struct NetworkConfig {
  Variant variant = Variant::delayed_fusion;
  int fusion_level = 2;      // 1..5, conv layer whose output is modulated
  int saliency_depth = 2;    // S2 or S3
  Real saliency_width = 1.0; // fraction of the hidden saliency channels kept
  bool skip = true;
  PoolPosition pool_position = PoolPosition::after_fusion;
  std::size_t num_classes = 20;
  std::size_t input_height = 64;
  std::size_t input_width = 64;
  InitMode init = InitMode::none;
  bool freeze_saliency = false;

  bool uses_saliency() const { return variant != Variant::baseline_rgb; }
  bool has_saliency_branch() const { return variant == Variant::delayed_fusion; }
  /// Throws std::invalid_argument on inconsistent settings.
  void validate() const;
  /// Stable human-readable identifier, e.g. "delayed_L2_S2_w100_skip_after".
  std::string name() const;
  friend bool operator==(const NetworkConfig&, const NetworkConfig&) = default;
};

/// Pool placement that matches the unmodified base network for variants
/// without a fusion point, after_fusion otherwise.
PoolPosition default_pool_position(Variant v);

/// One learnable layer of the network, in forward order.
struct LayerSpec {
  std::string name;  // e.g. "conv3", "sal.conv1", "fc8"
  bool conv = true;
  std::size_t in = 0, out = 0, kernel = 0;
  ConvGeometry geometry;

  Shape weight_shape() const;
  std::size_t fan_in() const;
  std::size_t fan_out() const;
  Real xavier_bound() const;
};

std::vector<LayerSpec> layer_plan(const NetworkConfig& config);
std::size_t saliency_hidden_channels(const NetworkConfig& config);
/// Product of strides between the input image and the pre-fusion features.
std::size_t fusion_stride(const NetworkConfig& config);

inline constexpr const char* kClassifierLayer = "fc8";
/// Subtracted from every RGB value before conv1.
inline constexpr Real kInputCentre = 0.5;

struct ModelState {
  std::map<std::string, Tensor> params;  // "<layer>.weight" / "<layer>.bias"
  std::map<std::string, std::string> provenance;

  std::size_t parameter_count(const std::string& prefix = "") const;
  bool all_finite() const;
  friend bool operator==(const ModelState& a, const ModelState& b) { return a.params == b.params; }
};

/// Xavier-uniform weights, zero biases. Every layer draws from its own stream
/// derived from (seed, layer name), so adding a branch never perturbs the
/// initialization of the shared layers.
ModelState build(const NetworkConfig& config, std::uint64_t seed);

/// Fresh model for `target` that copies every compatible tensor of `source`
/// except the classifier; early-fusion conv1 inherits the RGB input slices.
ModelState transfer(const ModelState& source, const NetworkConfig& target, std::uint64_t seed,
                    const std::string& provenance);

using BoundParameters = std::map<std::string, Var>;
/// Parameters whose name starts with one of frozen_prefixes take no gradient.
BoundParameters bind_parameters(Tape& tape, const ModelState& state,
                     const std::vector<std::string>& frozen_prefixes = {});
bool is_frozen(const std::string& name, const std::vector<std::string>& frozen_prefixes);

struct ForwardResult {
  Var logits;
  /// RGB features entering the fusion point (for baselines: the same layer).
  std::optional<Var> fusion_input;
  /// Saliency-branch output, delayed fusion only.
  std::optional<Var> modulation;
};

/// saliency may be null for baseline_rgb.
ForwardResult forward(Tape& tape, const BoundParameters& params, const NetworkConfig& config,
                      const Tensor& image, const SaliencyMap* saliency,
                      bool record_fusion_input = false);

}  // namespace salmod

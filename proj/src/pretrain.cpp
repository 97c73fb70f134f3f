#include "salmod/pretrain.hpp"

#include <stdexcept>

#include "salmod/rng.hpp"

namespace salmod {

void attach_saliency(Dataset& data, const SaliencyGenerator& generator) {
  for (Sample& s : data.samples) s.saliency = generator(s);
}

Hyperparams default_pretrain_hyper() {
  Hyperparams h;
  h.epochs = 10;
  // The target decay holds a freshly initialized 8-layer net on its
  // loss plateau for thousands of steps; the base task needs a lighter one.
  h.weight_decay = 0.0005;
  return h;
}

namespace {

NetworkConfig on_base(NetworkConfig config, const Dataset& base) {
  config.num_classes = base.num_classes;
  config.init = InitMode::none;
  config.freeze_saliency = false;
  return config;
}

// Layers the second stage keeps at their stage-1 values.
TrainOptions second_stage_options(const NetworkConfig& config) {
  TrainOptions options;
  if (config.variant != Variant::early_fusion) {
    for (int l = 1; l <= config.fusion_level; ++l) options.frozen_prefixes.push_back("conv" + std::to_string(l) + ".");
  }
  return options;
}

std::vector<std::size_t> all_ids(const Dataset& d) {
  std::vector<std::size_t> ids(d.samples.size());
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = i;
  return ids;
}

}  // namespace

ModelState pretrain_backbone(const Dataset& base, const NetworkConfig& target, const Hyperparams& hyper,
                             std::uint64_t seed) {
  NetworkConfig config = on_base(target, base);
  config.variant = Variant::baseline_rgb;
  config.pool_position = PoolPosition::before_fusion;
  ModelState start = build(config, derive_seed(seed, "backbone-init"));
  ModelState out =
      train(std::move(start), config, base, all_ids(base), hyper, derive_seed(seed, "backbone-train")).state;
  for (auto& [layer, how] : out.provenance) how = "base-task";
  return out;
}

ModelState pretrain_joint(const Dataset& base, const ModelState& backbone, const NetworkConfig& target,
                          const Hyperparams& hyper, std::uint64_t seed) {
  if (!target.uses_saliency()) throw std::invalid_argument("joint pretraining needs a saliency variant");
  const NetworkConfig config = on_base(target, base);
  ModelState start = transfer(backbone, config, derive_seed(seed, "joint-init"), "base-task");
  for (const char* part : {".weight", ".bias"}) {
    const std::string name = std::string(kClassifierLayer) + part;
    start.params.at(name) = backbone.params.at(name);
  }
  start.provenance[kClassifierLayer] = "base-task";

  ModelState out = train(std::move(start), config, base, all_ids(base), hyper,
                         derive_seed(seed, "joint-train"), second_stage_options(config))
                       .state;
  for (auto& [layer, how] : out.provenance) how = "base-task-joint";
  return out;
}

ModelState pretrain_matched(const Dataset& base, const ModelState& backbone, const NetworkConfig& target,
                            const Hyperparams& hyper, std::uint64_t seed) {
  NetworkConfig config = on_base(target, base);
  const TrainOptions options = second_stage_options(config);
  config.variant = Variant::baseline_rgb;
  config.pool_position = PoolPosition::before_fusion;
  ModelState out =
      train(backbone, config, base, all_ids(base), hyper, derive_seed(seed, "joint-train"), options).state;
  for (auto& [layer, how] : out.provenance) how = "base-task";
  return out;
}

ModelState pretrain_protocol(const Dataset& base, const NetworkConfig& config, InitMode mode,
                             std::uint64_t seed, const Hyperparams& hyper,
                             const SaliencyGenerator* generator) {
  config.validate();
  const std::uint64_t target_seed = derive_seed(seed, "target-init");
  if (mode == InitMode::none) return build(config, target_seed);
  if (mode == InitMode::pretrained && !generator) {
    throw std::invalid_argument("init=pretrained requires a saliency generator for the base task");
  }
  const ModelState backbone = pretrain_backbone(base, config, hyper, seed);
  if (mode == InitMode::scratch || !config.uses_saliency()) {
    return transfer(pretrain_matched(base, backbone, config, hyper, seed), config, target_seed, "base-task");
  }
  Dataset with_maps = base;
  attach_saliency(with_maps, *generator);
  const ModelState joint = pretrain_joint(with_maps, backbone, config, hyper, seed);
  return transfer(joint, config, target_seed, "base-task-joint");
}

InitFn make_init(const NetworkConfig& config, const ModelState* source, const std::string& provenance) {
  if (!source) return [config](std::uint64_t seed) { return build(config, seed); };
  return [config, source, provenance](std::uint64_t seed) {
    return transfer(*source, config, seed, provenance);
  };
}

}  // namespace salmod

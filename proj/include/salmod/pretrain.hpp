#pragma once

#include <cstdint>
#include <functional>

#include "salmod/data.hpp"
#include "salmod/model.hpp"
#include "salmod/train.hpp"

namespace salmod {

using SaliencyGenerator = std::function<SaliencyMap(const Sample&)>;

/// Fills every sample's saliency map from the generator.
void attach_saliency(Dataset& data, const SaliencyGenerator& generator);

/// Pretraining schedule on the base task: fewer epochs than finetuning (the
/// base task is much larger) and lighter weight decay.
Hyperparams default_pretrain_hyper();

/// Stage 1: the RGB-only network trained on the base task.
ModelState pretrain_backbone(const Dataset& base, const NetworkConfig& target, const Hyperparams& hyper,
                             std::uint64_t seed);

/// Stage 2: the target architecture trained on the base task (samples must
/// carry saliency). Starts from the stage-1 weights including its classifier;
/// for delayed fusion the RGB layers up to the fusion level stay frozen, so
/// they match stage 1 exactly.
ModelState pretrain_joint(const Dataset& base, const ModelState& backbone, const NetworkConfig& target,
                          const Hyperparams& hyper, std::uint64_t seed);

/// The RGB-only counterpart of pretrain_joint: same start, frozen layers,
/// schedule and seed, no saliency branch. Baselines and scratch branches start
/// from it, so every arm of a comparison sees the same base-task budget.
ModelState pretrain_matched(const Dataset& base, const ModelState& backbone, const NetworkConfig& target,
                            const Hyperparams& hyper, std::uint64_t seed);

/// Weights a target model starts from: mode=none is a plain Xavier build;
/// scratch transfers the matched RGB network (saliency layers stay Xavier);
/// pretrained transfers the stage-2 network. The classifier is always fresh.
ModelState pretrain_protocol(const Dataset& base, const NetworkConfig& config, InitMode mode,
                             std::uint64_t seed, const Hyperparams& hyper,
                             const SaliencyGenerator* generator);

/// Per-cell initializer: Xavier build when source is null, else transfer.
InitFn make_init(const NetworkConfig& config, const ModelState* source, const std::string& provenance);

}  // namespace salmod

#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <vector>

#include "salmod/config.hpp"
#include "salmod/pretrain.hpp"

namespace salmod {

/// Map generator for a computed saliency method; empty for none/import/index.
std::optional<SaliencyGenerator> make_generator(const ExperimentConfig& config);

/// Dataset described by the config: the ingested folder, or the in-memory
/// generator output. The class count of the network follows the data.
Dataset load_dataset(const ExperimentConfig& config);
SplitPlan dataset_split(const ExperimentConfig& config, const Dataset& data);

/// Attaches maps from the configured source. Imported maps are resized to
/// the image size when needed (logged to log, if given) and min-max normalized.
void attach_configured_saliency(const ExperimentConfig& config, Dataset& data, std::ostream* log);

/// The base-task dataset used for pretraining.
Dataset base_dataset(const ExperimentConfig& config);

void cmd_gen_data(const ExperimentConfig& config, std::ostream& out);
void cmd_gen_saliency(ExperimentConfig config, std::ostream& out);
void cmd_run(ExperimentConfig config, std::ostream& out);
void cmd_analyze(const std::vector<std::filesystem::path>& reports, bool correlation,
                 const std::filesystem::path& out_dir, std::ostream& out);

}  // namespace salmod

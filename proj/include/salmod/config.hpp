#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "salmod/data.hpp"
#include "salmod/model.hpp"
#include "salmod/pretrain.hpp"
#include "salmod/train.hpp"

namespace salmod {

enum class SaliencySource { none, white, center, itti_koch, bms, oracle, import, index };

std::string to_string(SaliencySource s);
SaliencySource parse_saliency_source(const std::string& s);

class ConfigError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Everything one CLI invocation needs. Plain text form: one "key = value"
/// per line with dotted keys; '#' starts a comment.
struct ExperimentConfig {
  /// Dataset folder (index.csv + images). Empty: generate in memory from `data`.
  std::filesystem::path data_folder;
  DatasetSpec data;

  NetworkConfig net;
  Hyperparams hyper;

  /// Base-task schedule for both pretraining stages.
  Hyperparams pretrain_hyper = default_pretrain_hyper();
  std::size_t pretrain_classes = 50;
  std::size_t pretrain_samples_per_class = 100;

  SaliencySource saliency = SaliencySource::none;
  Real saliency_quality = 1.0;
  std::filesystem::path saliency_path;  // import source folder
  std::size_t bms_thresholds = 16;
  std::uint64_t saliency_seed = 1;

  std::vector<std::size_t> k_list{1, 2, 3, 5, 10, 15, 20, 25, 30, kFullPool};
  std::size_t seeds = 5;
  std::uint64_t protocol_seed = 1;
  bool gradient_energy = false;

  std::filesystem::path output_dir = "salmod_out";

  /// Consistency and path checks; the dataset folder is only required to
  /// exist when need_dataset is set.
  void validate(bool need_dataset) const;

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&);
};

ExperimentConfig parse_config(const std::string& text, const std::string& origin = "<config>");
ExperimentConfig load_config(const std::filesystem::path& path);
/// Every key, fixed order; parse_config(serialize(c)) == c.
std::string serialize(const ExperimentConfig& config);

std::vector<std::size_t> parse_k_list(const std::string& text);
std::string format_k_list(const std::vector<std::size_t>& ks);

}  // namespace salmod

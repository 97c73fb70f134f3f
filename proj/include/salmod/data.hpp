#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "salmod/imaging.hpp"
#include "salmod/saliency.hpp"
#include "salmod/tensor.hpp"

namespace salmod {

struct Sample {
  std::string name;
  Tensor image;  // [3,H,W] in [0,1]
  std::size_t label = 0;
  Mask mask;
  BBox bbox;
  std::optional<SaliencyMap> saliency;
};

/// Which generator family a dataset draws from. The two families use disjoint
/// object shapes, so a base-task pretraining set never shares classes with the
/// fine-grained target task.
enum class TaskFamily { fine_grained, base };

struct DatasetSpec {
  std::size_t num_classes = 20;
  std::size_t samples_per_class = 40;
  std::size_t height = 64;
  std::size_t width = 64;
  /// Inter-class texture spacing in (0,1]; 1 = maximally distinct classes.
  Real subtlety = 0.35;
  /// Target fraction of background pixels covered by distractor shapes.
  Real clutter = 0.3;
  std::uint64_t seed = 1;
  TaskFamily family = TaskFamily::fine_grained;

  /// Throws std::invalid_argument naming the violated constraint.
  void validate() const;
  friend bool operator==(const DatasetSpec&, const DatasetSpec&) = default;
};

/// The abundant pretraining task paired with a target spec: 50 classes x 100
/// samples from the base family at the same image size.
DatasetSpec base_task_spec(const DatasetSpec& target);

inline constexpr std::size_t kTestPerClass = 5;
inline constexpr std::size_t kValPerClass = 5;
/// k value selecting every pooled training sample of a class (the "K" column).
inline constexpr std::size_t kFullPool = std::numeric_limits<std::size_t>::max();

struct ClassSplit {
  std::vector<std::size_t> test;
  std::vector<std::size_t> val;
  std::vector<std::size_t> pool;
};

/// Fixed per-class test/validation sets and the ordered training pool.
struct SplitPlan {
  std::vector<ClassSplit> classes;

  std::vector<std::size_t> test_ids() const;
  std::vector<std::size_t> val_ids() const;
  std::size_t min_pool() const;
};

struct Dataset {
  std::size_t num_classes = 0;
  std::vector<Sample> samples;
};

struct GeneratedDataset {
  Dataset data;
  SplitPlan plan;
};

/// Deterministic in spec; each sample's randomness comes from (seed, sample id)
/// only, so generation order cannot change the result.
GeneratedDataset generate(const DatasetSpec& spec);
Sample generate_sample(const DatasetSpec& spec, std::size_t label, std::size_t index);

/// Seeded per-class shuffle: 5 test, 5 validation, remainder pooled.
SplitPlan make_split(const Dataset& data, std::uint64_t seed);

/// First k ids of a seeded shuffle of every class pool (k = kFullPool takes
/// the whole pool). Nested in k for a fixed seed.
std::vector<std::size_t> subset(const SplitPlan& plan, std::size_t k, std::uint64_t seed);

std::string k_label(std::size_t k);

/// Index columns: image,label,mask,bbox,saliency (paths relative to the root).
inline constexpr const char* kIndexHeader = "image,label,mask,bbox,saliency";
inline constexpr const char* kIndexFile = "index.csv";

std::string format_bbox(const BBox& box);
BBox parse_bbox(const std::string& text);

/// Loads an index-described folder. Images are resized to (height, width)
/// when both are nonzero.
Dataset ingest_folder(const std::filesystem::path& root, std::size_t height = 0,
                      std::size_t width = 0);

/// Writes images (P6), masks (P5) and the index. Existing saliency maps are
/// written to saliency/ and referenced from the index.
void write_dataset(const Dataset& data, const std::filesystem::path& root);

}  // namespace salmod

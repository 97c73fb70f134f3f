#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "salmod/data.hpp"
#include "salmod/model.hpp"

namespace salmod {

struct Hyperparams {
  std::size_t epochs = 40;
  Real learning_rate = 0.01;
  Real weight_decay = 0.003;
  Real momentum = 0.9;
  std::size_t batch_size = 16;

  void validate() const;
  friend bool operator==(const Hyperparams&, const Hyperparams&) = default;
};

class DivergenceError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct TrainOptions {
  /// Parameters whose name starts with one of these stay fixed.
  std::vector<std::string> frozen_prefixes;
  /// Record the per-epoch gradient-energy fraction inside the bounding box.
  bool gradient_energy = false;
};

struct TrainResult {
  ModelState state;
  std::vector<Real> epoch_loss;
  std::vector<Real> epoch_gradient_fraction;  // empty unless requested
};

/// Minibatch SGD with momentum and L2 weight decay on softmax cross-entropy:
///   v = momentum * v + (mean batch gradient + weight_decay * w);  w -= lr * v
/// The epoch order is a seeded shuffle of ids. Throws DivergenceError when the
/// loss stops being finite.
TrainResult train(ModelState model, const NetworkConfig& config, const Dataset& data,
                  const std::vector<std::size_t>& ids, const Hyperparams& hyper, std::uint64_t seed,
                  const TrainOptions& options = {});

/// Frozen prefixes implied by the network config (the saliency branch when
/// freeze_saliency is set).
std::vector<std::string> config_frozen_prefixes(const NetworkConfig& config);

std::size_t predict(const ModelState& model, const NetworkConfig& config, const Sample& sample);

/// Percentage of ids whose argmax prediction equals the label.
Real evaluate(const ModelState& model, const NetworkConfig& config, const Dataset& data,
              const std::vector<std::size_t>& ids);

/// Image-space box mapped onto a feature grid of the given stride, rounding
/// outward and clipping to the grid.
BBox project_bbox(const BBox& box, std::size_t stride, std::size_t grid_h, std::size_t grid_w);

/// Share of sum |grad| over [C,h,w] that falls on cells inside the box. A zero
/// gradient falls back to the box's area share of the grid (and is logged).
Real energy_fraction(const Tensor& grad, const BBox& projected);

/// One forward/backward pass on the classification loss, measured at the
/// features entering the fusion point.
Real gradient_energy_fraction(const ModelState& model, const NetworkConfig& config,
                              const Sample& sample);

// Scarce-data protocol.

struct ProtocolSpec {
  std::vector<std::size_t> k_list{1, 2, 3, 5, 10, 15, 20, 25, 30, kFullPool};
  std::size_t seeds = 5;
  std::uint64_t seed = 1;
  bool gradient_energy = false;
  /// Upper bound on concurrent cells; 0 = SALMOD_THREADS or hardware concurrency.
  std::size_t threads = 0;
  bool keep_states = false;
};

struct CellResult {
  std::size_t k = 0;
  std::size_t seed = 0;  // index in [0, seeds)
  Real accuracy = 0;
  std::vector<Real> epoch_loss;
  std::vector<Real> epoch_gradient_fraction;
  std::vector<std::string> provenance;
  std::optional<ModelState> state;
};

struct KSummary {
  std::size_t k = 0;
  Real mean = 0;
  Real std = 0;  // population standard deviation over seeds
};

struct RunReport {
  std::string name;
  std::vector<CellResult> cells;  // ordered by (k-list position, seed)

  std::vector<KSummary> summary() const;
  Real mean_accuracy(std::size_t k) const;
  /// Mean over cells of the per-cell epoch-averaged gradient fraction.
  Real mean_gradient_fraction() const;
  /// Per-epoch mean over cells.
  std::vector<Real> gradient_series() const;
};

/// Initial weights of one cell from its derived seed.
using InitFn = std::function<ModelState(std::uint64_t seed)>;

/// Seeds of cell s: everything a cell draws derives from cell_seed(spec.seed, s).
std::uint64_t cell_seed(std::uint64_t base, std::size_t seed_index);

std::size_t resolve_threads(std::size_t requested);

/// For every k and seed index: init(derive_seed(cell, "init")), train on
/// subset(plan, k, derive_seed(cell, "subset")), evaluate on the test split.
/// Cells run in parallel; the report does not depend on the thread count.
RunReport scarce_protocol(const Dataset& data, const SplitPlan& plan, const NetworkConfig& config,
                          const Hyperparams& hyper, const ProtocolSpec& spec, const InitFn& init);

std::string format_real(Real v);

/// "k,seed,accuracy"
void write_results_csv(const RunReport& report, const std::filesystem::path& path);
/// "k,mean,std"
void write_summary_csv(const RunReport& report, const std::filesystem::path& path);
/// "epoch,fraction_saliency,fraction_baseline"
void write_gradient_csv(const RunReport& saliency, const RunReport& baseline,
                        const std::filesystem::path& path);

}  // namespace salmod

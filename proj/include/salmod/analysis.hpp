#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "salmod/data.hpp"
#include "salmod/train.hpp"

namespace salmod {

/// Product-moment correlation. Throws std::invalid_argument for unequal or
/// too short inputs and for zero variance in either argument.
Real pearson(const std::vector<Real>& xs, const std::vector<Real>& ys);

struct CorrelationPoint {
  std::string method;
  Real nss = 0;
  Real accuracy = 0;
};

struct CorrelationStudy {
  std::vector<CorrelationPoint> points;
  Real coefficient = 0;
};

/// Needs at least 3 points.
CorrelationStudy make_correlation(std::vector<CorrelationPoint> points);

inline constexpr std::size_t kFixationsPerImage = 64;

/// Mean NSS of the samples' saliency maps over ids, fixations drawn from the
/// foreground masks.
Real mean_nss(const Dataset& data, const std::vector<std::size_t>& ids, std::uint64_t seed);

/// Oracle maps of the given quality for every sample.
void attach_oracle(Dataset& data, Real quality, std::uint64_t seed);

/// For each quality level: oracle maps, the scarce protocol at spec.k_list
/// (one k), NSS over the test images. init_for(q) supplies the per-cell
/// initializer for a level.
CorrelationStudy correlation_study(const Dataset& data, const SplitPlan& plan, const NetworkConfig& config,
                                   const Hyperparams& hyper, const std::vector<Real>& qualities,
                                   const ProtocolSpec& spec,
                                   const std::function<InitFn(Real quality)>& init_for,
                                   std::uint64_t map_seed);

struct AblationRow {
  std::string name;
  std::vector<Real> cells;  // mean accuracy per k
  Real avg = 0;
};

struct AblationTable {
  std::vector<std::size_t> k_list;
  std::vector<AblationRow> rows;  // sorted by name
};

/// Throws std::invalid_argument when the reports cover different k lists.
AblationTable ablation_table(const std::vector<RunReport>& reports);

/// "config,<k>...,AVG"
void write_ablation_csv(const AblationTable& table, const std::filesystem::path& path);
std::string format_ablation(const AblationTable& table);

/// Reads results.csv ("k,seed,accuracy"); a directory argument means its results.csv.
RunReport load_report(const std::filesystem::path& path);

/// Accuracy against k, one polyline per row.
std::string accuracy_plot_svg(const AblationTable& table);
/// NSS against accuracy with the least-squares line.
std::string correlation_plot_svg(const CorrelationStudy& study);

/// "method,mean_nss,mean_accuracy" plus a trailing "pearson,<r>," row.
void write_correlation_csv(const CorrelationStudy& study, const std::filesystem::path& path);

}  // namespace salmod

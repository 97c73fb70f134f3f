#include "salmod/commands.hpp"

#include <fstream>
#include <iostream>
#include <sstream>

#include "salmod/analysis.hpp"
#include "salmod/checkpoint.hpp"
#include "salmod/rng.hpp"

namespace salmod {

namespace fs = std::filesystem;

std::optional<SaliencyGenerator> make_generator(const ExperimentConfig& c) {
  const std::uint64_t seed = c.saliency_seed;
  switch (c.saliency) {
    case SaliencySource::white:
      return [](const Sample& s) { return white_map(s.image.dim(1), s.image.dim(2)); };
    case SaliencySource::center:
      return [](const Sample& s) { return center_map(s.image.dim(1), s.image.dim(2)); };
    case SaliencySource::itti_koch:
      return [](const Sample& s) { return itti_koch_map(s.image); };
    case SaliencySource::bms:
      return [seed, n = c.bms_thresholds](const Sample& s) { return bms_map(s.image, n, derive_seed(seed, s.name)); };
    case SaliencySource::oracle:
      return [seed, q = c.saliency_quality](const Sample& s) {
        return oracle_map(s.mask, q, derive_seed(seed, s.name));
      };
    case SaliencySource::none:
    case SaliencySource::import:
    case SaliencySource::index:
      break;
  }
  return std::nullopt;
}

Dataset load_dataset(const ExperimentConfig& c) {
  if (c.data_folder.empty()) return generate(c.data).data;
  return ingest_folder(c.data_folder, c.data.height, c.data.width);
}

SplitPlan dataset_split(const ExperimentConfig& c, const Dataset& data) {
  return make_split(data, derive_seed(c.data.seed, "split"));
}

void attach_configured_saliency(const ExperimentConfig& c, Dataset& data, std::ostream* log) {
  if (auto gen = make_generator(c)) {
    attach_saliency(data, *gen);
    return;
  }
  if (c.saliency == SaliencySource::import) {
    for (Sample& s : data.samples) {
      const fs::path path = c.saliency_path / (s.name + ".pgm");
      if (!fs::exists(path)) throw std::runtime_error(path.string() + ": no map for image '" + s.name + "'");
      LoadedMap loaded = load_map(path, s.image.dim(1), s.image.dim(2));
      if (loaded.resized && log) {
        *log << s.name << ": resized " << path.string() << " to " << s.image.dim(2) << "x" << s.image.dim(1) << '\n';
      }
      s.saliency = SaliencyMap(s.image.dim(1), s.image.dim(2), minmax_normalize(loaded.map.values()));
    }
    return;
  }
  if (c.saliency == SaliencySource::index) {
    for (const Sample& s : data.samples) {
      if (!s.saliency) throw std::runtime_error("sample '" + s.name + "' has no saliency map in the index");
    }
  }
}

Dataset base_dataset(const ExperimentConfig& c) {
  DatasetSpec spec = base_task_spec(c.data);
  spec.num_classes = c.pretrain_classes;
  spec.samples_per_class = c.pretrain_samples_per_class;
  return generate(spec).data;
}

void cmd_gen_data(const ExperimentConfig& c, std::ostream& out) {
  if (c.data_folder.empty()) throw ConfigError("gen-data needs data.folder");
  c.data.validate();
  const GeneratedDataset g = generate(c.data);
  fs::create_directories(c.data_folder);
  write_dataset(g.data, c.data_folder);
  out << "wrote " << g.data.samples.size() << " samples (" << g.data.num_classes << " classes) to "
      << c.data_folder.string() << '\n';
}

void cmd_gen_saliency(ExperimentConfig c, std::ostream& out) {
  if (c.data_folder.empty()) throw ConfigError("gen-saliency needs data.folder");
  if (c.saliency == SaliencySource::none || c.saliency == SaliencySource::index) {
    throw ConfigError("gen-saliency needs a method: white, center, itti_koch, bms, oracle or import");
  }
  c.validate(true);
  Dataset data = ingest_folder(c.data_folder);
  std::ofstream log;
  if (c.saliency == SaliencySource::import) {
    log.open(c.data_folder / "saliency_import.log", std::ios::binary);
    if (!log) throw std::runtime_error("cannot write the import log in " + c.data_folder.string());
  }
  attach_configured_saliency(c, data, log.is_open() ? &log : nullptr);
  write_dataset(data, c.data_folder);
  out << "wrote " << data.samples.size() << " " << to_string(c.saliency) << " maps to "
      << (c.data_folder / "saliency").string() << '\n';
}

namespace {

std::string source_label(const ExperimentConfig& c) {
  std::string s = to_string(c.saliency);
  if (c.saliency == SaliencySource::oracle) s += "_q" + format_real(c.saliency_quality);
  return s;
}

}  // namespace

void cmd_run(ExperimentConfig c, std::ostream& out) {
  c.validate(true);
  if (c.gradient_energy && !c.net.uses_saliency()) {
    throw ConfigError("gradient-energy comparison needs a saliency variant (it runs the baseline alongside)");
  }
  Dataset data = load_dataset(c);
  c.net.num_classes = data.num_classes;
  c.net.validate();
  fs::create_directories(c.output_dir / "checkpoints");

  std::ofstream import_log;
  if (c.saliency == SaliencySource::import) import_log.open(c.output_dir / "saliency_import.log", std::ios::binary);
  if (c.net.uses_saliency() || c.saliency != SaliencySource::none) {
    attach_configured_saliency(c, data, import_log.is_open() ? &import_log : nullptr);
  }
  const SplitPlan plan = dataset_split(c, data);

  std::optional<ModelState> backbone, joint;
  if (c.net.init != InitMode::none) {
    const Dataset base = base_dataset(c);
    const Hyperparams& ph = c.pretrain_hyper;
    const std::uint64_t pseed = derive_seed(c.protocol_seed, "pretrain");
    out << "pretraining on the base task (" << base.samples.size() << " samples)\n";
    const ModelState stage1 = pretrain_backbone(base, c.net, ph, pseed);
    if (c.net.init == InitMode::pretrained && c.net.uses_saliency()) {
      Dataset with_maps = base;
      attach_saliency(with_maps, *make_generator(c));
      joint = pretrain_joint(with_maps, stage1, c.net, ph, pseed);
    }
    // Skipped when nothing starts from it.
    if (!joint || c.gradient_energy) backbone = pretrain_matched(base, stage1, c.net, ph, pseed);
  }
  const ModelState* source = joint ? &*joint : backbone ? &*backbone : nullptr;
  const std::string provenance = joint ? "base-task-joint" : "base-task";

  ProtocolSpec spec;
  spec.k_list = c.k_list;
  spec.seeds = c.seeds;
  spec.seed = c.protocol_seed;
  spec.gradient_energy = c.gradient_energy;
  spec.keep_states = true;
  const RunReport report = scarce_protocol(data, plan, c.net, c.hyper, spec, make_init(c.net, source, provenance));

  {
    std::ofstream cfg(c.output_dir / "config.cfg", std::ios::binary);
    cfg << serialize(c);
  }
  write_results_csv(report, c.output_dir / "results.csv");
  write_summary_csv(report, c.output_dir / "summary.csv");
  // The digest identifies the experiment, not where its results went.
  ExperimentConfig located = c;
  located.output_dir.clear();
  const std::uint64_t digest = fnv1a64(serialize(located));
  for (const CellResult& cell : report.cells) {
    const std::string name = "k" + k_label(cell.k) + "_seed" + std::to_string(cell.seed) + ".ckpt";
    save_checkpoint(*cell.state, digest, c.output_dir / "checkpoints" / name);
  }
  if (!report.cells.empty()) {
    std::ofstream prov(c.output_dir / "provenance.csv", std::ios::binary);
    prov << "layer,source\n";
    for (const std::string& p : report.cells.front().provenance) prov << p.substr(0, p.find('=')) << ',' << p.substr(p.find('=') + 1) << '\n';
  }
  if (c.saliency != SaliencySource::none) {
    std::ofstream q(c.output_dir / "saliency_quality.csv", std::ios::binary);
    q << "method,mean_nss\n" << source_label(c) << ',' << format_real(mean_nss(data, plan.test_ids(), c.saliency_seed)) << '\n';
  }
  if (c.gradient_energy) {
    NetworkConfig base_net = c.net;
    base_net.variant = Variant::baseline_rgb;
    base_net.pool_position = PoolPosition::before_fusion;
    base_net.init = backbone ? InitMode::scratch : InitMode::none;
    base_net.freeze_saliency = false;
    const RunReport baseline =
        scarce_protocol(data, plan, base_net, c.hyper, spec, make_init(base_net, backbone ? &*backbone : nullptr, "base-task"));
    write_gradient_csv(report, baseline, c.output_dir / "gradient.csv");
  }

  out << report.name << '\n';
  for (const KSummary& s : report.summary()) {
    out << "  k=" << k_label(s.k) << "  mean " << format_real(s.mean) << "  std " << format_real(s.std) << '\n';
  }
  out << "results in " << c.output_dir.string() << '\n';
}

void cmd_analyze(const std::vector<fs::path>& paths, bool correlation, const fs::path& out_dir, std::ostream& out) {
  if (paths.empty()) throw std::invalid_argument("analyze needs at least one report");
  std::vector<RunReport> reports;
  for (const auto& p : paths) reports.push_back(load_report(p));
  const AblationTable table = ablation_table(reports);
  fs::create_directories(out_dir);
  write_ablation_csv(table, out_dir / "ablation.csv");
  {
    std::ofstream svg(out_dir / "accuracy_vs_k.svg", std::ios::binary);
    svg << accuracy_plot_svg(table);
  }
  out << format_ablation(table);

  if (correlation) {
    std::vector<CorrelationPoint> points;
    for (std::size_t i = 0; i < paths.size(); ++i) {
      const fs::path dir = fs::is_directory(paths[i]) ? paths[i] : paths[i].parent_path();
      std::ifstream q(dir / "saliency_quality.csv");
      std::string header, row;
      if (!q || !std::getline(q, header) || !std::getline(q, row)) {
        throw std::runtime_error((dir / "saliency_quality.csv").string() + ": missing saliency quality record");
      }
      const auto comma = row.find(',');
      if (comma == std::string::npos) throw std::runtime_error((dir / "saliency_quality.csv").string() + ": malformed");
      Real acc = 0;
      for (const CellResult& cell : reports[i].cells) acc += cell.accuracy;
      acc /= static_cast<Real>(reports[i].cells.size());
      points.push_back({row.substr(0, comma), std::stod(row.substr(comma + 1)), acc});
    }
    const CorrelationStudy study = make_correlation(std::move(points));
    write_correlation_csv(study, out_dir / "correlation.csv");
    std::ofstream svg(out_dir / "correlation.svg", std::ios::binary);
    svg << correlation_plot_svg(study);
    out << "pearson r = " << format_real(study.coefficient) << '\n';
  }
  out << "tables and plots in " << out_dir.string() << '\n';
}

}  // namespace salmod

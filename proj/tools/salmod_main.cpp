#include <CLI11.hpp>

#include <iostream>

#include "salmod/commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"salmod: saliency-modulated CNN experiments"};
  app.require_subcommand(1);

  std::string config_path;
  std::string method;
  double quality = -1;
  bool grad_energy = false;
  std::vector<std::string> reports;
  bool correlation = false;
  std::string out_dir = "salmod_analysis";

  auto* gen_data = app.add_subcommand("gen-data", "Write the synthetic dataset to data.folder");
  gen_data->add_option("--config", config_path, "Experiment config")->required()->check(CLI::ExistingFile);

  auto* gen_sal = app.add_subcommand("gen-saliency", "Compute or import saliency maps for data.folder");
  gen_sal->add_option("--config", config_path, "Experiment config")->required()->check(CLI::ExistingFile);
  gen_sal->add_option("--method", method, "white, center, itti_koch, bms, oracle or import")->required();
  gen_sal->add_option("--quality", quality, "Oracle quality in [0,1]")->check(CLI::Range(0.0, 1.0));

  auto* run = app.add_subcommand("run", "Run the scarce-data protocol");
  run->add_option("--config", config_path, "Experiment config")->required()->check(CLI::ExistingFile);
  run->add_flag("--grad-energy", grad_energy, "Also record gradient energy against the baseline");

  auto* analyze = app.add_subcommand("analyze", "Ablation table and plots from run outputs");
  analyze->add_option("--reports", reports, "Run output directories or results.csv files")->required();
  analyze->add_flag("--correlation", correlation, "NSS/accuracy correlation across the reports");
  analyze->add_option("--out", out_dir, "Output directory for tables and plots");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*analyze) {
      std::vector<std::filesystem::path> paths(reports.begin(), reports.end());
      salmod::cmd_analyze(paths, correlation, out_dir, std::cout);
      return 0;
    }
    salmod::ExperimentConfig config = salmod::load_config(config_path);
    if (*gen_data) {
      salmod::cmd_gen_data(config, std::cout);
    } else if (*gen_sal) {
      config.saliency = salmod::parse_saliency_source(method);
      if (quality >= 0) config.saliency_quality = quality;
      salmod::cmd_gen_saliency(config, std::cout);
    } else if (*run) {
      if (grad_energy) config.gradient_energy = true;
      salmod::cmd_run(config, std::cout);
    }
  } catch (const std::exception& e) {
    std::cerr << "salmod: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

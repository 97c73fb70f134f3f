#include <doctest.h>

#include <chrono>
#include <fstream>
#include <iterator>
#include <sstream>

#include "salmod/commands.hpp"
#include "temp_dir.hpp"

using namespace salmod;
using salmod::testing::TempDir;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::size_t line_count(const fs::path& p) {
  const std::string s = slurp(p);
  return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

ExperimentConfig smoke(const fs::path& root) {
  ExperimentConfig c;
  c.data.num_classes = 2;
  c.data.samples_per_class = 12;
  c.net.num_classes = 2;
  c.hyper.epochs = 2;
  c.k_list = {1, 2};
  c.seeds = 1;
  c.output_dir = root / "out";
  return c;
}

}  // namespace

TEST_CASE("gen-data writes the default 800-sample dataset reproducibly") {
  TempDir dir;
  ExperimentConfig c;
  c.data_folder = dir.path / "a";
  std::ostringstream out;
  cmd_gen_data(c, out);
  CHECK(line_count(c.data_folder / kIndexFile) == 801);
  c.data_folder = dir.path / "b";
  cmd_gen_data(c, out);
  CHECK(slurp(dir.path / "a" / kIndexFile) == slurp(dir.path / "b" / kIndexFile));
  const std::string name = "c7_3";
  CHECK(slurp(dir.path / "a" / "images" / (name + ".ppm")) == slurp(dir.path / "b" / "images" / (name + ".ppm")));
}

TEST_CASE("gen-data rejects too few samples per class") {
  TempDir dir;
  ExperimentConfig c;
  c.data_folder = dir.path;
  c.data.samples_per_class = 8;
  std::ostringstream out;
  CHECK_THROWS_WITH_AS(cmd_gen_data(c, out), doctest::Contains("samples_per_class"), std::invalid_argument);
}

TEST_CASE("gen-saliency writes white and oracle maps") {
  TempDir dir;
  ExperimentConfig c = smoke(dir.path);
  c.data_folder = dir.path / "d";
  std::ostringstream out;
  cmd_gen_data(c, out);

  c.saliency = SaliencySource::white;
  cmd_gen_saliency(c, out);
  Dataset d = ingest_folder(c.data_folder);
  for (const Sample& s : d.samples) {
    REQUIRE(s.saliency);
    for (Real v : s.saliency->values()) CHECK(v == 1.0);
  }
  const Raster r = read_netpbm(c.data_folder / "saliency" / (d.samples[0].name + ".pgm"));
  CHECK(std::all_of(r.bytes.begin(), r.bytes.end(), [](std::uint8_t b) { return b == 255; }));

  c.saliency = SaliencySource::oracle;
  cmd_gen_saliency(c, out);
  d = ingest_folder(c.data_folder);
  for (const Sample& s : d.samples) {
    const auto& v = s.saliency->values();
    const auto best = static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
    CHECK(s.mask.bits[best]);
  }
}

TEST_CASE("imported maps of another size are resized and logged") {
  TempDir dir;
  ExperimentConfig c = smoke(dir.path);
  c.data_folder = dir.path / "d";
  std::ostringstream out;
  cmd_gen_data(c, out);
  const Dataset d = ingest_folder(c.data_folder);
  fs::create_directories(dir.path / "maps");
  for (const Sample& s : d.samples) save_map(center_map(20, 20), dir.path / "maps" / (s.name + ".pgm"));
  c.saliency = SaliencySource::import;
  c.saliency_path = dir.path / "maps";
  cmd_gen_saliency(c, out);
  const std::string log = slurp(c.data_folder / "saliency_import.log");
  CHECK(line_count(c.data_folder / "saliency_import.log") == d.samples.size());
  CHECK(log.find("resized") != std::string::npos);
  const Dataset back = ingest_folder(c.data_folder);
  CHECK(back.samples[0].saliency->height() == 64);

  fs::remove(dir.path / "maps" / (d.samples[3].name + ".pgm"));
  CHECK_THROWS(cmd_gen_saliency(c, out));
}

TEST_CASE("run needs saliency for fusion variants") {
  TempDir dir;
  ExperimentConfig c = smoke(dir.path);
  c.net.variant = Variant::delayed_fusion;
  std::ostringstream out;
  CHECK_THROWS_AS(cmd_run(c, out), ConfigError);
}

TEST_CASE("smoke run of the baseline and a saliency model, then analyze") {
  TempDir dir;
  std::ostringstream out;
  const auto start = std::chrono::steady_clock::now();

  ExperimentConfig base = smoke(dir.path);
  base.net.variant = Variant::baseline_rgb;
  base.net.pool_position = PoolPosition::before_fusion;
  base.output_dir = dir.path / "baseline";
  cmd_run(base, out);
  CHECK(line_count(base.output_dir / "results.csv") == 3);
  CHECK(line_count(base.output_dir / "summary.csv") == 3);
  CHECK(fs::exists(base.output_dir / "checkpoints" / "k2_seed0.ckpt"));
  CHECK_FALSE(fs::exists(base.output_dir / "saliency_quality.csv"));

  ExperimentConfig sal = smoke(dir.path);
  sal.saliency = SaliencySource::oracle;
  sal.gradient_energy = true;
  sal.output_dir = dir.path / "oracle";
  cmd_run(sal, out);
  CHECK(line_count(sal.output_dir / "gradient.csv") == 3);
  CHECK(slurp(sal.output_dir / "provenance.csv").find("sal.conv1,xavier") != std::string::npos);
  CHECK(parse_config(slurp(sal.output_dir / "config.cfg")) == sal);

  cmd_analyze({base.output_dir, sal.output_dir}, false, dir.path / "an", out);
  CHECK(line_count(dir.path / "an" / "ablation.csv") == 3);
  CHECK(fs::exists(dir.path / "an" / "accuracy_vs_k.svg"));
  CHECK_THROWS(cmd_analyze({sal.output_dir, sal.output_dir}, true, dir.path / "an", out));

  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  CHECK(seconds < 60);
}

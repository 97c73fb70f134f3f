#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "salmod/data.hpp"
#include "salmod/pretrain.hpp"
#include "temp_dir.hpp"

using namespace salmod;
using salmod::testing::TempDir;

namespace {

DatasetSpec small_spec() {
  DatasetSpec s;
  s.num_classes = 3;
  s.samples_per_class = 14;
  s.height = 32;
  s.width = 32;
  return s;
}

}  // namespace

TEST_CASE("generation is deterministic and independent of order") {
  const DatasetSpec spec = small_spec();
  const GeneratedDataset a = generate(spec);
  const GeneratedDataset b = generate(spec);
  REQUIRE(a.data.samples.size() == 42);
  for (std::size_t i = 0; i < a.data.samples.size(); ++i) {
    CHECK(a.data.samples[i].image == b.data.samples[i].image);
    CHECK(a.data.samples[i].bbox == b.data.samples[i].bbox);
  }
  const Sample lone = generate_sample(spec, 2, 5);
  CHECK(lone.image == a.data.samples[2 * 14 + 5].image);

  DatasetSpec other = spec;
  other.seed = 2;
  CHECK_FALSE(generate(other).data.samples[0].image == a.data.samples[0].image);
}

TEST_CASE("generated samples have exact masks, boxes and pixel range") {
  const GeneratedDataset g = generate(small_spec());
  for (const Sample& s : g.data.samples) {
    CHECK(s.bbox == tight_bbox(s.mask));
    for (Real v : s.image.values()) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
}

TEST_CASE("split sizes and disjointness") {
  const GeneratedDataset g = generate(small_spec());
  const SplitPlan plan = make_split(g.data, 4);
  REQUIRE(plan.classes.size() == 3);
  std::set<std::size_t> seen;
  for (std::size_t c = 0; c < 3; ++c) {
    const ClassSplit& cs = plan.classes[c];
    CHECK(cs.test.size() == kTestPerClass);
    CHECK(cs.val.size() == kValPerClass);
    CHECK(cs.pool.size() == 4);
    for (const auto* part : {&cs.test, &cs.val, &cs.pool}) {
      for (std::size_t id : *part) {
        CHECK(g.data.samples[id].label == c);
        CHECK(seen.insert(id).second);
      }
    }
  }
  CHECK(seen.size() == 42);
  CHECK(plan.min_pool() == 4);
  CHECK(plan.test_ids().size() == 15);
}

TEST_CASE("subsets are nested in k and balanced") {
  const GeneratedDataset g = generate(small_spec());
  const auto k1 = subset(g.plan, 1, 7);
  const auto k3 = subset(g.plan, 3, 7);
  const auto all = subset(g.plan, kFullPool, 7);
  CHECK(k1.size() == 3);
  CHECK(k3.size() == 9);
  CHECK(all.size() == 12);
  const std::set<std::size_t> big(k3.begin(), k3.end());
  for (std::size_t id : k1) CHECK(big.count(id) == 1);
  CHECK(subset(g.plan, 3, 7) == k3);
  CHECK_THROWS(subset(g.plan, 5, 7));
  CHECK_THROWS(subset(g.plan, 0, 7));
}

TEST_CASE("spec validation names the violated constraint") {
  DatasetSpec s = small_spec();
  s.samples_per_class = 8;
  try {
    s.validate();
    FAIL("expected a validation error");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("samples_per_class") != std::string::npos);
  }
  s = small_spec();
  s.height = 8;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  s = small_spec();
  s.subtlety = 0;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
}

TEST_CASE("base task uses the other family with distinct classes") {
  const DatasetSpec base = base_task_spec(DatasetSpec{});
  CHECK(base.family == TaskFamily::base);
  CHECK(base.num_classes == 50);
  CHECK(base.samples_per_class == 100);
  CHECK(base.height == 64);
}

TEST_CASE("bbox text format") {
  CHECK(parse_bbox("1:2:30:31") == BBox{1, 2, 30, 31});
  CHECK(format_bbox(BBox{1, 2, 30, 31}) == "1:2:30:31");
  CHECK_THROWS_AS(parse_bbox("1:2:3"), FormatError);
  CHECK_THROWS_AS(parse_bbox("4:2:3:9"), FormatError);
  CHECK_THROWS_AS(parse_bbox("a:b:c:d"), FormatError);
}

TEST_CASE("write and ingest round trip") {
  TempDir dir;
  GeneratedDataset g = generate(small_spec());
  g.data.samples[0].saliency = center_map(32, 32);
  write_dataset(g.data, dir.path);
  const Dataset back = ingest_folder(dir.path);
  REQUIRE(back.samples.size() == g.data.samples.size());
  CHECK(back.num_classes == 3);
  for (std::size_t i = 0; i < back.samples.size(); ++i) {
    const Sample& a = g.data.samples[i];
    const Sample& b = back.samples[i];
    CHECK(a.label == b.label);
    CHECK(a.bbox == b.bbox);
    CHECK(a.mask.bits == b.mask.bits);
    Real worst = 0;
    for (std::size_t j = 0; j < a.image.size(); ++j) worst = std::max(worst, std::abs(a.image[j] - b.image[j]));
    CHECK(worst <= 0.5 / 255 + 1e-12);
  }
  CHECK(back.samples[0].saliency.has_value());
  CHECK_FALSE(back.samples[1].saliency.has_value());

  const Dataset resized = ingest_folder(dir.path, 16, 24);
  CHECK(resized.samples[0].image.shape() == Shape{3, 16, 24});
  CHECK(resized.samples[0].mask.height == 16);
}

TEST_CASE("ingest rejects a gap in the labels") {
  TempDir dir;
  GeneratedDataset g = generate(small_spec());
  std::erase_if(g.data.samples, [](const Sample& s) { return s.label == 1; });
  write_dataset(g.data, dir.path);
  CHECK_THROWS_AS(ingest_folder(dir.path), FormatError);
}

TEST_CASE("ingest reports a missing index or header") {
  TempDir dir;
  CHECK_THROWS(ingest_folder(dir.path));
  std::ofstream(dir.path / kIndexFile) << "img,lbl\n";
  CHECK_THROWS_AS(ingest_folder(dir.path), FormatError);
}

TEST_CASE("k equal to the pool size takes the whole pool") {
  const GeneratedDataset g = generate(small_spec());
  for (std::uint64_t seed : {1, 2, 3}) {
    auto a = subset(g.plan, 4, seed);
    std::sort(a.begin(), a.end());
    std::vector<std::size_t> pool;
    for (const ClassSplit& c : g.plan.classes) pool.insert(pool.end(), c.pool.begin(), c.pool.end());
    std::sort(pool.begin(), pool.end());
    CHECK(a == pool);
  }
}

TEST_CASE("different seeds draw different subsets") {
  DatasetSpec spec = small_spec();
  spec.samples_per_class = 25;
  const GeneratedDataset g = generate(spec);
  std::set<std::vector<std::size_t>> seen;
  for (std::uint64_t seed = 0; seed < 5; ++seed) seen.insert(subset(g.plan, 3, seed));
  CHECK(seen.size() == 5);
}

TEST_CASE("a four-image folder with two classes") {
  TempDir dir;
  Dataset d;
  d.num_classes = 2;
  const GeneratedDataset g = generate(small_spec());
  for (std::size_t i : {0, 1, 14, 15}) d.samples.push_back(g.data.samples[i]);
  d.samples[2].saliency = white_map(32, 32);
  write_dataset(d, dir.path);
  const Dataset back = ingest_folder(dir.path);
  REQUIRE(back.samples.size() == 4);
  CHECK(back.samples[0].label == 0);
  CHECK(back.samples[3].label == 1);
  REQUIRE(back.samples[2].saliency);
  CHECK(back.samples[2].saliency->values() == std::vector<Real>(32 * 32, 1.0));

  const auto image = dir.path / "images" / (d.samples[1].name + ".ppm");
  std::ofstream(image, std::ios::binary | std::ios::trunc) << "P6\n32 32\n255\nxx";
  try {
    ingest_folder(dir.path);
    FAIL("expected an error");
  } catch (const std::exception& e) {
    CHECK(std::string(e.what()).find(d.samples[1].name + ".ppm") != std::string::npos);
  }
}

TEST_CASE("maximally distinct classes are learnable" * doctest::test_suite("slow")) {
  DatasetSpec spec;
  spec.num_classes = 10;
  spec.subtlety = 1.0;
  const GeneratedDataset g = generate(spec);
  NetworkConfig net;
  net.variant = Variant::baseline_rgb;
  net.pool_position = PoolPosition::before_fusion;
  net.num_classes = 10;
  // The baseline of the protocol: RGB layers from the base task, fresh classifier.
  const ModelState backbone =
      pretrain_backbone(generate(base_task_spec(DatasetSpec{})).data, net, default_pretrain_hyper(), 1);
  const TrainResult r =
      train(make_init(net, &backbone, "base-task")(1), net, g.data, subset(g.plan, kFullPool, 1), Hyperparams{}, 2);
  CHECK(evaluate(r.state, net, g.data, g.plan.test_ids()) > 90.0);
}

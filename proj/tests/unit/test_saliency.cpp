#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <sstream>

#include "salmod/data.hpp"
#include "salmod/rng.hpp"
#include "salmod/saliency.hpp"
#include "temp_dir.hpp"

using namespace salmod;
using salmod::testing::TempDir;

namespace {

// NSS straight from its definition, with a two-pass population variance.
Real nss_oracle(const std::vector<Real>& v, const std::vector<std::size_t>& at) {
  long double mean = 0;
  for (Real x : v) mean += x;
  mean /= v.size();
  long double var = 0;
  for (Real x : v) var += (x - mean) * (x - mean);
  const long double sd = std::sqrt(var / v.size());
  long double s = 0;
  for (std::size_t i : at) s += (v[i] - mean) / sd;
  return static_cast<Real>(s / at.size());
}

Mask disc_mask(std::size_t h, std::size_t w, Real cx, Real cy, Real r) {
  Mask m(h, w);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      if ((x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r) m.at(y, x) = 1;
    }
  }
  return m;
}

}  // namespace

TEST_CASE("NSS hand-derived 2x2 case") {
  // Map [0 .5; .5 1]: mean .5, population sd sqrt(1/8); fixation on the 1.
  SaliencyMap m(2, 2, std::vector<Real>{0, 0.5, 0.5, 1});
  const Real expected = 0.5 / std::sqrt(0.125);
  CHECK(std::abs(nss(m, {{1, 1}}) - expected) < 1e-12);
  CHECK(std::abs(nss(m, {{1, 1}}) - nss_oracle(m.values(), {3})) < 1e-12);
  CHECK(std::abs(nss(m, {{0, 0}, {1, 1}})) < 1e-12);
}

TEST_CASE("NSS of a constant map is exactly zero") {
  CHECK(nss(white_map(4, 4), {{1, 2}}) == 0.0);
  CHECK(nss(SaliencyMap(3, 3, 0.3), {{0, 0}, {2, 2}}) == 0.0);
}

TEST_CASE("NSS is invariant under positive affine maps of the saliency") {
  Rng rng(9);
  std::vector<Real> v(64);
  for (Real& x : v) x = rng.uniform(0.1, 0.6);
  std::vector<Real> w(v);
  for (Real& x : w) x = 0.3 * x + 0.2;
  FixationSet f{{1, 1}, {5, 2}, {7, 7}};
  CHECK(std::abs(nss(SaliencyMap(8, 8, v), f) - nss(SaliencyMap(8, 8, w), f)) < 1e-10);
}

TEST_CASE("NSS errors") {
  CHECK_THROWS(nss(white_map(2, 2), {}));
  CHECK_THROWS(nss(SaliencyMap(2, 2, std::vector<Real>{0, 1, 0, 1}), {{2, 0}}));
}

TEST_CASE("saliency values outside [0,1] are rejected") {
  CHECK_THROWS_AS(SaliencyMap(1, 2, std::vector<Real>{0.5, 1.5}), std::domain_error);
}

TEST_CASE("white map is all ones") {
  const SaliencyMap m = white_map(3, 5);
  for (Real v : m.values()) CHECK(v == 1.0);
}

TEST_CASE("center map corner value") {
  // 5x5, sigma = 0.25 * 5: corner is at squared distance 8 from the centre.
  const SaliencyMap m = center_map(5, 5, 0.25);
  const Real sigma = 1.25;
  CHECK(m.at(2, 2) == 1.0);
  CHECK(std::abs(m.at(0, 0) - std::exp(-8.0 / (2 * sigma * sigma))) < 1e-12);
  CHECK(m.at(0, 4) == m.at(4, 0));
}

TEST_CASE("min-max normalisation") {
  const auto v = minmax_normalize({2, 4, 3});
  CHECK(v == std::vector<Real>{0, 1, 0.5});
  CHECK(minmax_normalize({0.7, 0.7}) == std::vector<Real>{0, 0});
}

TEST_CASE("oracle map at q=1 peaks inside the mask") {
  const Mask mask = disc_mask(40, 40, 25, 12, 6);
  const SaliencyMap m = oracle_map(mask, 1.0, 3);
  std::size_t best = 0;
  for (std::size_t i = 1; i < m.values().size(); ++i) {
    if (m.values()[i] > m.values()[best]) best = i;
  }
  CHECK(mask.bits[best]);
  CHECK_THROWS(oracle_map(Mask(4, 4), 1.0, 1));
  CHECK_THROWS(oracle_map(mask, 1.5, 1));
}

TEST_CASE("oracle NSS increases with quality") {
  const Mask mask = disc_mask(48, 48, 20, 26, 8);
  const FixationSet fix = sample_fixations(mask, 64, 4);
  Real previous = -1e9;
  for (Real q : {0.0, 0.25, 0.5, 0.75, 1.0}) {
    Real mean = 0;
    for (std::uint64_t s = 0; s < 5; ++s) mean += nss(oracle_map(mask, q, s), fix);
    CHECK(mean > previous);
    previous = mean;
  }
}

TEST_CASE("fixations lie in the mask and are deterministic") {
  const Mask mask = disc_mask(20, 20, 10, 10, 4);
  const FixationSet a = sample_fixations(mask, 10, 8);
  const FixationSet b = sample_fixations(mask, 10, 8);
  REQUIRE(a.size() == 10);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(mask.at(a[i].y, a[i].x));
    CHECK(a[i].x == b[i].x);
    CHECK(a[i].y == b[i].y);
  }
  CHECK(sample_fixations(mask, 100000, 1).size() == mask.count());
}

TEST_CASE("Itti-Koch and BMS produce normalised maps") {
  const Sample s = generate_sample(DatasetSpec{}, 2, 0);
  const SaliencyMap ik = itti_koch_map(s.image);
  CHECK(ik.height() == 64);
  const SaliencyMap bms = bms_map(s.image, 8, 1);
  CHECK(bms == bms_map(s.image, 8, 1));
  for (const SaliencyMap* m : {&ik, &bms}) {
    Real lo = 1, hi = 0;
    for (Real v : m->values()) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    CHECK(lo == 0.0);
    CHECK(hi == 1.0);
  }
  CHECK_THROWS(itti_koch_map(Tensor({3, 16, 40}, 0.5)));
}

TEST_CASE("BMS highlights an enclosed blob") {
  // Bright square in the middle of a dark image: the only surrounded region.
  Tensor img({3, 32, 32}, 0.1);
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t y = 12; y < 20; ++y) {
      for (std::size_t x = 12; x < 20; ++x) img.at({c, y, x}) = 0.9;
    }
  }
  const SaliencyMap m = bms_map(img, 8, 2);
  CHECK(m.at(16, 16) > m.at(2, 2));
}

TEST_CASE("maps round-trip through P5 files and are resized on load") {
  TempDir dir;
  const SaliencyMap m = center_map(10, 12);
  save_map(m, dir.path / "m.pgm");
  const LoadedMap same = load_map(dir.path / "m.pgm", 10, 12);
  CHECK_FALSE(same.resized);
  for (std::size_t i = 0; i < m.values().size(); ++i) {
    CHECK(std::abs(same.map.values()[i] - m.values()[i]) <= 0.5 / 255 + 1e-12);
  }
  std::ostringstream captured;
  auto* old = std::clog.rdbuf(captured.rdbuf());
  const LoadedMap resized = load_map(dir.path / "m.pgm", 20, 24);
  std::clog.rdbuf(old);
  CHECK(resized.resized);
  CHECK(resized.map.height() == 20);
  CHECK(resized.map.width() == 24);
  CHECK(captured.str().find("resized") != std::string::npos);
}

TEST_CASE("NSS of the single-peak 2x2 map") {
  // Mean 1/4, population variance (9/16 + 3/16) / 4 = 3/16.
  const SaliencyMap m(2, 2, std::vector<Real>{1, 0, 0, 0});
  const Real expected = (1 - 0.25) / std::sqrt(3.0 / 16);
  CHECK(std::abs(nss(m, {{0, 0}}) - expected) < 1e-12);
  CHECK(std::abs(nss(m, {{0, 0}}) - nss_oracle(m.values(), {0})) < 1e-12);
}

TEST_CASE("moving fixations to lower values lowers NSS") {
  Rng rng(6);
  std::vector<Real> v(25);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<Real>(i) / 24;
  const SaliencyMap m(5, 5, v);
  CHECK(nss(m, {{4, 4}, {3, 4}}) > nss(m, {{4, 4}, {3, 0}}));
  CHECK(nss(m, {{4, 4}, {3, 0}}) > nss(m, {{0, 0}, {3, 0}}));
}

TEST_CASE("white map of any size is constant; 2x2 is all ones") {
  const SaliencyMap m = white_map(2, 2);
  CHECK(m.values() == std::vector<Real>(4, 1.0));
  const SaliencyMap big = white_map(7, 3);
  CHECK(*std::min_element(big.values().begin(), big.values().end()) == 1.0);
}

TEST_CASE("center map symmetry and peak") {
  const SaliencyMap m = center_map(9, 7);
  CHECK(m.at(4, 3) == 1.0);
  for (std::size_t y = 0; y < 9; ++y) {
    for (std::size_t x = 0; x < 7; ++x) {
      CHECK(m.at(y, x) == m.at(y, 6 - x));
      CHECK(m.at(y, x) == m.at(8 - y, x));
    }
  }
}

TEST_CASE("Itti-Koch: flat image gives zeros, a disk wins") {
  const SaliencyMap flat = itti_koch_map(Tensor({3, 32, 32}, 0.4));
  for (Real v : flat.values()) CHECK(v == 0.0);

  Tensor img({3, 48, 48}, 0.1);
  const Mask disk = disc_mask(48, 48, 30, 17, 5);
  for (std::size_t i = 0; i < 48 * 48; ++i) {
    if (disk.bits[i]) img[i] = img[48 * 48 + i] = img[2 * 48 * 48 + i] = 0.9;
  }
  const SaliencyMap m = itti_koch_map(img);
  const auto& v = m.values();
  CHECK(disk.bits[static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin())]);

  Rng rng(5);
  Tensor noise({3, 32, 32}, 0.0);
  for (Real& x : noise.values()) x = rng.uniform();
  for (Real x : itti_koch_map(noise).values()) {
    CHECK(x >= 0.0);
    CHECK(x <= 1.0);
  }
}

TEST_CASE("BMS: surrounded square scores 1, border-touching regions 0") {
  Tensor img({3, 32, 32}, 0.2);
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t y = 10; y < 22; ++y) {
      for (std::size_t x = 10; x < 22; ++x) img.at({c, y, x}) = 0.8;
    }
    // A bright bar touching the left border.
    for (std::size_t y = 0; y < 32; ++y) {
      for (std::size_t x = 0; x < 4; ++x) img.at({c, y, x}) = 0.8;
    }
  }
  const SaliencyMap m = bms_map(img, 8, 3);
  CHECK(m.at(16, 16) == 1.0);
  CHECK(m.at(16, 1) == 0.0);
  CHECK(m.at(2, 28) == 0.0);
}

TEST_CASE("oracle at q=0 ignores the mask") {
  const SaliencyMap a = oracle_map(disc_mask(32, 32, 8, 8, 5), 0.0, 4);
  const SaliencyMap b = oracle_map(disc_mask(32, 32, 22, 20, 7), 0.0, 4);
  CHECK(a == b);
}

TEST_CASE("oracle q=1 beats q=0 on every generated sample") {
  DatasetSpec spec;
  spec.num_classes = 4;
  spec.samples_per_class = 11;
  const GeneratedDataset g = generate(spec);
  for (std::size_t i = 0; i < g.data.samples.size(); i += 3) {
    const Sample& s = g.data.samples[i];
    const FixationSet f = sample_fixations(s.mask, 50, i);
    CHECK(nss(oracle_map(s.mask, 1.0, i), f) > nss(oracle_map(s.mask, 0.0, i), f));
  }
}

TEST_CASE("NSS ordering oracle > center > white over generated samples") {
  DatasetSpec spec;
  spec.num_classes = 4;
  spec.samples_per_class = 11;
  const GeneratedDataset g = generate(spec);
  Real oracle = 0, center = 0, white = 0;
  for (std::size_t i = 0; i < 24; ++i) {
    const Sample& s = g.data.samples[i];
    const FixationSet f = sample_fixations(s.mask, 50, i);
    oracle += nss(oracle_map(s.mask, 1.0, i), f);
    center += nss(center_map(64, 64), f);
    white += nss(white_map(64, 64), f);
  }
  CHECK(white == 0.0);
  CHECK(oracle > center);
  CHECK(center > white);
}

TEST_CASE("all-ones map is saved as bytes of 255") {
  TempDir dir;
  save_map(white_map(3, 4), dir.path / "w.pgm");
  const Raster r = read_netpbm(dir.path / "w.pgm");
  CHECK(r.bytes == std::vector<std::uint8_t>(12, 255));
}

#include <doctest.h>

#include <cmath>
#include <fstream>
#include <sstream>
#include <vector>

#include "salmod/analysis.hpp"
#include "salmod/rng.hpp"
#include "temp_dir.hpp"

using namespace salmod;
using salmod::testing::TempDir;

namespace {

// Single-pass textbook formula in extended precision.
long double pearson_oracle(const std::vector<Real>& x, const std::vector<Real>& y) {
  long double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  const long double n = x.size();
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += (long double)x[i] * x[i];
    syy += (long double)y[i] * y[i];
    sxy += (long double)x[i] * y[i];
  }
  return (n * sxy - sx * sy) / std::sqrt((n * sxx - sx * sx) * (n * syy - sy * sy));
}

RunReport report(const std::string& name, const std::vector<std::size_t>& ks, Real base) {
  RunReport r;
  r.name = name;
  for (std::size_t i = 0; i < ks.size(); ++i) {
    for (std::size_t s = 0; s < 2; ++s) {
      CellResult c;
      c.k = ks[i];
      c.seed = s;
      c.accuracy = base + 10 * i + s;
      r.cells.push_back(c);
    }
  }
  return r;
}

// Tags must nest; self-closing and declaration tags are skipped.
bool balanced_xml(const std::string& text) {
  std::vector<std::string> stack;
  std::size_t pos = 0;
  while ((pos = text.find('<', pos)) != std::string::npos) {
    const std::size_t end = text.find('>', pos);
    if (end == std::string::npos) return false;
    const std::string tag = text.substr(pos + 1, end - pos - 1);
    pos = end + 1;
    if (tag.empty() || tag[0] == '?' || tag.back() == '/') continue;
    const std::string name = tag.substr(tag[0] == '/', tag.find_first_of(" \n") - (tag[0] == '/'));
    if (tag[0] == '/') {
      if (stack.empty() || stack.back() != name) return false;
      stack.pop_back();
    } else {
      stack.push_back(name);
    }
  }
  return stack.empty();
}

}  // namespace

TEST_CASE("pearson on exact cases") {
  CHECK(pearson({1, 2, 3}, {2, 4, 6}) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(pearson({1, 2, 3}, {3, 2, 1}) == doctest::Approx(-1.0).epsilon(1e-15));
  CHECK(pearson({1, 2, 3, 4}, {1, -1, -1, 1}) == doctest::Approx(0.0));
  CHECK_THROWS(pearson({1, 2}, {1, 2, 3}));
  CHECK_THROWS(pearson({1, 1, 1}, {1, 2, 3}));
  CHECK_THROWS(pearson({1}, {1}));
}

TEST_CASE("pearson matches the textbook formula on 10 points") {
  Rng rng(31);
  std::vector<Real> x(10), y(10);
  for (std::size_t i = 0; i < 10; ++i) {
    x[i] = rng.uniform(-1, 2);
    y[i] = 0.7 * x[i] + rng.normal();
  }
  CHECK(std::abs(pearson(x, y) - static_cast<Real>(pearson_oracle(x, y))) < 1e-12);
}

TEST_CASE("pearson is invariant under positive affine maps") {
  Rng rng(2);
  std::vector<Real> x(12), y(12), x2(12), y2(12);
  for (std::size_t i = 0; i < 12; ++i) {
    x[i] = rng.normal();
    y[i] = rng.normal() + x[i];
    x2[i] = 3 * x[i] - 7;
    y2[i] = 0.25 * y[i] + 100;
  }
  CHECK(std::abs(pearson(x, y) - pearson(x2, y2)) < 1e-12);
  for (Real& v : y2) v = -v;
  CHECK(std::abs(pearson(x, y) + pearson(x2, y2)) < 1e-12);
}

TEST_CASE("correlation needs three points") {
  CHECK_THROWS_AS(make_correlation({{"a", 1, 2}, {"b", 2, 3}}), std::invalid_argument);
  const CorrelationStudy s = make_correlation({{"a", 1, 10}, {"b", 2, 20}, {"c", 3, 31}});
  CHECK(s.coefficient > 0.99);
}

TEST_CASE("ablation rows, averages and k-list consistency") {
  const std::vector<std::size_t> ks{1, 5};
  const AblationTable t = ablation_table({report("zeta", ks, 10), report("alpha", ks, 20)});
  REQUIRE(t.rows.size() == 2);
  CHECK(t.rows[0].name == "alpha");
  // Cells are seed means: base + 10 i + 0.5.
  CHECK(t.rows[0].cells == std::vector<Real>{20.5, 30.5});
  CHECK(t.rows[0].avg == 25.5);
  CHECK_THROWS_AS(ablation_table({report("a", ks, 0), report("b", {1, 3}, 0)}), std::invalid_argument);

  TempDir dir;
  write_ablation_csv(t, dir.path / "a.csv");
  std::ifstream in(dir.path / "a.csv");
  std::string header;
  std::getline(in, header);
  CHECK(header == "config,1,5,AVG");
  CHECK(format_ablation(t).find("alpha") != std::string::npos);
}

TEST_CASE("reports round-trip through results.csv") {
  TempDir dir;
  const RunReport r = report("x", {2, kFullPool}, 5);
  std::filesystem::create_directories(dir.path / "run_a");
  write_results_csv(r, dir.path / "run_a" / "results.csv");
  const RunReport back = load_report(dir.path / "run_a");
  CHECK(back.name == "run_a");
  REQUIRE(back.cells.size() == r.cells.size());
  for (std::size_t i = 0; i < r.cells.size(); ++i) {
    CHECK(back.cells[i].k == r.cells[i].k);
    CHECK(back.cells[i].accuracy == r.cells[i].accuracy);
  }
  CHECK_THROWS(load_report(dir.path / "missing"));
}

TEST_CASE("plots are well-formed SVG") {
  const AblationTable t = ablation_table({report("a", {1, 3, 5}, 10), report("b", {1, 3, 5}, 12)});
  const std::string acc = accuracy_plot_svg(t);
  CHECK(acc.find("<svg") != std::string::npos);
  CHECK(balanced_xml(acc));
  CHECK(acc.find("<polyline") != std::string::npos);
  const std::string cor = correlation_plot_svg(make_correlation({{"a", 0.1, 10}, {"b", 1, 20}, {"c", 2, 26}}));
  CHECK(balanced_xml(cor));
  CHECK(cor.find("&") == std::string::npos);
}

TEST_CASE("mean NSS of oracle maps") {
  DatasetSpec spec;
  spec.num_classes = 2;
  spec.samples_per_class = 11;
  spec.height = spec.width = 32;
  GeneratedDataset g = generate(spec);
  attach_oracle(g.data, 1.0, 3);
  const Real good = mean_nss(g.data, g.plan.test_ids(), 1);
  attach_oracle(g.data, 0.0, 3);
  const Real bad = mean_nss(g.data, g.plan.test_ids(), 1);
  CHECK(good > 1.0);
  CHECK(good > bad);
  g.data.samples[g.plan.test_ids().front()].saliency.reset();
  CHECK_THROWS(mean_nss(g.data, g.plan.test_ids(), 1));
}

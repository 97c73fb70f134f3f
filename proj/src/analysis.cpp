#include "salmod/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "salmod/rng.hpp"

namespace salmod {

Real pearson(const std::vector<Real>& xs, const std::vector<Real>& ys) {
  if (xs.size() != ys.size()) throw std::invalid_argument("pearson: inputs differ in length");
  if (xs.size() < 2) throw std::invalid_argument("pearson: need at least two points");
  const Real n = static_cast<Real>(xs.size());
  Real mx = 0, my = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  Real sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const Real dx = xs[i] - mx, dy = ys[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0 || syy == 0) throw std::invalid_argument("pearson: zero variance");
  return std::clamp(sxy / std::sqrt(sxx * syy), Real{-1}, Real{1});
}

CorrelationStudy make_correlation(std::vector<CorrelationPoint> points) {
  if (points.size() < 3) {
    throw std::invalid_argument("correlation needs at least 3 points, got " + std::to_string(points.size()));
  }
  std::vector<Real> xs, ys;
  for (const auto& p : points) {
    xs.push_back(p.nss);
    ys.push_back(p.accuracy);
  }
  CorrelationStudy s;
  s.coefficient = pearson(xs, ys);
  s.points = std::move(points);
  return s;
}

Real mean_nss(const Dataset& data, const std::vector<std::size_t>& ids, std::uint64_t seed) {
  if (ids.empty()) throw std::invalid_argument("mean_nss: no samples");
  Real total = 0;
  for (std::size_t id : ids) {
    const Sample& s = data.samples.at(id);
    if (!s.saliency) throw std::invalid_argument("sample '" + s.name + "' has no saliency map");
    total += nss(*s.saliency, sample_fixations(s.mask, kFixationsPerImage, derive_seed(seed, s.name)));
  }
  return total / static_cast<Real>(ids.size());
}

void attach_oracle(Dataset& data, Real quality, std::uint64_t seed) {
  for (Sample& s : data.samples) s.saliency = oracle_map(s.mask, quality, derive_seed(seed, s.name));
}

CorrelationStudy correlation_study(const Dataset& data, const SplitPlan& plan, const NetworkConfig& config,
                                   const Hyperparams& hyper, const std::vector<Real>& qualities,
                                   const ProtocolSpec& spec,
                                   const std::function<InitFn(Real quality)>& init_for,
                                   std::uint64_t map_seed) {
  if (qualities.size() < 3) throw std::invalid_argument("correlation study needs at least 3 quality levels");
  if (spec.k_list.size() != 1) throw std::invalid_argument("correlation study runs at a single k");
  std::vector<CorrelationPoint> points;
  for (Real q : qualities) {
    Dataset with_maps = data;
    attach_oracle(with_maps, q, map_seed);
    const RunReport r = scarce_protocol(with_maps, plan, config, hyper, spec, init_for(q));
    std::ostringstream name;
    name << "oracle_q" << format_real(q);
    points.push_back({name.str(), mean_nss(with_maps, plan.test_ids(), map_seed),
                      r.mean_accuracy(spec.k_list.front())});
  }
  return make_correlation(std::move(points));
}

AblationTable ablation_table(const std::vector<RunReport>& reports) {
  if (reports.empty()) throw std::invalid_argument("ablation table needs at least one report");
  AblationTable t;
  for (const KSummary& s : reports.front().summary()) t.k_list.push_back(s.k);
  for (const RunReport& r : reports) {
    AblationRow row;
    row.name = r.name;
    const auto summary = r.summary();
    if (summary.size() != t.k_list.size()) {
      throw std::invalid_argument("report '" + r.name + "' covers a different k list");
    }
    for (std::size_t i = 0; i < summary.size(); ++i) {
      if (summary[i].k != t.k_list[i]) throw std::invalid_argument("report '" + r.name + "' covers a different k list");
      row.cells.push_back(summary[i].mean);
      row.avg += summary[i].mean;
    }
    row.avg /= static_cast<Real>(row.cells.size());
    t.rows.push_back(std::move(row));
  }
  std::stable_sort(t.rows.begin(), t.rows.end(),
                   [](const AblationRow& a, const AblationRow& b) { return a.name < b.name; });
  return t;
}

void write_ablation_csv(const AblationTable& table, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "config";
  for (std::size_t k : table.k_list) out << ',' << k_label(k);
  out << ",AVG\n";
  for (const auto& row : table.rows) {
    out << row.name;
    for (Real v : row.cells) out << ',' << format_real(v);
    out << ',' << format_real(row.avg) << '\n';
  }
}

std::string format_ablation(const AblationTable& table) {
  std::size_t name_w = 6;
  for (const auto& row : table.rows) name_w = std::max(name_w, row.name.size());
  std::ostringstream out;
  auto cell = [&](const std::string& s) {
    out << std::string(s.size() < 8 ? 8 - s.size() : 1, ' ') << s;
  };
  out << "config" << std::string(name_w - 6, ' ');
  for (std::size_t k : table.k_list) cell(k_label(k));
  cell("AVG");
  out << '\n';
  for (const auto& row : table.rows) {
    out << row.name << std::string(name_w - row.name.size(), ' ');
    char buf[32];
    for (Real v : row.cells) {
      std::snprintf(buf, sizeof buf, "%.2f", v);
      cell(buf);
    }
    std::snprintf(buf, sizeof buf, "%.2f", row.avg);
    cell(buf);
    out << '\n';
  }
  return out.str();
}

RunReport load_report(const std::filesystem::path& path) {
  const bool dir = std::filesystem::is_directory(path);
  const std::filesystem::path file = dir ? path / "results.csv" : path;
  std::ifstream in(file);
  if (!in) throw std::runtime_error("cannot open report " + file.string());
  RunReport r;
  const std::filesystem::path owner = dir ? path : path.parent_path();
  r.name = std::filesystem::absolute(owner).lexically_normal().filename().string();
  if (r.name.empty()) r.name = std::filesystem::absolute(owner).lexically_normal().parent_path().filename().string();
  std::string line;
  if (!std::getline(in, line) || line != "k,seed,accuracy") {
    throw std::runtime_error(file.string() + ": expected header k,seed,accuracy");
  }
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string k, seed, acc;
    if (!std::getline(ls, k, ',') || !std::getline(ls, seed, ',') || !std::getline(ls, acc)) {
      throw std::runtime_error(file.string() + ":" + std::to_string(lineno) + ": malformed row");
    }
    CellResult c;
    try {
      c.k = k == "K" ? kFullPool : std::stoul(k);
      c.seed = std::stoul(seed);
      c.accuracy = std::stod(acc);
    } catch (const std::exception&) {
      throw std::runtime_error(file.string() + ":" + std::to_string(lineno) + ": malformed row");
    }
    r.cells.push_back(std::move(c));
  }
  if (r.cells.empty()) throw std::runtime_error(file.string() + ": no results");
  return r;
}

namespace {

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

constexpr int kWidth = 640, kHeight = 420;
constexpr int kLeft = 60, kRight = 200, kTop = 20, kBottom = 50;
constexpr const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                   "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

struct Frame {
  Real x0, x1, y0, y1;
  Real px(Real x) const { return kLeft + (x - x0) / (x1 - x0) * (kWidth - kLeft - kRight); }
  Real py(Real y) const { return kHeight - kBottom - (y - y0) / (y1 - y0) * (kHeight - kTop - kBottom); }
};

void pad_range(Real& lo, Real& hi) {
  if (hi - lo < 1e-9) {
    lo -= 1;
    hi += 1;
  } else {
    const Real m = 0.05 * (hi - lo);
    lo -= m;
    hi += m;
  }
}

std::string num(Real v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

void axes(std::ostringstream& o, const Frame& f, const std::string& xlabel, const std::string& ylabel) {
  const Real bx = kLeft, by = kHeight - kBottom, ex = kWidth - kRight;
  o << "<line x1=\"" << bx << "\" y1=\"" << by << "\" x2=\"" << ex << "\" y2=\"" << by << "\" stroke=\"black\"/>\n";
  o << "<line x1=\"" << bx << "\" y1=\"" << by << "\" x2=\"" << bx << "\" y2=\"" << kTop << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const Real y = f.y0 + (f.y1 - f.y0) * i / 4;
    o << "<text x=\"" << bx - 6 << "\" y=\"" << f.py(y) + 4 << "\" font-size=\"11\" text-anchor=\"end\">"
      << num(y) << "</text>\n";
  }
  o << "<text x=\"" << (bx + ex) / 2 << "\" y=\"" << kHeight - 10 << "\" font-size=\"13\" text-anchor=\"middle\">"
    << xml_escape(xlabel) << "</text>\n";
  o << "<text x=\"15\" y=\"" << (kTop + by) / 2 << "\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 15 "
    << (kTop + by) / 2 << ")\">" << xml_escape(ylabel) << "</text>\n";
}

std::string svg_open() {
  return "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" +
         std::to_string(kWidth) + "\" height=\"" + std::to_string(kHeight) + "\" viewBox=\"0 0 " +
         std::to_string(kWidth) + " " + std::to_string(kHeight) + "\">\n" +
         "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
}

}  // namespace

std::string accuracy_plot_svg(const AblationTable& table) {
  Real lo = 1e300, hi = -1e300;
  for (const auto& row : table.rows) {
    for (Real v : row.cells) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  if (table.rows.empty()) lo = 0, hi = 100;
  pad_range(lo, hi);
  // k values sit at evenly spaced categorical positions ("K" has no number).
  const Real n = static_cast<Real>(std::max<std::size_t>(1, table.k_list.size()));
  Frame f{-0.5, n - 0.5, lo, hi};
  std::ostringstream o;
  o << svg_open();
  axes(o, f, "training samples per class (k)", "test accuracy (%)");
  for (std::size_t i = 0; i < table.k_list.size(); ++i) {
    o << "<text x=\"" << f.px(static_cast<Real>(i)) << "\" y=\"" << kHeight - kBottom + 16
      << "\" font-size=\"11\" text-anchor=\"middle\">" << k_label(table.k_list[i]) << "</text>\n";
  }
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const char* color = kColors[r % std::size(kColors)];
    o << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < row.cells.size(); ++i) {
      o << (i ? " " : "") << f.px(static_cast<Real>(i)) << ',' << f.py(row.cells[i]);
    }
    o << "\"/>\n";
    o << "<text x=\"" << kWidth - kRight + 10 << "\" y=\"" << kTop + 14 + 16 * static_cast<int>(r)
      << "\" font-size=\"11\" fill=\"" << color << "\">" << xml_escape(row.name) << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

std::string correlation_plot_svg(const CorrelationStudy& study) {
  Real xl = 1e300, xh = -1e300, yl = 1e300, yh = -1e300;
  for (const auto& p : study.points) {
    xl = std::min(xl, p.nss);
    xh = std::max(xh, p.nss);
    yl = std::min(yl, p.accuracy);
    yh = std::max(yh, p.accuracy);
  }
  pad_range(xl, xh);
  pad_range(yl, yh);
  Frame f{xl, xh, yl, yh};
  std::ostringstream o;
  o << svg_open();
  axes(o, f, "mean NSS", "test accuracy (%)");
  for (int i = 0; i <= 4; ++i) {
    const Real x = f.x0 + (f.x1 - f.x0) * i / 4;
    o << "<text x=\"" << f.px(x) << "\" y=\"" << kHeight - kBottom + 16 << "\" font-size=\"11\" text-anchor=\"middle\">"
      << num(x) << "</text>\n";
  }
  // Least-squares line through the points.
  Real mx = 0, my = 0;
  for (const auto& p : study.points) {
    mx += p.nss;
    my += p.accuracy;
  }
  const Real n = static_cast<Real>(study.points.size());
  mx /= n;
  my /= n;
  Real sxy = 0, sxx = 0;
  for (const auto& p : study.points) {
    sxy += (p.nss - mx) * (p.accuracy - my);
    sxx += (p.nss - mx) * (p.nss - mx);
  }
  if (sxx > 0) {
    const Real slope = sxy / sxx;
    const Real a = f.x0, b = f.x1;
    o << "<line x1=\"" << f.px(a) << "\" y1=\"" << f.py(my + slope * (a - mx)) << "\" x2=\"" << f.px(b)
      << "\" y2=\"" << f.py(my + slope * (b - mx)) << "\" stroke=\"#888\" stroke-dasharray=\"5,4\"/>\n";
  }
  for (std::size_t i = 0; i < study.points.size(); ++i) {
    const auto& p = study.points[i];
    const char* color = kColors[i % std::size(kColors)];
    o << "<circle cx=\"" << f.px(p.nss) << "\" cy=\"" << f.py(p.accuracy) << "\" r=\"5\" fill=\"" << color << "\"/>\n";
    o << "<text x=\"" << kWidth - kRight + 10 << "\" y=\"" << kTop + 14 + 16 * static_cast<int>(i)
      << "\" font-size=\"11\" fill=\"" << color << "\">" << xml_escape(p.method) << "</text>\n";
  }
  o << "<text x=\"" << kWidth - kRight + 10 << "\" y=\"" << kHeight - kBottom << "\" font-size=\"12\">r = "
    << num(study.coefficient) << "</text>\n";
  o << "</svg>\n";
  return o.str();
}

void write_correlation_csv(const CorrelationStudy& study, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "method,mean_nss,mean_accuracy\n";
  for (const auto& p : study.points) {
    out << p.method << ',' << format_real(p.nss) << ',' << format_real(p.accuracy) << '\n';
  }
  out << "pearson," << format_real(study.coefficient) << ",\n";
}

}  // namespace salmod

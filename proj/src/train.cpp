#include "salmod/train.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <iostream>
#include <thread>

#include "salmod/rng.hpp"

namespace salmod {

void Hyperparams::validate() const {
  if (epochs == 0) throw std::invalid_argument("epochs must be positive");
  if (!(learning_rate >= 0)) throw std::invalid_argument("learning rate must be >= 0");
  if (!(weight_decay >= 0)) throw std::invalid_argument("weight decay must be >= 0");
  if (!(momentum >= 0 && momentum < 1)) throw std::invalid_argument("momentum must be in [0,1)");
  if (batch_size == 0) throw std::invalid_argument("batch size must be positive");
}

std::vector<std::string> config_frozen_prefixes(const NetworkConfig& config) {
  if (config.freeze_saliency) return {"sal."};
  return {};
}

namespace {

const SaliencyMap* saliency_of(const NetworkConfig& config, const Sample& s) {
  if (!config.uses_saliency()) return nullptr;
  if (!s.saliency) throw std::invalid_argument("sample '" + s.name + "' has no saliency map");
  return &*s.saliency;
}

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

Real mean_of(const std::vector<Real>& v) {
  Real s = 0;
  for (Real x : v) s += x;
  return v.empty() ? Real{0} : s / static_cast<Real>(v.size());
}

}  // namespace

TrainResult train(ModelState model, const NetworkConfig& config, const Dataset& data,
                  const std::vector<std::size_t>& ids, const Hyperparams& hyper, std::uint64_t seed,
                  const TrainOptions& options) {
  hyper.validate();
  if (ids.empty()) throw std::invalid_argument("train: empty training subset");
  for (std::size_t id : ids) {
    if (id >= data.samples.size()) throw std::out_of_range("train: sample id out of range");
  }

  std::vector<std::string> frozen = options.frozen_prefixes;
  for (auto& p : config_frozen_prefixes(config)) frozen.push_back(p);

  std::map<std::string, Tensor> velocity;
  for (const auto& [name, t] : model.params) {
    if (!is_frozen(name, frozen)) velocity.emplace(name, Tensor::zeros_like(t));
  }

  const std::size_t batch = std::min(hyper.batch_size, ids.size());
  const std::size_t stride = fusion_stride(config);
  const std::uint64_t shuffle_seed = derive_seed(seed, "shuffle");

  TrainResult result;
  std::vector<std::size_t> order = ids;
  for (std::size_t epoch = 0; epoch < hyper.epochs; ++epoch) {
    Rng rng(derive_seed(shuffle_seed, epoch));
    shuffle(order, rng);
    Real loss_sum = 0;
    Real fraction_sum = 0;

    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      std::map<std::string, Tensor> grad_sum;
      for (const auto& [name, v] : velocity) grad_sum.emplace(name, Tensor::zeros_like(v));

      for (std::size_t i = start; i < end; ++i) {
        const Sample& s = data.samples[order[i]];
        Tape tape;
        BoundParameters p = bind_parameters(tape, model, frozen);
        ForwardResult fr = forward(tape, p, config, s.image, saliency_of(config, s), options.gradient_energy);
        Var loss = softmax_cross_entropy(fr.logits, s.label);
        const Real l = loss.value()[0];
        if (!std::isfinite(l)) {
          throw DivergenceError("training diverged: loss " + std::to_string(l) + " at epoch " +
                                std::to_string(epoch + 1) + ", sample '" + s.name + "'");
        }
        loss_sum += l;
        tape.backward(loss);
        for (auto& [name, g] : grad_sum) {
          const Var v = p.at(name);
          if (!tape.has_grad(v)) continue;
          const Tensor& pg = tape.grad(v);
          for (std::size_t j = 0; j < g.size(); ++j) g[j] += pg[j];
        }
        if (options.gradient_energy) {
          const Tensor g = tape.grad_or_zero(*fr.fusion_input);
          fraction_sum += energy_fraction(g, project_bbox(s.bbox, stride, g.dim(1), g.dim(2)));
        }
      }

      const Real inv = Real{1} / static_cast<Real>(end - start);
      for (auto& [name, v] : velocity) {
        Tensor& w = model.params.at(name);
        const Tensor& g = grad_sum.at(name);
        for (std::size_t j = 0; j < w.size(); ++j) {
          const Real d = g[j] * inv + hyper.weight_decay * w[j];
          v[j] = hyper.momentum * v[j] + d;
          w[j] -= hyper.learning_rate * v[j];
        }
      }
    }

    if (!model.all_finite()) {
      throw DivergenceError("training diverged: non-finite parameters after epoch " +
                            std::to_string(epoch + 1));
    }
    const Real n = static_cast<Real>(order.size());
    result.epoch_loss.push_back(loss_sum / n);
    if (options.gradient_energy) result.epoch_gradient_fraction.push_back(fraction_sum / n);
  }
  result.state = std::move(model);
  return result;
}

std::size_t predict(const ModelState& model, const NetworkConfig& config, const Sample& sample) {
  Tape tape;
  BoundParameters p = bind_parameters(tape, model, {""});
  ForwardResult fr = forward(tape, p, config, sample.image, saliency_of(config, sample));
  const Tensor& z = fr.logits.value();
  std::size_t best = 0;
  for (std::size_t i = 1; i < z.size(); ++i) {
    if (z[i] > z[best]) best = i;
  }
  return best;
}

Real evaluate(const ModelState& model, const NetworkConfig& config, const Dataset& data,
              const std::vector<std::size_t>& ids) {
  if (ids.empty()) throw std::invalid_argument("evaluate: no samples");
  std::size_t correct = 0;
  for (std::size_t id : ids) {
    const Sample& s = data.samples.at(id);
    if (predict(model, config, s) == s.label) ++correct;
  }
  return Real{100} * static_cast<Real>(correct) / static_cast<Real>(ids.size());
}

BBox project_bbox(const BBox& box, std::size_t stride, std::size_t grid_h, std::size_t grid_w) {
  if (stride == 0 || grid_h == 0 || grid_w == 0) throw std::invalid_argument("project_bbox: empty grid");
  auto lo = [&](std::size_t v, std::size_t n) { return std::min(v / stride, n - 1); };
  auto hi = [&](std::size_t v, std::size_t n) { return std::min((v + stride) / stride - 1, n - 1); };
  return {lo(box.x0, grid_w), lo(box.y0, grid_h), hi(box.x1, grid_w), hi(box.y1, grid_h)};
}

Real energy_fraction(const Tensor& grad, const BBox& b) {
  if (grad.rank() != 3) throw ShapeError("energy_fraction: expected [C,h,w]");
  const std::size_t C = grad.dim(0), H = grad.dim(1), W = grad.dim(2);
  Real total = 0, inside = 0;
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t y = 0; y < H; ++y) {
      for (std::size_t x = 0; x < W; ++x) {
        const Real a = std::abs(grad[(c * H + y) * W + x]);
        total += a;
        if (b.contains(x, y)) inside += a;
      }
    }
  }
  if (total == 0) {
    std::clog << "gradient energy: zero total gradient, using the box area share\n";
    return static_cast<Real>(b.area()) / static_cast<Real>(H * W);
  }
  return std::clamp(inside / total, Real{0}, Real{1});
}

Real gradient_energy_fraction(const ModelState& model, const NetworkConfig& config,
                              const Sample& sample) {
  Tape tape;
  BoundParameters p = bind_parameters(tape, model);
  ForwardResult fr = forward(tape, p, config, sample.image, saliency_of(config, sample), true);
  tape.backward(softmax_cross_entropy(fr.logits, sample.label));
  const Tensor g = tape.grad_or_zero(*fr.fusion_input);
  return energy_fraction(g, project_bbox(sample.bbox, fusion_stride(config), g.dim(1), g.dim(2)));
}

std::vector<KSummary> RunReport::summary() const {
  std::vector<KSummary> out;
  for (const CellResult& c : cells) {
    if (std::none_of(out.begin(), out.end(), [&](const KSummary& s) { return s.k == c.k; })) {
      out.push_back({c.k, 0, 0});
    }
  }
  for (KSummary& s : out) {
    std::vector<Real> acc;
    for (const CellResult& c : cells) {
      if (c.k == s.k) acc.push_back(c.accuracy);
    }
    s.mean = mean_of(acc);
    Real var = 0;
    for (Real a : acc) var += (a - s.mean) * (a - s.mean);
    s.std = std::sqrt(var / static_cast<Real>(acc.size()));
  }
  return out;
}

Real RunReport::mean_accuracy(std::size_t k) const {
  for (const KSummary& s : summary()) {
    if (s.k == k) return s.mean;
  }
  throw std::invalid_argument("report '" + name + "' has no k=" + k_label(k));
}

Real RunReport::mean_gradient_fraction() const {
  std::vector<Real> per_cell;
  for (const CellResult& c : cells) {
    if (!c.epoch_gradient_fraction.empty()) per_cell.push_back(mean_of(c.epoch_gradient_fraction));
  }
  if (per_cell.empty()) throw std::logic_error("report '" + name + "' has no gradient series");
  return mean_of(per_cell);
}

std::vector<Real> RunReport::gradient_series() const {
  std::vector<Real> series;
  std::size_t n = 0;
  for (const CellResult& c : cells) {
    if (c.epoch_gradient_fraction.empty()) continue;
    if (series.empty()) series.assign(c.epoch_gradient_fraction.size(), 0);
    if (c.epoch_gradient_fraction.size() != series.size()) {
      throw std::logic_error("gradient series of unequal length");
    }
    for (std::size_t e = 0; e < series.size(); ++e) series[e] += c.epoch_gradient_fraction[e];
    ++n;
  }
  for (Real& v : series) v /= static_cast<Real>(n);
  return series;
}

std::uint64_t cell_seed(std::uint64_t base, std::size_t seed_index) {
  return derive_seed(derive_seed(base, "cell"), seed_index);
}

std::size_t resolve_threads(std::size_t requested) {
  std::size_t n = requested ? requested : std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("SALMOD_THREADS")) {
    char* end = nullptr;
    const unsigned long cap = std::strtoul(env, &end, 10);
    if (end != env && *end == '\0' && cap > 0) n = std::min<std::size_t>(n, cap);
  }
  return n;
}

RunReport scarce_protocol(const Dataset& data, const SplitPlan& plan, const NetworkConfig& config,
                          const Hyperparams& hyper, const ProtocolSpec& spec, const InitFn& init) {
  config.validate();
  hyper.validate();
  if (spec.seeds == 0) throw std::invalid_argument("protocol needs at least one seed");
  if (spec.k_list.empty()) throw std::invalid_argument("protocol needs a non-empty k list");
  for (std::size_t k : spec.k_list) {
    if (k == 0 || (k != kFullPool && k > plan.min_pool())) {
      throw std::invalid_argument("k=" + k_label(k) + " exceeds the smallest class pool (" +
                                  std::to_string(plan.min_pool()) + ")");
    }
  }

  RunReport report;
  report.name = config.name();
  for (std::size_t k : spec.k_list) {
    for (std::size_t s = 0; s < spec.seeds; ++s) {
      CellResult c;
      c.k = k;
      c.seed = s;
      report.cells.push_back(std::move(c));
    }
  }
  const std::vector<std::size_t> test = plan.test_ids();

  auto run_cell = [&](CellResult& cell) {
    const std::uint64_t cs = cell_seed(spec.seed, cell.seed);
    ModelState start = init(derive_seed(cs, "init"));
    const std::vector<std::size_t> ids = subset(plan, cell.k, derive_seed(cs, "subset"));
    TrainOptions opts;
    opts.gradient_energy = spec.gradient_energy;
    TrainResult r = train(std::move(start), config, data, ids, hyper, derive_seed(cs, "train"), opts);
    cell.accuracy = evaluate(r.state, config, data, test);
    cell.epoch_loss = std::move(r.epoch_loss);
    cell.epoch_gradient_fraction = std::move(r.epoch_gradient_fraction);
    for (const auto& [layer, how] : r.state.provenance) cell.provenance.push_back(layer + "=" + how);
    if (spec.keep_states) cell.state = std::move(r.state);
  };

  const std::size_t workers = std::min(resolve_threads(spec.threads), report.cells.size());
  std::vector<std::exception_ptr> errors(report.cells.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < report.cells.size(); i = next++) {
      try {
        run_cell(report.cells[i]);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < workers; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return report;
}

std::string format_real(Real v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

void write_results_csv(const RunReport& report, const std::filesystem::path& path) {
  auto out = open_output(path);
  out << "k,seed,accuracy\n";
  for (const CellResult& c : report.cells) {
    out << k_label(c.k) << ',' << c.seed << ',' << format_real(c.accuracy) << '\n';
  }
}

void write_summary_csv(const RunReport& report, const std::filesystem::path& path) {
  auto out = open_output(path);
  out << "k,mean,std\n";
  for (const KSummary& s : report.summary()) {
    out << k_label(s.k) << ',' << format_real(s.mean) << ',' << format_real(s.std) << '\n';
  }
}

void write_gradient_csv(const RunReport& saliency, const RunReport& baseline,
                        const std::filesystem::path& path) {
  const auto a = saliency.gradient_series();
  const auto b = baseline.gradient_series();
  if (a.size() != b.size()) throw std::invalid_argument("gradient series differ in length");
  auto out = open_output(path);
  out << "epoch,fraction_saliency,fraction_baseline\n";
  for (std::size_t e = 0; e < a.size(); ++e) {
    out << e + 1 << ',' << format_real(a[e]) << ',' << format_real(b[e]) << '\n';
  }
}

}  // namespace salmod

#include "salmod/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

namespace salmod {

std::string to_string(SaliencySource s) {
  switch (s) {
    case SaliencySource::none: return "none";
    case SaliencySource::white: return "white";
    case SaliencySource::center: return "center";
    case SaliencySource::itti_koch: return "itti_koch";
    case SaliencySource::bms: return "bms";
    case SaliencySource::oracle: return "oracle";
    case SaliencySource::import: return "import";
    case SaliencySource::index: return "index";
  }
  return "?";
}

SaliencySource parse_saliency_source(const std::string& s) {
  for (auto v : {SaliencySource::none, SaliencySource::white, SaliencySource::center, SaliencySource::itti_koch,
                 SaliencySource::bms, SaliencySource::oracle, SaliencySource::import, SaliencySource::index}) {
    if (to_string(v) == s) return v;
  }
  throw ConfigError("unknown saliency method '" + s +
                    "' (expected none, white, center, itti_koch, bms, oracle, import or index)");
}

bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) { return serialize(a) == serialize(b); }

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError(key + ": '" + v + "' is not a valid number");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(key + ": '" + v + "' is not a boolean");
}

std::string real_text(Real v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

struct Entry {
  const char* key;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

template <typename T>
Entry count_entry(const char* key, T ExperimentConfig::*field) {
  return {key, [key, field](ExperimentConfig& c, const std::string& v) { c.*field = parse_number<T>(key, v); },
          [field](const ExperimentConfig& c) { return std::to_string(c.*field); }};
}

const std::vector<Entry>& entries() {
  using C = ExperimentConfig;
  static const std::vector<Entry> table = {
      {"data.folder", [](C& c, const std::string& v) { c.data_folder = v; },
       [](const C& c) { return c.data_folder.string(); }},
      {"data.classes", [](C& c, const std::string& v) { c.data.num_classes = parse_number<std::size_t>("data.classes", v); },
       [](const C& c) { return std::to_string(c.data.num_classes); }},
      {"data.samples_per_class",
       [](C& c, const std::string& v) { c.data.samples_per_class = parse_number<std::size_t>("data.samples_per_class", v); },
       [](const C& c) { return std::to_string(c.data.samples_per_class); }},
      {"data.height", [](C& c, const std::string& v) { c.data.height = parse_number<std::size_t>("data.height", v); },
       [](const C& c) { return std::to_string(c.data.height); }},
      {"data.width", [](C& c, const std::string& v) { c.data.width = parse_number<std::size_t>("data.width", v); },
       [](const C& c) { return std::to_string(c.data.width); }},
      {"data.subtlety", [](C& c, const std::string& v) { c.data.subtlety = parse_number<Real>("data.subtlety", v); },
       [](const C& c) { return real_text(c.data.subtlety); }},
      {"data.clutter", [](C& c, const std::string& v) { c.data.clutter = parse_number<Real>("data.clutter", v); },
       [](const C& c) { return real_text(c.data.clutter); }},
      {"data.seed", [](C& c, const std::string& v) { c.data.seed = parse_number<std::uint64_t>("data.seed", v); },
       [](const C& c) { return std::to_string(c.data.seed); }},

      {"net.variant", [](C& c, const std::string& v) { c.net.variant = parse_variant(v); },
       [](const C& c) { return to_string(c.net.variant); }},
      {"net.fusion_level", [](C& c, const std::string& v) { c.net.fusion_level = parse_number<int>("net.fusion_level", v); },
       [](const C& c) { return std::to_string(c.net.fusion_level); }},
      {"net.saliency_depth",
       [](C& c, const std::string& v) { c.net.saliency_depth = parse_number<int>("net.saliency_depth", v); },
       [](const C& c) { return std::to_string(c.net.saliency_depth); }},
      {"net.saliency_width",
       [](C& c, const std::string& v) { c.net.saliency_width = parse_number<Real>("net.saliency_width", v); },
       [](const C& c) { return real_text(c.net.saliency_width); }},
      {"net.skip", [](C& c, const std::string& v) { c.net.skip = parse_bool("net.skip", v); },
       [](const C& c) { return std::string(c.net.skip ? "true" : "false"); }},
      {"net.pool_position", [](C& c, const std::string& v) { c.net.pool_position = parse_pool_position(v); },
       [](const C& c) { return to_string(c.net.pool_position); }},
      {"net.init", [](C& c, const std::string& v) { c.net.init = parse_init_mode(v); },
       [](const C& c) { return to_string(c.net.init); }},
      {"net.freeze_saliency", [](C& c, const std::string& v) { c.net.freeze_saliency = parse_bool("net.freeze_saliency", v); },
       [](const C& c) { return std::string(c.net.freeze_saliency ? "true" : "false"); }},

      {"train.epochs", [](C& c, const std::string& v) { c.hyper.epochs = parse_number<std::size_t>("train.epochs", v); },
       [](const C& c) { return std::to_string(c.hyper.epochs); }},
      {"train.lr", [](C& c, const std::string& v) { c.hyper.learning_rate = parse_number<Real>("train.lr", v); },
       [](const C& c) { return real_text(c.hyper.learning_rate); }},
      {"train.weight_decay",
       [](C& c, const std::string& v) { c.hyper.weight_decay = parse_number<Real>("train.weight_decay", v); },
       [](const C& c) { return real_text(c.hyper.weight_decay); }},
      {"train.momentum", [](C& c, const std::string& v) { c.hyper.momentum = parse_number<Real>("train.momentum", v); },
       [](const C& c) { return real_text(c.hyper.momentum); }},
      {"train.batch_size",
       [](C& c, const std::string& v) { c.hyper.batch_size = parse_number<std::size_t>("train.batch_size", v); },
       [](const C& c) { return std::to_string(c.hyper.batch_size); }},

      {"pretrain.epochs",
       [](C& c, const std::string& v) { c.pretrain_hyper.epochs = parse_number<std::size_t>("pretrain.epochs", v); },
       [](const C& c) { return std::to_string(c.pretrain_hyper.epochs); }},
      {"pretrain.lr", [](C& c, const std::string& v) { c.pretrain_hyper.learning_rate = parse_number<Real>("pretrain.lr", v); },
       [](const C& c) { return real_text(c.pretrain_hyper.learning_rate); }},
      {"pretrain.weight_decay",
       [](C& c, const std::string& v) { c.pretrain_hyper.weight_decay = parse_number<Real>("pretrain.weight_decay", v); },
       [](const C& c) { return real_text(c.pretrain_hyper.weight_decay); }},
      count_entry("pretrain.classes", &C::pretrain_classes),
      count_entry("pretrain.samples_per_class", &C::pretrain_samples_per_class),

      {"saliency.method", [](C& c, const std::string& v) { c.saliency = parse_saliency_source(v); },
       [](const C& c) { return to_string(c.saliency); }},
      {"saliency.quality", [](C& c, const std::string& v) { c.saliency_quality = parse_number<Real>("saliency.quality", v); },
       [](const C& c) { return real_text(c.saliency_quality); }},
      {"saliency.path", [](C& c, const std::string& v) { c.saliency_path = v; },
       [](const C& c) { return c.saliency_path.string(); }},
      count_entry("saliency.bms_thresholds", &C::bms_thresholds),
      count_entry("saliency.seed", &C::saliency_seed),

      {"protocol.k", [](C& c, const std::string& v) { c.k_list = parse_k_list(v); },
       [](const C& c) { return format_k_list(c.k_list); }},
      count_entry("protocol.seeds", &C::seeds),
      count_entry("protocol.seed", &C::protocol_seed),
      {"protocol.grad_energy", [](C& c, const std::string& v) { c.gradient_energy = parse_bool("protocol.grad_energy", v); },
       [](const C& c) { return std::string(c.gradient_energy ? "true" : "false"); }},

      {"output.dir", [](C& c, const std::string& v) { c.output_dir = v; },
       [](const C& c) { return c.output_dir.string(); }},
  };
  return table;
}

}  // namespace

std::vector<std::size_t> parse_k_list(const std::string& text) {
  std::vector<std::size_t> ks;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item == "K") {
      ks.push_back(kFullPool);
    } else {
      const auto k = parse_number<std::size_t>("protocol.k", item);
      if (k == 0) throw ConfigError("protocol.k: k must be positive");
      ks.push_back(k);
    }
  }
  if (ks.empty()) throw ConfigError("protocol.k: empty list");
  if (std::set<std::size_t>(ks.begin(), ks.end()).size() != ks.size()) {
    throw ConfigError("protocol.k: duplicate entries");
  }
  return ks;
}

std::string format_k_list(const std::vector<std::size_t>& ks) {
  std::string out;
  for (std::size_t i = 0; i < ks.size(); ++i) out += (i ? "," : "") + k_label(ks[i]);
  return out;
}

ExperimentConfig parse_config(const std::string& text, const std::string& origin) {
  std::map<std::string, const Entry*> by_key;
  for (const Entry& e : entries()) by_key[e.key] = &e;

  std::vector<std::pair<const Entry*, std::string>> assignments;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = origin + ":" + std::to_string(lineno) + ": ";
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    auto it = by_key.find(key);
    if (it == by_key.end()) throw ConfigError(where + "unknown key '" + key + "'");
    if (!seen.insert(key).second) throw ConfigError(where + "duplicate key '" + key + "'");
    assignments.emplace_back(it->second, value);
  }

  ExperimentConfig c;
  try {
    for (const auto& [entry, value] : assignments) entry->set(c, value);
  } catch (const ConfigError& e) {
    throw ConfigError(origin + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(origin + ": " + e.what());
  }
  if (!seen.count("net.pool_position")) c.net.pool_position = default_pool_position(c.net.variant);
  c.net.num_classes = c.data.num_classes;
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.string());
}

std::string serialize(const ExperimentConfig& config) {
  std::string out;
  for (const Entry& e : entries()) out += std::string(e.key) + " = " + e.get(config) + "\n";
  return out;
}

void ExperimentConfig::validate(bool need_dataset) const {
  if (data_folder.empty() || need_dataset) data.validate();
  net.validate();
  hyper.validate();
  pretrain_hyper.validate();
  if (net.num_classes != data.num_classes) throw ConfigError("net class count differs from data.classes");
  if (need_dataset && !data_folder.empty() && !std::filesystem::exists(data_folder / kIndexFile)) {
    throw ConfigError("data.folder " + data_folder.string() + " has no " + kIndexFile);
  }
  if (seeds == 0) throw ConfigError("protocol.seeds must be positive");
  if (!(saliency_quality >= 0 && saliency_quality <= 1)) throw ConfigError("saliency.quality must be in [0,1]");
  if (saliency == SaliencySource::import) {
    if (saliency_path.empty()) throw ConfigError("saliency.method = import needs saliency.path");
    if (!std::filesystem::is_directory(saliency_path)) {
      throw ConfigError("saliency.path " + saliency_path.string() + " is not a directory");
    }
  } else if (!saliency_path.empty()) {
    throw ConfigError("saliency.path is only used with saliency.method = import");
  }
  if (saliency == SaliencySource::index && data_folder.empty()) {
    throw ConfigError("saliency.method = index reads maps listed in data.folder's index");
  }
  if (net.uses_saliency() && saliency == SaliencySource::none) {
    throw ConfigError(to_string(net.variant) + " needs a saliency source (saliency.method)");
  }
  if (net.init != InitMode::none && (pretrain_hyper.epochs == 0 || pretrain_classes < 2 ||
                                     pretrain_samples_per_class < kTestPerClass + kValPerClass + 1)) {
    throw ConfigError("pretraining needs pretrain.epochs > 0, >= 2 classes and >= 11 samples per class");
  }
  if (net.init == InitMode::pretrained &&
      (saliency == SaliencySource::import || saliency == SaliencySource::index)) {
    throw ConfigError("init = pretrained generates base-task maps; choose a computed saliency.method");
  }
  if (bms_thresholds == 0) throw ConfigError("saliency.bms_thresholds must be positive");
}

}  // namespace salmod

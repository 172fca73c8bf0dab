#include "tagemb/config.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <map>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "tagemb/error.hpp"
#include "tagemb/text_io.hpp"

namespace tagemb {

namespace {

using Getter = std::function<std::string(const PipelineConfig&)>;
using Setter = std::function<void(PipelineConfig&, const std::string&)>;

struct Field {
  std::string key;
  Getter get;
  Setter set;
};

std::string join_list(const std::vector<std::string>& items) { return fmt::format("{}", fmt::join(items, ",")); }

std::vector<std::string> parse_list(const std::string& text) {
  std::vector<std::string> out;
  for (const auto item : split(text, ',')) {
    const auto trimmed = trim(item);
    if (!trimmed.empty()) out.emplace_back(trimmed);
  }
  return out;
}

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  for (const auto& item : parse_list(text)) out.push_back(static_cast<int>(parse_int(item)));
  return out;
}

bool parse_bool(const std::string& text) {
  if (text == "true" || text == "1" || text == "on" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "off" || text == "no") return false;
  throw FormatError(fmt::format("'{}' is not a boolean", text));
}

std::string bool_string(bool value) { return value ? "true" : "false"; }

template <typename T>
T parse_count(const std::string& text) {
  const long long value = parse_int(text);
  if (value < 0) throw FormatError(fmt::format("'{}' must be non-negative", text));
  return static_cast<T>(value);
}

Field path_field(std::string key, std::filesystem::path PipelineConfig::*member) {
  return {std::move(key), [member](const PipelineConfig& c) { return (c.*member).string(); },
          [member](PipelineConfig& c, const std::string& v) { c.*member = v; }};
}

Field double_field(std::string key, std::function<double&(PipelineConfig&)> ref) {
  return {std::move(key), [ref](const PipelineConfig& c) { return format_double(ref(const_cast<PipelineConfig&>(c))); },
          [ref](PipelineConfig& c, const std::string& v) { ref(c) = parse_double(v); }};
}

Field int_field(std::string key, std::function<int&(PipelineConfig&)> ref) {
  return {std::move(key), [ref](const PipelineConfig& c) { return std::to_string(ref(const_cast<PipelineConfig&>(c))); },
          [ref](PipelineConfig& c, const std::string& v) { ref(c) = static_cast<int>(parse_int(v)); }};
}

Field u64_field(std::string key, std::function<std::uint64_t&(PipelineConfig&)> ref) {
  return {std::move(key), [ref](const PipelineConfig& c) { return std::to_string(ref(const_cast<PipelineConfig&>(c))); },
          [ref](PipelineConfig& c, const std::string& v) { ref(c) = parse_count<std::uint64_t>(v); }};
}

Field size_field(std::string key, std::function<std::size_t&(PipelineConfig&)> ref) {
  return {std::move(key), [ref](const PipelineConfig& c) { return std::to_string(ref(const_cast<PipelineConfig&>(c))); },
          [ref](PipelineConfig& c, const std::string& v) { ref(c) = parse_count<std::size_t>(v); }};
}

Field bool_field(std::string key, std::function<bool&(PipelineConfig&)> ref) {
  return {std::move(key), [ref](const PipelineConfig& c) { return bool_string(ref(const_cast<PipelineConfig&>(c))); },
          [ref](PipelineConfig& c, const std::string& v) { ref(c) = parse_bool(v); }};
}

Field list_field(std::string key, std::function<std::vector<std::string>&(PipelineConfig&)> ref) {
  return {std::move(key), [ref](const PipelineConfig& c) { return join_list(ref(const_cast<PipelineConfig&>(c))); },
          [ref](PipelineConfig& c, const std::string& v) { ref(c) = parse_list(v); }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    f.push_back(path_field("paths.tags", &PipelineConfig::tags_file));
    f.push_back(path_field("paths.features", &PipelineConfig::features_manifest));
    f.push_back(path_field("paths.wavs", &PipelineConfig::wav_manifest));
    f.push_back(path_field("paths.out", &PipelineConfig::out_dir));
    f.push_back(u64_field("seed", [](PipelineConfig& c) -> auto& { return c.seed; }));
    f.push_back(list_field("data.intersect", [](PipelineConfig& c) -> auto& { return c.intersect; }));
    f.push_back(list_field("lsi.tag_sets", [](PipelineConfig& c) -> auto& { return c.tag_sets; }));
    f.push_back(int_field("lsi.k", [](PipelineConfig& c) -> auto& { return c.lsi_k; }));
    f.push_back(double_field("lsi.tolerance", [](PipelineConfig& c) -> auto& { return c.svd_tolerance; }));
    f.push_back({"sweep.grid",
                 [](const PipelineConfig& c) { return fmt::format("{}", fmt::join(c.sweep_grid, ",")); },
                 [](PipelineConfig& c, const std::string& v) { c.sweep_grid = parse_grid(v); }});
    f.push_back({"sweep.combos",
                 [](const PipelineConfig& c) {
                   if (c.sweep_combos.empty()) return std::string("all");
                   std::vector<std::string> parts;
                   for (const auto& combo : c.sweep_combos) parts.push_back(join_list(combo));
                   return fmt::format("{}", fmt::join(parts, ";"));
                 },
                 [](PipelineConfig& c, const std::string& v) {
                   c.sweep_combos = v == "all" ? std::vector<std::vector<std::string>>{} : parse_combos(v);
                 }});
    f.push_back({"split.fractions",
                 [](const PipelineConfig& c) {
                   return fmt::format("{},{},{}", format_double(c.split_fractions[0]),
                                      format_double(c.split_fractions[1]), format_double(c.split_fractions[2]));
                 },
                 [](PipelineConfig& c, const std::string& v) {
                   if (v == "default") {
                     c.split_fractions = default_split_fractions();
                     return;
                   }
                   const auto parts = parse_list(v);
                   if (parts.size() != 3) throw FormatError("expected three comma-separated fractions");
                   double sum = 0.0;
                   std::array<double, 3> raw{};
                   for (std::size_t i = 0; i < 3; ++i) sum += raw[i] = parse_double(parts[i]);
                   if (!(sum > 0.0)) throw FormatError("fractions must have a positive sum");
                   for (std::size_t i = 0; i < 3; ++i) c.split_fractions[i] = raw[i] / sum;
                 }});
    f.push_back(double_field("mining.theta_pos", [](PipelineConfig& c) -> auto& { return c.mining.theta_pos; }));
    f.push_back(double_field("mining.theta_neg", [](PipelineConfig& c) -> auto& { return c.mining.theta_neg; }));
    f.push_back({"mining.strategy", [](const PipelineConfig& c) { return to_string(c.mining.strategy); },
                 [](PipelineConfig& c, const std::string& v) { c.mining.strategy = parse_mining_strategy(v); }});
    f.push_back(size_field("mining.batch_size", [](PipelineConfig& c) -> auto& { return c.batch_size; }));
    f.push_back(double_field("train.margin", [](PipelineConfig& c) -> auto& { return c.margin; }));
    f.push_back({"train.reduction", [](const PipelineConfig& c) { return to_string(c.reduction); },
                 [](PipelineConfig& c, const std::string& v) { c.reduction = parse_reduction(v); }});
    f.push_back({"train.encoder", [](const PipelineConfig& c) { return to_string(c.encoder); },
                 [](PipelineConfig& c, const std::string& v) { c.encoder = parse_encoder_kind(v); }});
    f.push_back({"train.hidden", [](const PipelineConfig& c) { return fmt::format("{}", fmt::join(c.hidden, ",")); },
                 [](PipelineConfig& c, const std::string& v) { c.hidden = parse_int_list(v); }});
    f.push_back(int_field("train.dim", [](PipelineConfig& c) -> auto& { return c.embedding_dim; }));
    f.push_back(bool_field("train.normalize", [](PipelineConfig& c) -> auto& { return c.normalize; }));
    f.push_back({"train.optimizer", [](const PipelineConfig& c) { return to_string(c.optimizer); },
                 [](PipelineConfig& c, const std::string& v) { c.optimizer = parse_optimizer(v); }});
    f.push_back(double_field("train.learning_rate", [](PipelineConfig& c) -> auto& { return c.learning_rate; }));
    f.push_back(int_field("train.epochs", [](PipelineConfig& c) -> auto& { return c.epochs; }));
    f.push_back(bool_field("train.dump_triplets", [](PipelineConfig& c) -> auto& { return c.dump_triplets; }));
    f.push_back(size_field("eval.k", [](PipelineConfig& c) -> auto& { return c.eval_k; }));
    f.push_back({"eval.metric", [](const PipelineConfig& c) { return to_string(c.metric); },
                 [](PipelineConfig& c, const std::string& v) { c.metric = parse_metric(v); }});
    f.push_back(int_field("topics.ordinal", [](PipelineConfig& c) -> auto& { return c.topic_ordinal; }));
    f.push_back(int_field("topics.top_n", [](PipelineConfig& c) -> auto& { return c.topic_top_n; }));
    f.push_back({"features.mode", [](const PipelineConfig& c) { return to_string(c.feature_mode); },
                 [](PipelineConfig& c, const std::string& v) { c.feature_mode = parse_feature_mode(v); }});
    f.push_back(double_field("features.sample_rate", [](PipelineConfig& c) -> auto& { return c.mel.sample_rate; }));
    f.push_back(int_field("features.n_fft", [](PipelineConfig& c) -> auto& { return c.mel.n_fft; }));
    f.push_back(int_field("features.hop", [](PipelineConfig& c) -> auto& { return c.mel.hop; }));
    f.push_back(int_field("features.n_mels", [](PipelineConfig& c) -> auto& { return c.mel.n_mels; }));
    f.push_back(double_field("features.f_min", [](PipelineConfig& c) -> auto& { return c.mel.f_min; }));
    f.push_back(double_field("features.f_max", [](PipelineConfig& c) -> auto& { return c.mel.f_max; }));
    f.push_back(double_field("features.offset", [](PipelineConfig& c) -> auto& { return c.mel.offset_seconds; }));
    f.push_back(double_field("features.length", [](PipelineConfig& c) -> auto& { return c.mel.segment_seconds; }));
    f.push_back(int_field("synth.clusters", [](PipelineConfig& c) -> auto& { return c.synth.n_clusters; }));
    f.push_back(int_field("synth.tracks_per_cluster",
                          [](PipelineConfig& c) -> auto& { return c.synth.tracks_per_cluster; }));
    f.push_back(int_field("synth.feature_dim", [](PipelineConfig& c) -> auto& { return c.synth.feature_dim; }));
    f.push_back(double_field("synth.noise", [](PipelineConfig& c) -> auto& { return c.synth.noise_sigma; }));
    f.push_back(int_field("synth.tags_per_cluster", [](PipelineConfig& c) -> auto& { return c.synth.tags_per_cluster; }));
    f.push_back(int_field("synth.artists_per_cluster",
                          [](PipelineConfig& c) -> auto& { return c.synth.artists_per_cluster; }));
    f.push_back(int_field("synth.tracks_per_album", [](PipelineConfig& c) -> auto& { return c.synth.tracks_per_album; }));
    f.push_back(double_field("synth.overlap", [](PipelineConfig& c) -> auto& { return c.synth.overlap; }));
    f.push_back(double_field("synth.tag_probability",
                             [](PipelineConfig& c) -> auto& { return c.synth.tag_probability; }));
    f.push_back(list_field("synth.tag_sets", [](PipelineConfig& c) -> auto& { return c.synth.tag_sets; }));
    f.push_back(u64_field("synth.seed", [](PipelineConfig& c) -> auto& { return c.synth.seed; }));
    return f;
  }();
  return table;
}

const Field& field(const std::string& key) {
  for (const auto& f : fields()) {
    if (f.key == key) return f;
  }
  throw ParameterError(fmt::format("unknown config key '{}'", key));
}

}  // namespace

PipelineConfig::PipelineConfig() {
  for (int k = 10; k <= 400; k += 10) sweep_grid.push_back(k);
  synth.tracks_per_cluster = 300;
  synth.artists_per_cluster = 30;
}

void PipelineConfig::set(const std::string& key, const std::string& value) {
  const auto& f = field(key);
  try {
    f.set(*this, std::string(trim(value)));
  } catch (const Error& e) {
    throw ParameterError(fmt::format("invalid value for '{}': {}", key, e.what()));
  }
}

std::string PipelineConfig::get(const std::string& key) const { return field(key).get(*this); }

const std::vector<std::string>& PipelineConfig::keys() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& f : fields()) out.push_back(f.key);
    return out;
  }();
  return names;
}

std::vector<std::pair<std::string, std::string>> PipelineConfig::values() const {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& f : fields()) out.emplace_back(f.key, f.get(*this));
  return out;
}

std::filesystem::path PipelineConfig::corpus_path() const {
  return tags_file.empty() ? out("corpus.tsv") : tags_file;
}

std::filesystem::path PipelineConfig::features_path() const {
  return features_manifest.empty() ? out("features.manifest.tsv") : features_manifest;
}

TrainConfig PipelineConfig::train_config() const {
  TrainConfig config;
  config.epochs = epochs;
  config.batch_size = batch_size;
  config.learning_rate = learning_rate;
  config.optimizer = optimizer;
  config.seed = seed;
  config.mining = mining;
  config.mining.seed = seed;
  config.loss.margin = margin;
  config.loss.reduction = reduction;
  config.validate();
  return config;
}

std::vector<int> PipelineConfig::encoder_dims(int input_dim) const {
  switch (encoder) {
    case EncoderKind::identity:
      return {input_dim};
    case EncoderKind::linear:
      return {input_dim, embedding_dim};
    case EncoderKind::mlp: {
      std::vector<int> dims = {input_dim};
      dims.insert(dims.end(), hidden.begin(), hidden.end());
      dims.push_back(embedding_dim);
      return dims;
    }
  }
  return {input_dim};
}

void load_config(PipelineConfig& config, std::istream& in, std::string_view source) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    const auto body = trim(std::string_view(line).substr(0, hash));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string_view::npos) {
      throw ParameterError(fmt::format("{}:{}: expected 'key = value'", source, line_no));
    }
    const std::string key(trim(body.substr(0, eq)));
    const std::string value(trim(body.substr(eq + 1)));
    try {
      config.set(key, value);
    } catch (const ParameterError& e) {
      throw ParameterError(fmt::format("{}:{}: {}", source, line_no, e.what()));
    }
  }
}

void load_config(PipelineConfig& config, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParameterError(fmt::format("cannot open config file '{}'", path.string()));
  load_config(config, in, path.string());
}

void write_config(const PipelineConfig& config, std::ostream& out) {
  for (const auto& [key, value] : config.values()) out << key << " = " << value << '\n';
}

std::vector<int> parse_grid(std::string_view text) {
  std::vector<int> grid;
  const auto parts = split(text, ':');
  if (parts.size() == 3) {
    const auto lo = parse_int(trim(parts[0]));
    const auto hi = parse_int(trim(parts[1]));
    const auto step = parse_int(trim(parts[2]));
    if (step <= 0 || lo > hi) throw FormatError(fmt::format("bad grid range '{}'", text));
    for (auto k = lo; k <= hi; k += step) grid.push_back(static_cast<int>(k));
  } else if (parts.size() == 1) {
    grid = parse_int_list(std::string(text));
  } else {
    throw FormatError(fmt::format("bad grid '{}' (lo:hi:step or a comma list)", text));
  }
  if (grid.empty()) throw FormatError("empty grid");
  for (const int k : grid) {
    if (k < 1) throw FormatError("grid entries must be positive");
  }
  return grid;
}

std::vector<std::vector<std::string>> parse_combos(std::string_view text) {
  std::vector<std::vector<std::string>> combos;
  for (const auto part : split(text, ';')) {
    auto combo = parse_list(std::string(part));
    if (combo.empty()) continue;
    std::sort(combo.begin(), combo.end());
    combos.push_back(std::move(combo));
  }
  if (combos.empty()) throw FormatError("no tag-set combination given");
  return combos;
}

}  // namespace tagemb

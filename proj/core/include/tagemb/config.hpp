#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "tagemb/audiofeat.hpp"
#include "tagemb/encoder.hpp"
#include "tagemb/eval.hpp"
#include "tagemb/mining.hpp"
#include "tagemb/synth.hpp"
#include "tagemb/trainer.hpp"

namespace tagemb {

struct PipelineConfig {
  // Empty paths fall back to the conventional files under `out_dir`.
  std::filesystem::path tags_file;
  std::filesystem::path features_manifest;
  std::filesystem::path wav_manifest;
  std::filesystem::path out_dir = "out";

  std::uint64_t seed = 0;

  std::vector<std::string> intersect = kDefaultTagSets;
  std::vector<std::string> tag_sets = kDefaultTagSets;
  int lsi_k = 20;
  double svd_tolerance = 1e-10;
  std::vector<int> sweep_grid;  // 10, 20, ..., 400 by default
  std::vector<std::vector<std::string>> sweep_combos;  // empty: every non-empty combination of tag_sets

  std::array<double, 3> split_fractions = default_split_fractions();

  MiningConfig mining;
  std::size_t batch_size = 600;

  double margin = 0.2;
  Reduction reduction = Reduction::mean;
  EncoderKind encoder = EncoderKind::mlp;
  std::vector<int> hidden = {512};
  int embedding_dim = 256;
  bool normalize = true;
  OptimizerKind optimizer = OptimizerKind::adam;
  double learning_rate = 1e-3;
  int epochs = 10;
  bool dump_triplets = false;

  std::size_t eval_k = 100;
  Metric metric = Metric::euclidean;

  int topic_ordinal = 0;  // 0-based
  int topic_top_n = 10;

  FeatureMode feature_mode = FeatureMode::flatten;
  MelParams mel;

  SynthSpec synth;

  PipelineConfig();

  // Throws ParameterError naming the key for unknown keys or unparsable values.
  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;
  static const std::vector<std::string>& keys();
  // Every key with its canonical value, in keys() order.
  std::vector<std::pair<std::string, std::string>> values() const;

  std::filesystem::path corpus_path() const;
  std::filesystem::path features_path() const;
  std::filesystem::path out(const std::string& name) const { return out_dir / name; }

  TrainConfig train_config() const;
  std::vector<int> encoder_dims(int input_dim) const;
};

// `key = value` lines; '#' starts a comment. Later lines override earlier ones.
void load_config(PipelineConfig& config, std::istream& in, std::string_view source = "<stream>");
void load_config(PipelineConfig& config, const std::filesystem::path& path);
void write_config(const PipelineConfig& config, std::ostream& out);

// "10:400:10" or "10,20,30".
std::vector<int> parse_grid(std::string_view text);
// Semicolon-separated combinations, each comma-separated: "genres;genres,moods".
std::vector<std::vector<std::string>> parse_combos(std::string_view text);

}  // namespace tagemb

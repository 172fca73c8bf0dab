#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "tagemb/audiofeat.hpp"
#include "tagemb/config.hpp"
#include "tagemb/encoder.hpp"
#include "tagemb/eval.hpp"
#include "tagemb/lsi.hpp"
#include "tagemb/tagspace.hpp"
#include "tagemb/trainer.hpp"

namespace tagemb {

// Corpus restricted to the given tracks (unknown ids are ignored).
TagCorpus subset_corpus(const TagCorpus& corpus, const std::vector<std::string>& track_ids);

SplitSpec make_split(const TagCorpus& corpus, const PipelineConfig& config);

// LSI over the training tracks only.
LsiModel fit_lsi_model(const TagCorpus& corpus, const SplitSpec& split, const std::vector<std::string>& tag_sets,
                       int k, double tolerance = 1e-10);

// Training tracks present in the LSI model and the feature table, in id order.
TrainingData make_training_data(const TagCorpus& corpus, const FeatureTable& features, const LsiModel& lsi,
                                const SplitSpec& split);

TrainResult train_encoder(const PipelineConfig& config, const TrainingData& data, std::ostream* triplet_dump = nullptr);

// Embeds every row of the feature table.
EmbeddingTable embed_features(const EncoderModel& model, const FeatureTable& features);

// fit LSI -> train -> embed -> evaluate. Library errors become the row's failure message.
EvaluationRow run_cell(const PipelineConfig& config, const TagCorpus& corpus, const FeatureTable& features,
                       const SplitSpec& split, const std::vector<std::string>& tag_sets, int k);

// Every non-empty subset, by size and then lexicographically.
std::vector<std::vector<std::string>> tag_set_combinations(std::vector<std::string> tag_sets);

// Digest of everything a cell's result depends on.
std::string cell_key(const PipelineConfig& config, const std::vector<std::string>& tag_sets, int k,
                     const std::string& input_digest);

struct SweepStats {
  std::size_t computed = 0;
  std::size_t cached = 0;
  std::size_t failed = 0;
};

// Rows ordered by combination then grid value; cells found in `cache_dir` are reused.
std::vector<EvaluationRow> sweep(const PipelineConfig& config, const TagCorpus& corpus, const FeatureTable& features,
                                 const SplitSpec& split, const std::filesystem::path& cache_dir,
                                 const std::string& input_digest, SweepStats* stats = nullptr);

}  // namespace tagemb

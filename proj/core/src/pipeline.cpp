#include "tagemb/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "tagemb/error.hpp"
#include "tagemb/text_io.hpp"

namespace tagemb {

TagCorpus subset_corpus(const TagCorpus& corpus, const std::vector<std::string>& track_ids) {
  const std::set<std::string, std::less<>> keep(track_ids.begin(), track_ids.end());
  std::vector<TagAssignment> rows;
  for (const auto& row : corpus.assignments()) {
    if (keep.contains(row.track_id)) rows.push_back(row);
  }
  return TagCorpus::from_assignments(std::move(rows));
}

SplitSpec make_split(const TagCorpus& corpus, const PipelineConfig& config) {
  return stratified_split(corpus, config.split_fractions, config.seed);
}

LsiModel fit_lsi_model(const TagCorpus& corpus, const SplitSpec& split, const std::vector<std::string>& tag_sets,
                       int k, double tolerance) {
  const TagCorpus train = subset_corpus(corpus, split.train);
  if (train.empty()) throw DataError("training split has no tagged tracks");
  SvdOptions options;
  options.tolerance = tolerance;
  return LsiModel::fit(build_matrix(train, tag_sets), k, options);
}

TrainingData make_training_data(const TagCorpus& corpus, const FeatureTable& features, const LsiModel& lsi,
                                const SplitSpec& split) {
  TrainingData data;
  std::vector<std::string> ids;
  for (const auto& id : split.train) {
    if (lsi.find_track(id) && features.find(id) >= 0) ids.push_back(id);
  }
  std::sort(ids.begin(), ids.end());
  if (ids.empty()) throw DataError("no training track has both LSI vector and features");
  const auto n = static_cast<Eigen::Index>(ids.size());
  data.features.resize(n, features.values.cols());
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto& id = ids[static_cast<std::size_t>(r)];
    data.features.row(r) = features.values.row(features.find(id));
    data.album_ids.push_back(corpus.album_of(corpus.track_index(id)));
  }
  data.lsi_vectors = normalized_track_vectors(lsi, ids);
  data.track_ids = std::move(ids);
  return data;
}

TrainResult train_encoder(const PipelineConfig& config, const TrainingData& data, std::ostream* triplet_dump) {
  const TrainConfig train_config = config.train_config();
  auto model = EncoderModel::create(config.encoder, config.encoder_dims(static_cast<int>(data.features.cols())),
                                    config.normalize, config.seed);
  return train(std::move(model), data, train_config, triplet_dump);
}

EmbeddingTable embed_features(const EncoderModel& model, const FeatureTable& features) {
  return EmbeddingTable(features.track_ids, model.forward(features.values));
}

EvaluationRow run_cell(const PipelineConfig& config, const TagCorpus& corpus, const FeatureTable& features,
                       const SplitSpec& split, const std::vector<std::string>& tag_sets, int k) {
  EvaluationRow row;
  try {
    const LsiModel lsi = fit_lsi_model(corpus, split, tag_sets, k, config.svd_tolerance);
    const TrainingData data = make_training_data(corpus, features, lsi, split);
    const TrainResult trained = train_encoder(config, data);
    const EmbeddingTable embeddings = embed_features(trained.model, features);
    std::vector<std::string> test_ids;
    for (const auto& id : split.test) {
      if (embeddings.find(id) >= 0) test_ids.push_back(id);
    }
    row = evaluate(embeddings, test_ids, corpus, config.eval_k, config.metric);
  } catch (const Error& e) {
    row = EvaluationRow{};
    row.k = config.eval_k;
    row.results.resize(default_tasks().size());
    row.failure = e.what();
  }
  row.tag_set = tag_set_label(tag_sets);
  row.lsi_topics = k;
  return row;
}

std::vector<std::vector<std::string>> tag_set_combinations(std::vector<std::string> tag_sets) {
  std::sort(tag_sets.begin(), tag_sets.end());
  tag_sets.erase(std::unique(tag_sets.begin(), tag_sets.end()), tag_sets.end());
  if (tag_sets.size() > 20) throw ParameterError("too many tag sets to enumerate combinations");
  std::vector<std::vector<std::string>> combos;
  const std::size_t count = std::size_t{1} << tag_sets.size();
  for (std::size_t mask = 1; mask < count; ++mask) {
    std::vector<std::string> combo;
    for (std::size_t i = 0; i < tag_sets.size(); ++i) {
      if (mask & (std::size_t{1} << i)) combo.push_back(tag_sets[i]);
    }
    combos.push_back(std::move(combo));
  }
  std::sort(combos.begin(), combos.end(), [](const auto& a, const auto& b) {
    if (a.size() != b.size()) return a.size() < b.size();
    return a < b;
  });
  return combos;
}

std::string cell_key(const PipelineConfig& config, const std::vector<std::string>& tag_sets, int k,
                     const std::string& input_digest) {
  static const std::vector<std::string> prefixes = {"seed", "split.", "mining.", "train.", "eval.", "lsi.tolerance"};
  Digest digest;
  digest.update(input_digest).update("\n");
  for (const auto& [key, value] : config.values()) {
    if (key == "train.dump_triplets") continue;
    const bool relevant = std::any_of(prefixes.begin(), prefixes.end(), [&](const std::string& p) {
      return key == p || (p.back() == '.' && key.starts_with(p));
    });
    if (relevant) digest.update(key).update("=").update(value).update("\n");
  }
  digest.update(fmt::format("cell={}:{}\n", tag_set_label(tag_sets), k));
  return digest.hex();
}

std::vector<EvaluationRow> sweep(const PipelineConfig& config, const TagCorpus& corpus, const FeatureTable& features,
                                 const SplitSpec& split, const std::filesystem::path& cache_dir,
                                 const std::string& input_digest, SweepStats* stats) {
  const auto combos = config.sweep_combos.empty() ? tag_set_combinations(config.tag_sets) : config.sweep_combos;
  if (config.sweep_grid.empty()) throw ParameterError("sweep.grid is empty");
  std::filesystem::create_directories(cache_dir);
  SweepStats local;
  std::vector<EvaluationRow> rows;
  for (const auto& combo : combos) {
    for (const int k : config.sweep_grid) {
      const auto path = cache_dir / (cell_key(config, combo, k, input_digest) + ".row");
      std::optional<EvaluationRow> row;
      if (std::filesystem::exists(path)) {
        std::ifstream in(path, std::ios::binary);
        auto cached = read_report_tsv(in, path.string());
        if (cached.size() == 1) {
          row = std::move(cached.front());
          ++local.cached;
        }
      }
      if (!row) {
        row = run_cell(config, corpus, features, split, combo, k);
        AtomicFile file(path);
        write_report_tsv(std::span(&*row, 1), file.stream());
        file.commit();
        ++local.computed;
      }
      if (row->failure) ++local.failed;
      rows.push_back(std::move(*row));
    }
  }
  if (stats != nullptr) *stats = local;
  return rows;
}

}  // namespace tagemb

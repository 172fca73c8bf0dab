#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "tagemb/tagspace.hpp"

namespace tagemb {

enum class Metric { euclidean, cosine };

Metric parse_metric(const std::string& name);
std::string to_string(Metric metric);

// Track embeddings keyed by id; rows are kept in id order.
class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  // Sorts rows by track id; duplicates raise DataError.
  EmbeddingTable(std::vector<std::string> track_ids, Eigen::MatrixXd values);

  const std::vector<std::string>& track_ids() const noexcept { return track_ids_; }
  const Eigen::MatrixXd& values() const noexcept { return values_; }
  std::size_t size() const noexcept { return track_ids_.size(); }
  std::ptrdiff_t find(std::string_view track_id) const;

  EmbeddingTable subset(const std::vector<std::string>& track_ids) const;
  EmbeddingTable scaled(double factor) const;

  void save(std::ostream& out) const;
  void save(const std::filesystem::path& path) const;
  static EmbeddingTable load(std::istream& in, std::string_view source = "<stream>");
  static EmbeddingTable load(const std::filesystem::path& path);

 private:
  std::vector<std::string> track_ids_;
  Eigen::MatrixXd values_;
};

// The k nearest tracks other than the query; ties resolve by track id.
// Throws LookupError for an unknown query and DataError when the pool holds k or fewer tracks.
std::vector<std::string> knn_retrieve(const EmbeddingTable& embeddings, std::string_view query, std::size_t k,
                                      Metric metric = Metric::euclidean);

struct RelevanceTask {
  enum class Kind { tag_set, artist, album };
  Kind kind = Kind::tag_set;
  std::string tag_set;

  static RelevanceTask tags(std::string name) { return {Kind::tag_set, std::move(name)}; }
  static RelevanceTask artist() { return {Kind::artist, {}}; }
  static RelevanceTask album() { return {Kind::album, {}}; }
  std::string name() const;
};

// genres, styles, moods, themes, artist, album
const std::vector<RelevanceTask>& default_tasks();

// Fraction of `retrieved` relevant to `query`. Tag tasks: shares at least one tag of
// the family. Returns nullopt when the query has no tag in that family.
std::optional<double> precision_at_k(std::span<const std::string> retrieved, std::string_view query,
                                     const RelevanceTask& task, const TagCorpus& corpus);

struct SplitSpec {
  std::vector<std::string> train;
  std::vector<std::string> validation;
  std::vector<std::string> test;
  std::uint64_t seed = 0;
  std::array<double, 3> fractions{};

  void save(std::ostream& out) const;
  void save(const std::filesystem::path& path) const;
  static SplitSpec load(const std::filesystem::path& path);
};

// Proportional to 122766 / 6461 / 14358.
std::array<double, 3> default_split_fractions();

// Artists are shuffled with `seed` and each goes, with all its tracks, to the split
// furthest below its target track count (lowest split index on ties).
SplitSpec stratified_split(const TagCorpus& corpus, std::array<double, 3> fractions, std::uint64_t seed);

struct TaskResult {
  double precision = 0.0;  // NaN when every query was excluded
  std::size_t queries = 0;
  std::size_t excluded = 0;
};

struct EvaluationRow {
  std::string tag_set;
  int lsi_topics = 0;
  std::size_t k = 0;
  std::vector<TaskResult> results;  // parallel to default_tasks()
  std::optional<std::string> failure;
};

// Mean precision@k over queries from `test_ids`, retrieving within the test pool.
// Throws DataError for an empty test set or missing embeddings.
EvaluationRow evaluate(const EmbeddingTable& embeddings, const std::vector<std::string>& test_ids,
                       const TagCorpus& corpus, std::size_t k = 100, Metric metric = Metric::euclidean,
                       const std::vector<RelevanceTask>& tasks = default_tasks());

// Columns: tag_set, lsi_topics, prec_genres, prec_styles, prec_moods, prec_themes,
// prec_artists, prec_album with six decimals.
void write_report_tsv(std::span<const EvaluationRow> rows, std::ostream& out);
void write_report_table(std::span<const EvaluationRow> rows, std::ostream& out);
std::vector<EvaluationRow> read_report_tsv(std::istream& in, std::string_view source = "<stream>");

}  // namespace tagemb

#include "tagemb/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>

#include <fmt/format.h>

#include "tagemb/error.hpp"
#include "tagemb/random.hpp"
#include "tagemb/text_io.hpp"

namespace tagemb {

namespace {

constexpr int kEmbeddingVersion = 1;
constexpr int kReportVersion = 1;
constexpr int kSplitVersion = 1;
constexpr std::array<const char*, 6> kReportColumns = {"prec_genres", "prec_styles", "prec_moods",
                                                       "prec_themes", "prec_artists", "prec_album"};

}  // namespace

Metric parse_metric(const std::string& name) {
  if (name == "euclidean") return Metric::euclidean;
  if (name == "cosine") return Metric::cosine;
  throw ParameterError(fmt::format("unknown metric '{}' (euclidean, cosine)", name));
}

std::string to_string(Metric metric) { return metric == Metric::euclidean ? "euclidean" : "cosine"; }

EmbeddingTable::EmbeddingTable(std::vector<std::string> track_ids, Eigen::MatrixXd values) {
  if (static_cast<Eigen::Index>(track_ids.size()) != values.rows()) {
    throw ParameterError("embedding ids and rows differ in count");
  }
  std::vector<std::size_t> order(track_ids.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return track_ids[a] < track_ids[b]; });
  values_.resize(values.rows(), values.cols());
  for (std::size_t r = 0; r < order.size(); ++r) {
    if (r > 0 && track_ids[order[r]] == track_ids[order[r - 1]]) {
      throw DataError(fmt::format("duplicate embedding for track '{}'", track_ids[order[r]]));
    }
    track_ids_.push_back(track_ids[order[r]]);
    values_.row(static_cast<Eigen::Index>(r)) = values.row(static_cast<Eigen::Index>(order[r]));
  }
}

std::ptrdiff_t EmbeddingTable::find(std::string_view track_id) const {
  const auto it = std::lower_bound(track_ids_.begin(), track_ids_.end(), track_id);
  if (it == track_ids_.end() || *it != track_id) return -1;
  return it - track_ids_.begin();
}

EmbeddingTable EmbeddingTable::subset(const std::vector<std::string>& track_ids) const {
  Eigen::MatrixXd rows(static_cast<Eigen::Index>(track_ids.size()), values_.cols());
  for (std::size_t i = 0; i < track_ids.size(); ++i) {
    const auto index = find(track_ids[i]);
    if (index < 0) throw DataError(fmt::format("no embedding for track '{}'", track_ids[i]));
    rows.row(static_cast<Eigen::Index>(i)) = values_.row(index);
  }
  return EmbeddingTable(track_ids, std::move(rows));
}

EmbeddingTable EmbeddingTable::scaled(double factor) const {
  EmbeddingTable copy = *this;
  copy.values_ *= factor;
  return copy;
}

void EmbeddingTable::save(std::ostream& out) const {
  write_version_line(out, "embeddings", kEmbeddingVersion);
  out << "dims\t" << values_.rows() << '\t' << values_.cols() << '\n';
  for (std::size_t r = 0; r < track_ids_.size(); ++r) {
    out << track_ids_[r];
    for (Eigen::Index c = 0; c < values_.cols(); ++c) {
      out << '\t' << format_double(values_(static_cast<Eigen::Index>(r), c));
    }
    out << '\n';
  }
}

void EmbeddingTable::save(const std::filesystem::path& path) const {
  AtomicFile file(path);
  save(file.stream());
  file.commit();
}

EmbeddingTable EmbeddingTable::load(std::istream& in, std::string_view source) {
  const std::string src(source);
  std::string line;
  if (!std::getline(in, line)) throw FormatError(fmt::format("{}: empty embeddings file", src));
  check_version_line(line, "embeddings", kEmbeddingVersion, src);
  if (!std::getline(in, line)) throw ParseError(src, 2, "missing dims");
  const auto dims = split(line, '\t');
  if (dims.size() != 3 || dims[0] != "dims") throw ParseError(src, 2, "expected 'dims<TAB>n<TAB>d'");
  const auto n = static_cast<Eigen::Index>(parse_int(dims[1]));
  const auto d = static_cast<Eigen::Index>(parse_int(dims[2]));
  std::vector<std::string> ids;
  Eigen::MatrixXd values(n, d);
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto line_no = static_cast<std::size_t>(r + 3);
    if (!std::getline(in, line)) throw ParseError(src, line_no, "truncated embeddings");
    const auto fields = split(line, '\t');
    if (static_cast<Eigen::Index>(fields.size()) != d + 1) throw ParseError(src, line_no, "wrong column count");
    ids.emplace_back(fields[0]);
    try {
      for (Eigen::Index c = 0; c < d; ++c) values(r, c) = parse_double(fields[static_cast<std::size_t>(c + 1)]);
    } catch (const FormatError& e) {
      throw ParseError(src, line_no, e.what());
    }
  }
  return EmbeddingTable(std::move(ids), std::move(values));
}

EmbeddingTable EmbeddingTable::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(fmt::format("cannot open embeddings '{}'", path.string()));
  return load(in, path.string());
}

std::vector<std::string> knn_retrieve(const EmbeddingTable& embeddings, std::string_view query, std::size_t k,
                                      Metric metric) {
  const auto q = embeddings.find(query);
  if (q < 0) throw LookupError(fmt::format("query track '{}' has no embedding", query));
  if (k == 0) throw ParameterError("knn_retrieve: k must be positive");
  if (embeddings.size() <= k) {
    throw DataError(fmt::format("retrieval pool of {} tracks cannot serve k = {}", embeddings.size(), k));
  }
  const auto& values = embeddings.values();
  const auto query_row = values.row(q);
  const double query_norm = query_row.norm();
  if (metric == Metric::cosine && query_norm == 0.0) throw DegenerateError("cosine retrieval with a zero query");

  std::vector<std::pair<double, Eigen::Index>> scored;
  scored.reserve(embeddings.size() - 1);
  for (Eigen::Index r = 0; r < values.rows(); ++r) {
    if (r == q) continue;
    double distance = 0.0;
    if (metric == Metric::euclidean) {
      for (Eigen::Index c = 0; c < values.cols(); ++c) {
        const double diff = values(r, c) - query_row[c];
        distance += diff * diff;
      }
    } else {
      const double norm = values.row(r).norm();
      if (norm == 0.0) throw DegenerateError("cosine retrieval with a zero embedding");
      distance = 1.0 - values.row(r).dot(query_row) / (norm * query_norm);
    }
    scored.emplace_back(distance, r);
  }
  const auto middle = scored.begin() + static_cast<std::ptrdiff_t>(k);
  std::partial_sort(scored.begin(), middle, scored.end());
  std::vector<std::string> result;
  result.reserve(k);
  for (auto it = scored.begin(); it != middle; ++it) {
    result.push_back(embeddings.track_ids()[static_cast<std::size_t>(it->second)]);
  }
  return result;
}

std::string RelevanceTask::name() const {
  switch (kind) {
    case Kind::tag_set:
      return tag_set;
    case Kind::artist:
      return "artist";
    case Kind::album:
      return "album";
  }
  return {};
}

const std::vector<RelevanceTask>& default_tasks() {
  static const std::vector<RelevanceTask> tasks = {
      RelevanceTask::tags("genres"), RelevanceTask::tags("styles"), RelevanceTask::tags("moods"),
      RelevanceTask::tags("themes"), RelevanceTask::artist(),       RelevanceTask::album(),
  };
  return tasks;
}

std::optional<double> precision_at_k(std::span<const std::string> retrieved, std::string_view query,
                                     const RelevanceTask& task, const TagCorpus& corpus) {
  if (retrieved.empty()) throw ParameterError("precision_at_k: empty retrieval list");
  const std::size_t q = corpus.track_index(query);
  std::vector<std::size_t> query_tags;
  if (task.kind == RelevanceTask::Kind::tag_set) {
    for (const auto tag : corpus.tags_of(q)) {
      if (corpus.tags()[tag].tag_set == task.tag_set) query_tags.push_back(tag);
    }
    if (query_tags.empty()) return std::nullopt;
  }
  std::size_t relevant = 0;
  for (const auto& id : retrieved) {
    const std::size_t r = corpus.track_index(id);
    bool hit = false;
    switch (task.kind) {
      case RelevanceTask::Kind::artist:
        hit = corpus.artist_of(r) == corpus.artist_of(q);
        break;
      case RelevanceTask::Kind::album:
        hit = corpus.album_of(r) == corpus.album_of(q);
        break;
      case RelevanceTask::Kind::tag_set: {
        const auto& tags = corpus.tags_of(r);
        hit = std::any_of(query_tags.begin(), query_tags.end(),
                          [&](std::size_t t) { return std::binary_search(tags.begin(), tags.end(), t); });
        break;
      }
    }
    if (hit) ++relevant;
  }
  return static_cast<double>(relevant) / static_cast<double>(retrieved.size());
}

std::array<double, 3> default_split_fractions() {
  constexpr double train = 122766.0;
  constexpr double validation = 6461.0;
  constexpr double test = 14358.0;
  constexpr double total = train + validation + test;
  return {train / total, validation / total, test / total};
}

SplitSpec stratified_split(const TagCorpus& corpus, std::array<double, 3> fractions, std::uint64_t seed) {
  double sum = 0.0;
  for (const double f : fractions) {
    if (!(f > 0.0)) throw ParameterError("split fractions must be positive");
    sum += f;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw ParameterError(fmt::format("split fractions sum to {}, not 1", sum));

  std::map<std::string, std::vector<std::string>> by_artist;
  for (std::size_t t = 0; t < corpus.track_count(); ++t) by_artist[corpus.artist_of(t)].push_back(corpus.tracks()[t]);
  if (by_artist.size() < fractions.size()) {
    throw DataError(fmt::format("{} artists cannot fill {} splits", by_artist.size(), fractions.size()));
  }
  std::vector<const std::vector<std::string>*> artists;
  for (const auto& [artist, tracks] : by_artist) artists.push_back(&tracks);
  Rng rng(seed, 0x5b1d);
  rng.shuffle(std::span(artists));

  const auto total = static_cast<double>(corpus.track_count());
  std::array<double, 3> assigned{};
  std::array<std::vector<std::string>*, 3> targets{};
  SplitSpec split;
  split.seed = seed;
  split.fractions = fractions;
  targets = {&split.train, &split.validation, &split.test};
  for (const auto* tracks : artists) {
    std::size_t best = 0;
    double best_deficit = -std::numeric_limits<double>::infinity();
    for (std::size_t s = 0; s < 3; ++s) {
      const double deficit = fractions[s] * total - assigned[s];
      if (deficit > best_deficit) {
        best_deficit = deficit;
        best = s;
      }
    }
    assigned[best] += static_cast<double>(tracks->size());
    targets[best]->insert(targets[best]->end(), tracks->begin(), tracks->end());
  }
  for (auto* part : targets) std::sort(part->begin(), part->end());
  return split;
}

void SplitSpec::save(std::ostream& out) const {
  write_version_line(out, "split", kSplitVersion);
  out << "# seed " << seed << " fractions " << format_double(fractions[0]) << ' ' << format_double(fractions[1])
      << ' ' << format_double(fractions[2]) << '\n';
  const std::array<std::pair<const char*, const std::vector<std::string>*>, 3> parts = {
      {{"train", &train}, {"validation", &validation}, {"test", &test}}};
  for (const auto& [name, ids] : parts) {
    for (const auto& id : *ids) out << id << '\t' << name << '\n';
  }
}

void SplitSpec::save(const std::filesystem::path& path) const {
  AtomicFile file(path);
  save(file.stream());
  file.commit();
}

SplitSpec SplitSpec::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(fmt::format("cannot open split '{}'", path.string()));
  std::string line;
  if (!std::getline(in, line)) throw FormatError(fmt::format("{}: empty split file", path.string()));
  check_version_line(line, "split", kSplitVersion, path.string());
  SplitSpec split;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.starts_with("# seed ")) {
      const auto fields = tagemb::split(line, ' ');
      if (fields.size() == 7) {
        split.seed = static_cast<std::uint64_t>(parse_int(fields[2]));
        for (std::size_t i = 0; i < 3; ++i) split.fractions[i] = parse_double(fields[4 + i]);
      }
      continue;
    }
    if (line.starts_with('#') || trim(line).empty()) continue;
    const auto fields = tagemb::split(line, '\t');
    if (fields.size() != 2) throw ParseError(path.string(), line_no, "expected 'track_id<TAB>split'");
    if (fields[1] == "train") {
      split.train.emplace_back(fields[0]);
    } else if (fields[1] == "validation") {
      split.validation.emplace_back(fields[0]);
    } else if (fields[1] == "test") {
      split.test.emplace_back(fields[0]);
    } else {
      throw ParseError(path.string(), line_no, fmt::format("unknown split '{}'", fields[1]));
    }
  }
  return split;
}

EvaluationRow evaluate(const EmbeddingTable& embeddings, const std::vector<std::string>& test_ids,
                       const TagCorpus& corpus, std::size_t k, Metric metric,
                       const std::vector<RelevanceTask>& tasks) {
  if (test_ids.empty()) throw DataError("evaluation needs a non-empty test set");
  const EmbeddingTable pool = embeddings.subset(test_ids);
  EvaluationRow row;
  row.k = k;
  row.results.resize(tasks.size());
  std::vector<double> sums(tasks.size(), 0.0);
  for (const auto& query : pool.track_ids()) {
    const auto retrieved = knn_retrieve(pool, query, k, metric);
    for (std::size_t t = 0; t < tasks.size(); ++t) {
      const auto precision = precision_at_k(retrieved, query, tasks[t], corpus);
      if (precision) {
        sums[t] += *precision;
        ++row.results[t].queries;
      } else {
        ++row.results[t].excluded;
      }
    }
  }
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    auto& result = row.results[t];
    result.precision = result.queries > 0 ? sums[t] / static_cast<double>(result.queries)
                                          : std::numeric_limits<double>::quiet_NaN();
  }
  return row;
}

namespace {

std::string precision_cell(const EvaluationRow& row, std::size_t t) {
  if (row.failure || t >= row.results.size() || std::isnan(row.results[t].precision)) return "nan";
  return fmt::format("{:.6f}", row.results[t].precision);
}

}  // namespace

void write_report_tsv(std::span<const EvaluationRow> rows, std::ostream& out) {
  write_version_line(out, "report", kReportVersion);
  out << "tag_set\tlsi_topics";
  for (const auto* column : kReportColumns) out << '\t' << column;
  out << '\n';
  for (const auto& row : rows) {
    out << row.tag_set << '\t' << row.lsi_topics;
    for (std::size_t t = 0; t < kReportColumns.size(); ++t) out << '\t' << precision_cell(row, t);
    out << '\n';
  }
  for (const auto& row : rows) {
    if (row.failure) {
      out << "# failed\t" << row.tag_set << '\t' << row.lsi_topics << '\t' << *row.failure << '\n';
      continue;
    }
    out << "# counts\t" << row.tag_set << '\t' << row.lsi_topics << '\t' << row.k;
    for (const auto& r : row.results) out << '\t' << r.queries << '/' << r.excluded;
    out << '\n';
  }
}

void write_report_table(std::span<const EvaluationRow> rows, std::ostream& out) {
  std::size_t width = 8;
  for (const auto& row : rows) width = std::max(width, row.tag_set.size());
  out << fmt::format("{:<{}}  {:>10}", "tag_set", width, "lsi_topics");
  for (const auto* column : kReportColumns) out << fmt::format("  {:>12}", column);
  out << '\n';
  for (const auto& row : rows) {
    out << fmt::format("{:<{}}  {:>10}", row.tag_set, width, row.lsi_topics);
    for (std::size_t t = 0; t < kReportColumns.size(); ++t) out << fmt::format("  {:>12}", precision_cell(row, t));
    out << '\n';
  }
}

std::vector<EvaluationRow> read_report_tsv(std::istream& in, std::string_view source) {
  const std::string src(source);
  std::string line;
  if (!std::getline(in, line)) throw FormatError(fmt::format("{}: empty report", src));
  check_version_line(line, "report", kReportVersion, src);
  std::size_t line_no = 1;
  std::vector<EvaluationRow> rows;
  const auto find_row = [&](std::string_view tag_set, std::string_view topics) -> EvaluationRow& {
    const auto k = static_cast<int>(parse_int(topics));
    for (auto& row : rows) {
      if (row.tag_set == tag_set && row.lsi_topics == k) return row;
    }
    throw ParseError(src, line_no, "annotation for an unknown row");
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (line.starts_with("tag_set\t")) continue;
    const auto fields = split(line, '\t');
    if (line.starts_with("# failed\t")) {
      if (fields.size() < 4) throw ParseError(src, line_no, "malformed failure annotation");
      find_row(fields[1], fields[2]).failure = std::string(line.substr(
          static_cast<std::size_t>(fields[3].data() - line.data())));
      continue;
    }
    if (line.starts_with("# counts\t")) {
      if (fields.size() != 4 + kReportColumns.size()) throw ParseError(src, line_no, "malformed counts annotation");
      auto& row = find_row(fields[1], fields[2]);
      row.k = static_cast<std::size_t>(parse_int(fields[3]));
      for (std::size_t t = 0; t < kReportColumns.size(); ++t) {
        const auto parts = split(fields[4 + t], '/');
        if (parts.size() != 2) throw ParseError(src, line_no, "malformed query count");
        row.results[t].queries = static_cast<std::size_t>(parse_int(parts[0]));
        row.results[t].excluded = static_cast<std::size_t>(parse_int(parts[1]));
      }
      continue;
    }
    if (line.starts_with('#') || trim(line).empty()) continue;
    if (fields.size() != 2 + kReportColumns.size()) throw ParseError(src, line_no, "wrong column count");
    EvaluationRow row;
    row.tag_set = std::string(fields[0]);
    row.lsi_topics = static_cast<int>(parse_int(fields[1]));
    row.results.resize(kReportColumns.size());
    for (std::size_t t = 0; t < kReportColumns.size(); ++t) {
      row.results[t].precision =
          fields[2 + t] == "nan" ? std::numeric_limits<double>::quiet_NaN() : parse_double(fields[2 + t]);
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace tagemb

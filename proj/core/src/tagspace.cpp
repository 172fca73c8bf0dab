#include "tagemb/tagspace.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "tagemb/error.hpp"
#include "tagemb/text_io.hpp"

namespace tagemb {

namespace {

constexpr int kCorpusVersion = 1;

bool assignment_less(const TagAssignment& a, const TagAssignment& b) {
  return std::tie(a.track_id, a.tag_set, a.tag) < std::tie(b.track_id, b.tag_set, b.tag);
}

bool same_triple(const TagAssignment& a, const TagAssignment& b) {
  return a.track_id == b.track_id && a.tag_set == b.tag_set && a.tag == b.tag;
}

}  // namespace

TagCorpus TagCorpus::from_assignments(std::vector<TagAssignment> rows) {
  for (const auto& row : rows) {
    if (row.track_id.empty() || row.tag_set.empty() || row.tag.empty()) {
      throw DataError("assignment with empty track_id, tag_set or tag");
    }
  }
  std::stable_sort(rows.begin(), rows.end(), assignment_less);
  rows.erase(std::unique(rows.begin(), rows.end(), same_triple), rows.end());

  TagCorpus corpus;
  std::set<TagKey> tag_keys;
  for (const auto& row : rows) {
    if (corpus.tracks_.empty() || corpus.tracks_.back() != row.track_id) {
      corpus.tracks_.push_back(row.track_id);
      corpus.artists_.push_back(row.artist_id);
      corpus.albums_.push_back(row.album_id);
    } else if (corpus.artists_.back() != row.artist_id || corpus.albums_.back() != row.album_id) {
      throw DataError(fmt::format("track '{}' has conflicting artist/album identities",
                                  row.track_id));
    }
    tag_keys.insert(TagKey{row.tag_set, row.tag});
  }
  corpus.tags_.assign(tag_keys.begin(), tag_keys.end());
  for (std::size_t i = 0; i < corpus.tracks_.size(); ++i) {
    corpus.track_lookup_.emplace(corpus.tracks_[i], i);
  }
  for (std::size_t j = 0; j < corpus.tags_.size(); ++j) corpus.tag_lookup_.emplace(corpus.tags_[j], j);

  corpus.track_tags_.resize(corpus.tracks_.size());
  std::size_t track = 0;
  for (const auto& row : rows) {
    while (corpus.tracks_[track] != row.track_id) ++track;
    corpus.track_tags_[track].push_back(corpus.tag_lookup_.at(TagKey{row.tag_set, row.tag}));
  }
  // Rows are sorted by (tag_set, tag) within a track, which is tag-index order.
  corpus.assignments_ = std::move(rows);
  return corpus;
}

std::vector<std::string> TagCorpus::tag_sets() const {
  std::vector<std::string> names;
  for (const auto& key : tags_) {
    if (names.empty() || names.back() != key.tag_set) names.push_back(key.tag_set);
  }
  return names;
}

std::optional<std::size_t> TagCorpus::find_track(std::string_view track_id) const {
  const auto it = track_lookup_.find(track_id);
  if (it == track_lookup_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::size_t> TagCorpus::find_tag(const TagKey& key) const {
  const auto it = tag_lookup_.find(key);
  if (it == tag_lookup_.end()) return std::nullopt;
  return it->second;
}

std::size_t TagCorpus::track_index(std::string_view track_id) const {
  const auto index = find_track(track_id);
  if (!index) throw LookupError(fmt::format("unknown track '{}'", track_id));
  return *index;
}

bool TagCorpus::has_tag_set(std::size_t track, std::string_view tag_set) const {
  for (const auto tag : track_tags_.at(track)) {
    if (tags_[tag].tag_set == tag_set) return true;
  }
  return false;
}

TagCorpus parse_tag_stream(std::istream& in, std::string_view source) {
  std::vector<TagAssignment> rows;
  std::map<std::string, std::pair<std::string, std::string>> identity;
  const std::string src(source);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (is_version_line(line)) {
      check_version_line(line, "corpus", kCorpusVersion, fmt::format("{}:{}", src, line_no));
      continue;
    }
    if (line.starts_with('#') || trim(line).empty()) continue;
    const auto fields = split(line, '\t');
    if (fields.size() != 5) {
      throw ParseError(src, line_no,
                       fmt::format("expected 5 tab-separated columns, found {}", fields.size()));
    }
    TagAssignment row{std::string(fields[0]), std::string(fields[1]), std::string(fields[2]),
                      std::string(fields[3]), std::string(fields[4])};
    if (row.track_id.empty() || row.tag_set.empty() || row.tag.empty()) {
      throw ParseError(src, line_no, "track_id, tag_set and tag must be non-empty");
    }
    const auto [it, inserted] =
        identity.try_emplace(row.track_id, row.artist_id, row.album_id);
    if (!inserted && (it->second.first != row.artist_id || it->second.second != row.album_id)) {
      throw ParseError(src, line_no,
                       fmt::format("track '{}' has conflicting artist/album", row.track_id));
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw EmptyCorpusError(fmt::format("{}: no tag assignments", src));
  return TagCorpus::from_assignments(std::move(rows));
}

TagCorpus parse_tag_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(fmt::format("cannot open tag file '{}'", path.string()));
  return parse_tag_stream(in, path.string());
}

void write_tag_stream(const TagCorpus& corpus, std::ostream& out) {
  write_version_line(out, "corpus", kCorpusVersion);
  for (const auto& row : corpus.assignments()) {
    out << row.track_id << '\t' << row.artist_id << '\t' << row.album_id << '\t' << row.tag_set
        << '\t' << row.tag << '\n';
  }
}

TagCorpus intersect_tagsets(const TagCorpus& corpus, const std::vector<std::string>& required) {
  if (required.empty()) throw ParameterError("intersect_tagsets: required tag-set list is empty");
  std::vector<TagAssignment> kept;
  std::size_t track = 0;
  bool keep = false;
  for (const auto& row : corpus.assignments()) {
    if (corpus.tracks()[track] != row.track_id) {
      while (corpus.tracks()[track] != row.track_id) ++track;
    }
    keep = std::all_of(required.begin(), required.end(),
                       [&](const std::string& name) { return corpus.has_tag_set(track, name); });
    if (keep) kept.push_back(row);
  }
  if (kept.empty()) {
    throw EmptyCorpusError(fmt::format("no track carries tags in all of [{}]",
                                       fmt::join(required, ", ")));
  }
  return TagCorpus::from_assignments(std::move(kept));
}

TagTrackMatrix build_matrix(const TagCorpus& corpus, const std::vector<std::string>& tag_sets) {
  if (tag_sets.empty()) throw ParameterError("build_matrix: tag-set list is empty");
  const std::set<std::string, std::less<>> selected(tag_sets.begin(), tag_sets.end());

  TagTrackMatrix matrix;
  matrix.tag_sets.assign(selected.begin(), selected.end());
  std::vector<std::ptrdiff_t> row_of(corpus.tag_count(), -1);
  for (std::size_t j = 0; j < corpus.tag_count(); ++j) {
    if (selected.contains(corpus.tags()[j].tag_set)) {
      row_of[j] = static_cast<std::ptrdiff_t>(matrix.tags.size());
      matrix.tags.push_back(corpus.tags()[j]);
    }
  }
  std::vector<Eigen::Triplet<double>> entries;
  for (std::size_t t = 0; t < corpus.track_count(); ++t) {
    bool any = false;
    const auto col = static_cast<int>(matrix.tracks.size());
    for (const auto tag : corpus.tags_of(t)) {
      if (row_of[tag] < 0) continue;
      entries.emplace_back(static_cast<int>(row_of[tag]), col, 1.0);
      any = true;
    }
    if (any) matrix.tracks.push_back(corpus.tracks()[t]);
  }
  if (entries.empty()) {
    throw EmptyCorpusError(
        fmt::format("no assignments for tag sets [{}]", fmt::join(matrix.tag_sets, ", ")));
  }
  matrix.cells.resize(static_cast<Eigen::Index>(matrix.tags.size()),
                      static_cast<Eigen::Index>(matrix.tracks.size()));
  matrix.cells.setFromTriplets(entries.begin(), entries.end());
  matrix.cells.makeCompressed();
  return matrix;
}

std::vector<TagSetStats> corpus_stats(const TagCorpus& corpus) {
  std::vector<TagSetStats> stats;
  for (const auto& name : corpus.tag_sets()) {
    TagSetStats entry;
    entry.tag_set = name;
    std::set<std::vector<std::size_t>> combinations;
    std::set<std::string> albums;
    for (const auto& key : corpus.tags()) {
      if (key.tag_set == name) ++entry.unique_tags;
    }
    for (std::size_t t = 0; t < corpus.track_count(); ++t) {
      std::vector<std::size_t> subset;
      for (const auto tag : corpus.tags_of(t)) {
        if (corpus.tags()[tag].tag_set == name) subset.push_back(tag);
      }
      if (subset.empty()) continue;
      ++entry.labelled_tracks;
      albums.insert(corpus.album_of(t));
      combinations.insert(std::move(subset));
    }
    entry.tag_combinations = combinations.size();
    entry.labelled_albums = albums.size();
    stats.push_back(std::move(entry));
  }
  return stats;
}

void write_stats_table(const std::vector<TagSetStats>& stats, std::ostream& out) {
  std::size_t width = 10;
  for (const auto& s : stats) width = std::max(width, s.tag_set.size() + 2);
  out << fmt::format("{:<18}", "");
  for (const auto& s : stats) out << fmt::format("{:>{}}", s.tag_set, width);
  out << '\n';
  const auto row = [&](std::string_view label, auto field) {
    out << fmt::format("{:<18}", label);
    for (const auto& s : stats) out << fmt::format("{:>{}}", s.*field, width);
    out << '\n';
  };
  row("Unique Tags", &TagSetStats::unique_tags);
  row("Tag Combinations", &TagSetStats::tag_combinations);
  row("Labelled Albums", &TagSetStats::labelled_albums);
  row("Labelled Tracks", &TagSetStats::labelled_tracks);
}

void write_stats_tsv(const std::vector<TagSetStats>& stats, std::ostream& out) {
  write_version_line(out, "stats", 1);
  out << "tag_set\tunique_tags\ttag_combinations\tlabelled_albums\tlabelled_tracks\n";
  for (const auto& s : stats) {
    out << s.tag_set << '\t' << s.unique_tags << '\t' << s.tag_combinations << '\t'
        << s.labelled_albums << '\t' << s.labelled_tracks << '\n';
  }
}

std::string tag_set_label(const std::vector<std::string>& tag_sets) {
  std::vector<std::string> sorted = tag_sets;
  std::sort(sorted.begin(), sorted.end());
  return fmt::format("{}", fmt::join(sorted, "-"));
}

std::vector<std::string> parse_tag_set_list(std::string_view text) {
  std::vector<std::string> names;
  for (const auto part : split(text, ',')) {
    const auto name = trim(part);
    if (!name.empty()) names.emplace_back(name);
  }
  return names;
}

}  // namespace tagemb

#pragma once

#include <compare>
#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/SparseCore>

namespace tagemb {

// The four expert-annotated tag families. User-defined names are accepted anywhere.
inline const std::vector<std::string> kDefaultTagSets = {"genres", "styles", "moods", "themes"};

// A tag is identified by its family and label, so "rock" in two families is two tags.
struct TagKey {
  std::string tag_set;
  std::string tag;

  friend auto operator<=>(const TagKey&, const TagKey&) = default;
  friend bool operator==(const TagKey&, const TagKey&) = default;
};

struct TagAssignment {
  std::string track_id;
  std::string artist_id;
  std::string album_id;
  std::string tag_set;
  std::string tag;

  friend bool operator==(const TagAssignment&, const TagAssignment&) = default;
};

// Immutable multi-label annotation corpus. Track and tag indices are 0-based and
// follow lexicographic order of the identifiers.
class TagCorpus {
 public:
  TagCorpus() = default;

  // Deduplicates (track, tag_set, tag) triples. Throws DataError when one track is
  // given two different artists or albums, or when a required field is empty.
  static TagCorpus from_assignments(std::vector<TagAssignment> rows);

  bool empty() const noexcept { return tracks_.empty(); }
  std::size_t track_count() const noexcept { return tracks_.size(); }
  std::size_t tag_count() const noexcept { return tags_.size(); }

  // Sorted by (track_id, tag_set, tag).
  const std::vector<TagAssignment>& assignments() const noexcept { return assignments_; }
  const std::vector<std::string>& tracks() const noexcept { return tracks_; }
  const std::vector<TagKey>& tags() const noexcept { return tags_; }
  std::vector<std::string> tag_sets() const;

  std::optional<std::size_t> find_track(std::string_view track_id) const;
  std::optional<std::size_t> find_tag(const TagKey& key) const;
  // Throws LookupError for unknown ids.
  std::size_t track_index(std::string_view track_id) const;

  const std::string& artist_of(std::size_t track) const { return artists_.at(track); }
  const std::string& album_of(std::size_t track) const { return albums_.at(track); }

  // Sorted tag indices of one track.
  const std::vector<std::size_t>& tags_of(std::size_t track) const { return track_tags_.at(track); }
  bool has_tag_set(std::size_t track, std::string_view tag_set) const;

  friend bool operator==(const TagCorpus& a, const TagCorpus& b) {
    return a.assignments_ == b.assignments_;
  }

 private:
  std::vector<TagAssignment> assignments_;
  std::vector<std::string> tracks_;
  std::vector<TagKey> tags_;
  std::vector<std::string> artists_;
  std::vector<std::string> albums_;
  std::vector<std::vector<std::size_t>> track_tags_;
  std::map<std::string, std::size_t, std::less<>> track_lookup_;
  std::map<TagKey, std::size_t> tag_lookup_;
};

// Tab-separated rows: track_id, artist_id, album_id, tag_set, tag. Lines starting
// with '#' are comments; a "# tagemb corpus <v>" line is checked for version.
TagCorpus parse_tag_stream(std::istream& in, std::string_view source = "<stream>");
TagCorpus parse_tag_file(const std::filesystem::path& path);
void write_tag_stream(const TagCorpus& corpus, std::ostream& out);

// Keeps tracks holding at least one tag in every required family.
TagCorpus intersect_tagsets(const TagCorpus& corpus, const std::vector<std::string>& required);

// Binary incidence matrix: rows are tags, columns are tracks.
struct TagTrackMatrix {
  std::vector<std::string> tag_sets;
  std::vector<TagKey> tags;
  std::vector<std::string> tracks;
  Eigen::SparseMatrix<double> cells;

  Eigen::Index rows() const { return cells.rows(); }
  Eigen::Index cols() const { return cells.cols(); }
};

// Rows cover the union of tags in `tag_sets` (joining families before LSI); columns
// are the tracks carrying at least one of those tags.
TagTrackMatrix build_matrix(const TagCorpus& corpus, const std::vector<std::string>& tag_sets);

struct TagSetStats {
  std::string tag_set;
  std::size_t unique_tags = 0;
  std::size_t tag_combinations = 0;
  std::size_t labelled_albums = 0;
  std::size_t labelled_tracks = 0;

  friend bool operator==(const TagSetStats&, const TagSetStats&) = default;
};

// One entry per tag family, in family-name order. A combination is the unordered
// set of tags a track carries within one family.
std::vector<TagSetStats> corpus_stats(const TagCorpus& corpus);
void write_stats_table(const std::vector<TagSetStats>& stats, std::ostream& out);
void write_stats_tsv(const std::vector<TagSetStats>& stats, std::ostream& out);

// "genres-moods" style label for a family combination.
std::string tag_set_label(const std::vector<std::string>& tag_sets);
std::vector<std::string> parse_tag_set_list(std::string_view text);

}  // namespace tagemb

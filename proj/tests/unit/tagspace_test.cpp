#include <map>
#include <random>
#include <set>
#include <sstream>
#include <unordered_set>

#include <gtest/gtest.h>

#include "support/oracles.hpp"
#include "support/temp_dir.hpp"
#include "tagemb/error.hpp"
#include "tagemb/tagspace.hpp"
#include "tagemb/text_io.hpp"

using namespace tagemb;
using testing_support::TempDir;

namespace {

TagCorpus parse(const std::string& text) {
  std::istringstream in(text);
  return parse_tag_stream(in, "test");
}

std::string serialize(const TagCorpus& corpus) {
  std::ostringstream out;
  write_tag_stream(corpus, out);
  return out.str();
}

}  // namespace

TEST(TagFile, SingleRow) {
  const auto corpus = parse("t1\ta1\tal1\tgenres\tPop/Rock\n");
  EXPECT_EQ(corpus.track_count(), 1u);
  EXPECT_EQ(corpus.tag_count(), 1u);
  EXPECT_EQ(corpus.tags()[0], (TagKey{"genres", "Pop/Rock"}));
}

TEST(TagFile, DuplicateRowsCollapse) {
  const auto corpus = parse("t1\ta1\tal1\tgenres\tPop/Rock\nt1\ta1\tal1\tgenres\tPop/Rock\n");
  EXPECT_EQ(corpus.assignments().size(), 1u);
}

TEST(TagFile, AlbumMappingMatchesLineByLineReading) {
  const std::string text =
      "# comment\n"
      "t2\ta1\tal1\tgenres\tRock\n"
      "t1\ta1\tal1\tmoods\tCalm\n"
      "t3\ta2\tal2\tgenres\tJazz\n";
  const auto corpus = parse(text);
  std::map<std::string, std::string> album;
  std::istringstream lines(text);
  std::string line;
  while (std::getline(lines, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cols;
    std::string cur;
    for (const char ch : line) {
      if (ch == '\t') {
        cols.push_back(cur);
        cur.clear();
      } else {
        cur += ch;
      }
    }
    cols.push_back(cur);
    album[cols[0]] = cols[2];
  }
  for (const auto& [track, al] : album) EXPECT_EQ(corpus.album_of(corpus.track_index(track)), al);
  EXPECT_EQ(corpus.album_of(0), corpus.album_of(1));
  EXPECT_EQ(corpus.tracks(), (std::vector<std::string>{"t1", "t2", "t3"}));
}

TEST(TagFile, MalformedRowReportsLine) {
  try {
    parse("t1\ta1\tal1\tgenres\tRock\n\nt2\ta1\tal1\tgenres\n");
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
    EXPECT_NE(std::string(e.what()).find("test:3"), std::string::npos);
  }
}

TEST(TagFile, EmptyFileIsEmptyCorpus) {
  EXPECT_THROW(parse(""), EmptyCorpusError);
  EXPECT_THROW(parse("# only comments\n"), EmptyCorpusError);
}

TEST(TagFile, ConflictingAlbumIsRejected) {
  EXPECT_THROW(parse("t1\ta1\tal1\tgenres\tRock\nt1\ta1\tal2\tmoods\tCalm\n"), DataError);
}

TEST(TagFile, RejectsUnknownVersion) {
  EXPECT_THROW(parse("# tagemb corpus 7\nt1\ta1\tal1\tgenres\tRock\n"), FormatError);
  EXPECT_NO_THROW(parse("# tagemb corpus 1\nt1\ta1\tal1\tgenres\tRock\n"));
}

TEST(TagFile, RoundTripAndDeterministicIndex) {
  std::mt19937_64 eng(3);
  const auto corpus = gen::corpus(eng, {});
  const std::string text = serialize(corpus);
  const auto again = parse(text);
  EXPECT_EQ(again, corpus);
  EXPECT_EQ(serialize(again), text);

  // Reordered input lines give the same serialized corpus.
  std::istringstream lines(text);
  std::vector<std::string> rows;
  std::string line;
  while (std::getline(lines, line)) rows.push_back(line);
  std::shuffle(rows.begin() + 1, rows.end(), eng);
  std::string shuffled;
  for (const auto& r : rows) shuffled += r + "\n";
  EXPECT_EQ(serialize(parse(shuffled)), text);
}

TEST(TagFile, ReadsFromDisk) {
  TempDir dir;
  testing_support::write_text(dir / "tags.tsv", "t1\ta1\tal1\tgenres\tRock\n");
  EXPECT_EQ(parse_tag_file(dir / "tags.tsv").track_count(), 1u);
  EXPECT_THROW(parse_tag_file(dir / "missing.tsv"), DataError);
}

TEST(Intersect, KeepsTracksCoveringEverySet) {
  const auto corpus = parse(
      "t1\ta\tal\tgenres\tRock\n"
      "t2\ta\tal\tgenres\tPop\n"
      "t2\ta\tal\tmoods\tCalm\n");
  const auto kept = intersect_tagsets(corpus, {"genres", "moods"});
  EXPECT_EQ(kept.tracks(), std::vector<std::string>{"t2"});
  EXPECT_FALSE(kept.find_tag({"genres", "Rock"}).has_value());
  EXPECT_EQ(intersect_tagsets(corpus, {"genres"}), corpus);
  EXPECT_THROW(intersect_tagsets(corpus, {}), ParameterError);
  EXPECT_THROW(intersect_tagsets(corpus, {"themes"}), EmptyCorpusError);
}

TEST(Intersect, MatchesHashSetIntersection) {
  std::mt19937_64 eng(1000);
  gen::CorpusShape shape;
  shape.tracks = 1000;
  shape.coverage = 0.8;
  const auto corpus = gen::corpus(eng, shape);
  std::map<std::string, std::unordered_set<std::string>> by_set;
  for (const auto& a : corpus.assignments()) by_set[a.tag_set].insert(a.track_id);
  std::size_t expected = 0;
  for (const auto& track : by_set["genres"]) {
    bool all = true;
    for (const auto& ts : kDefaultTagSets) all = all && by_set[ts].count(track) > 0;
    expected += all ? 1 : 0;
  }
  const auto kept = intersect_tagsets(corpus, kDefaultTagSets);
  EXPECT_EQ(kept.track_count(), expected);
  EXPECT_EQ(intersect_tagsets(kept, kDefaultTagSets), kept);
}

TEST(Matrix, DirectTranscription) {
  const auto corpus = parse("t1\ta\tal\tgenres\tg1\nt2\ta\tal\tgenres\tg1\nt2\ta\tal\tgenres\tg2\n");
  const auto m = build_matrix(corpus, {"genres"});
  Eigen::MatrixXd expected(2, 2);
  expected << 1, 1, 0, 1;
  EXPECT_EQ(Eigen::MatrixXd(m.cells), expected);
  EXPECT_EQ(m.tracks, (std::vector<std::string>{"t1", "t2"}));

  const auto single = build_matrix(parse("t1\ta\tal\tgenres\tg\n"), {"genres"});
  EXPECT_EQ(Eigen::MatrixXd(single.cells), Eigen::MatrixXd::Ones(1, 1));
}

TEST(Matrix, JoinedSetsUnionRowsAndColumnSums) {
  std::mt19937_64 eng(8);
  const auto corpus = gen::corpus(eng, {});
  const auto m = build_matrix(corpus, {"genres", "moods"});
  std::set<TagKey> genres, moods;
  std::map<std::string, int> per_track;
  for (const auto& a : corpus.assignments()) {
    if (a.tag_set == "genres") genres.insert({a.tag_set, a.tag});
    if (a.tag_set == "moods") moods.insert({a.tag_set, a.tag});
    if (a.tag_set == "genres" || a.tag_set == "moods") ++per_track[a.track_id];
  }
  EXPECT_EQ(static_cast<std::size_t>(m.rows()), genres.size() + moods.size());
  EXPECT_EQ(static_cast<std::size_t>(m.cols()), per_track.size());
  const Eigen::MatrixXd dense(m.cells);
  for (Eigen::Index c = 0; c < dense.cols(); ++c) {
    EXPECT_EQ(dense.col(c).sum(), per_track[m.tracks[static_cast<std::size_t>(c)]]);
    EXPECT_GT(dense.col(c).sum(), 0);
  }
  for (Eigen::Index r = 0; r < dense.rows(); ++r) EXPECT_GT(dense.row(r).sum(), 0);
  EXPECT_TRUE(((dense.array() == 0) || (dense.array() == 1)).all());
}

TEST(Matrix, EmptySelectionFails) {
  const auto corpus = parse("t1\ta\tal\tgenres\tg\n");
  EXPECT_THROW(build_matrix(corpus, {"themes"}), EmptyCorpusError);
  EXPECT_THROW(build_matrix(corpus, {}), ParameterError);
}

TEST(Stats, DirectCounts) {
  auto stats = corpus_stats(parse("t1\ta\tal\tgenres\tg1\nt1\ta\tal\tgenres\tg2\n"));
  ASSERT_EQ(stats.size(), 1u);
  EXPECT_EQ(stats[0].unique_tags, 2u);
  EXPECT_EQ(stats[0].tag_combinations, 1u);
  EXPECT_EQ(stats[0].labelled_tracks, 1u);

  stats = corpus_stats(parse("t1\ta\tal\tgenres\tg1\nt2\ta\tal2\tgenres\tg1\n"));
  EXPECT_EQ(stats[0].tag_combinations, 1u);
  EXPECT_EQ(stats[0].labelled_albums, 2u);
}

TEST(Stats, MatchesGroupByOracle) {
  std::mt19937_64 eng(21);
  const auto corpus = gen::corpus(eng, {});
  const auto stats = corpus_stats(corpus);
  std::map<std::string, std::map<std::string, std::set<std::string>>> tags;  // set -> track -> tags
  std::map<std::string, std::set<std::string>> albums, uniq;
  for (const auto& a : corpus.assignments()) {
    tags[a.tag_set][a.track_id].insert(a.tag);
    albums[a.tag_set].insert(a.album_id);
    uniq[a.tag_set].insert(a.tag);
  }
  ASSERT_EQ(stats.size(), tags.size());
  for (const auto& s : stats) {
    std::set<std::set<std::string>> combos;
    for (const auto& [track, t] : tags[s.tag_set]) combos.insert(t);
    EXPECT_EQ(s.unique_tags, uniq[s.tag_set].size());
    EXPECT_EQ(s.tag_combinations, combos.size());
    EXPECT_EQ(s.labelled_albums, albums[s.tag_set].size());
    EXPECT_EQ(s.labelled_tracks, tags[s.tag_set].size());
  }
  std::ostringstream table, tsv;
  write_stats_table(stats, table);
  write_stats_tsv(stats, tsv);
  EXPECT_NE(table.str().find("genres"), std::string::npos);
  EXPECT_TRUE(tsv.str().starts_with("# tagemb stats 1\n"));
}

TEST(Labels, SortedAndJoined) {
  EXPECT_EQ(tag_set_label({"moods", "genres"}), "genres-moods");
  EXPECT_EQ(parse_tag_set_list("genres, moods"), (std::vector<std::string>{"genres", "moods"}));
}

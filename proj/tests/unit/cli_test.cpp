#include <sstream>

#include <gtest/gtest.h>

#include "support/temp_dir.hpp"
#include "tagemb/cli.hpp"
#include "tagemb/config.hpp"
#include "tagemb/error.hpp"
#include "tagemb/pipeline.hpp"

using namespace tagemb;
using testing_support::read_text;
using testing_support::TempDir;
using testing_support::write_text;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::vector<std::string> small(const TempDir& dir, std::vector<std::string> args) {
  for (const auto* extra : {"--set", "synth.tracks_per_cluster=40", "--set", "synth.artists_per_cluster=8",
                            "--set", "train.hidden=16", "--set", "train.dim=8", "--set", "train.epochs=2",
                            "--set", "mining.batch_size=64", "--set", "eval.k=10", "--set", "lsi.k=5"}) {
    args.emplace_back(extra);
  }
  args.emplace_back("-o");
  args.push_back(dir.path().string());
  return args;
}

}  // namespace

TEST(Config, SetGetAndErrors) {
  PipelineConfig config;
  EXPECT_EQ(config.sweep_grid.size(), 40u);
  config.set("lsi.k", "7");
  EXPECT_EQ(config.lsi_k, 7);
  EXPECT_EQ(config.get("lsi.k"), "7");
  config.set("mining.strategy", "batch-hard");
  EXPECT_EQ(config.mining.strategy, MiningStrategy::batch_hard);
  config.set("train.hidden", "32,16");
  EXPECT_EQ(config.hidden, (std::vector<int>{32, 16}));
  EXPECT_EQ(config.encoder_dims(10), (std::vector<int>{10, 32, 16, 256}));
  try {
    config.set("lsi.kk", "3");
    FAIL();
  } catch (const ParameterError& e) {
    EXPECT_NE(std::string(e.what()).find("lsi.kk"), std::string::npos);
  }
  EXPECT_THROW(config.set("lsi.k", "seven"), ParameterError);
  EXPECT_THROW(config.set("eval.metric", "l1"), ParameterError);
  EXPECT_EQ(parse_grid("10:30:10"), (std::vector<int>{10, 20, 30}));
  EXPECT_EQ(parse_grid("5,3"), (std::vector<int>{5, 3}));
  EXPECT_EQ(parse_combos("moods,genres;themes"),
            (std::vector<std::vector<std::string>>{{"genres", "moods"}, {"themes"}}));
}

TEST(Config, FileRoundTrip) {
  PipelineConfig config;
  config.set("seed", "9");
  config.set("split.fractions", "0.5,0.1,0.4");
  std::stringstream io;
  write_config(config, io);
  PipelineConfig back;
  load_config(back, io);
  EXPECT_EQ(back.values(), config.values());
  std::istringstream bad("# comment\nlsi.k = 3\nbogus = 1\n");
  try {
    load_config(back, bad, "cfg");
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("cfg:3"), std::string::npos) << e.what();
  }
}

TEST(Config, TagSetCombinations) {
  const auto combos = tag_set_combinations(kDefaultTagSets);
  ASSERT_EQ(combos.size(), 15u);
  EXPECT_EQ(combos.front(), (std::vector<std::string>{"genres"}));
  EXPECT_EQ(combos.back().size(), 4u);
}

TEST(Cli, HelpVersionAndUsage) {
  EXPECT_EQ(run({"--help"}).code, 0);
  const auto version = run({"--version"});
  EXPECT_EQ(version.code, 0);
  EXPECT_EQ(version.out, std::string(kVersion) + "\n");
  EXPECT_EQ(run({}).code, 1);
  EXPECT_EQ(run({"frobnicate"}).code, 1);
  EXPECT_EQ(run({"train", "--no-such-flag"}).code, 1);
  TempDir dir;
  const auto unknown = run({"synth", "--set", "synth.bogus=1", "-o", dir.path().string()});
  EXPECT_EQ(unknown.code, 1);
  EXPECT_NE(unknown.err.find("synth.bogus"), std::string::npos);
}

TEST(Cli, MissingInputIsDataError) {
  TempDir dir;
  const auto r = run({"ingest", "--tags", (dir / "absent.tsv").string(), "-o", dir.path().string()});
  EXPECT_EQ(r.code, 2) << r.err;
}

TEST(Cli, FlagsOverrideSetsOverrideConfigFile) {
  TempDir dir;
  write_text(dir / "cfg", "synth.tracks_per_cluster = 7\nsynth.clusters = 2\nsynth.artists_per_cluster = 3\n");
  const auto r = run({"synth", "--config", (dir / "cfg").string(), "--set", "synth.clusters=3", "--clusters", "4",
                      "-o", (dir / "o").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("synth: 28 tracks"), std::string::npos) << r.out;
  const auto manifest = read_text(dir / "o" / "manifests" / "synth.manifest");
  EXPECT_TRUE(manifest.starts_with("# tagemb manifest-run 1\ncommand\tsynth\n"));
  EXPECT_NE(manifest.find("config\tsynth.clusters\t4\n"), std::string::npos);
  EXPECT_NE(manifest.find("output\t"), std::string::npos);
}

TEST(Cli, SmokeChainAndRerunIsByteIdentical) {
  TempDir dir;
  for (const char* cmd : {"synth", "fit-lsi", "train", "embed", "eval"}) {
    const auto r = run(small(dir, {cmd}));
    ASSERT_EQ(r.code, 0) << cmd << ": " << r.err;
  }
  for (const char* file : {"corpus.tsv", "split.tsv", "lsi.model", "encoder.ckpt", "loss_history.tsv",
                           "embeddings.tsv", "report.tsv", "report.txt"}) {
    EXPECT_TRUE(std::filesystem::exists(dir / file)) << file;
  }
  const auto report = read_text(dir / "report.tsv");
  EXPECT_TRUE(report.starts_with("# tagemb report 1\ntag_set\tlsi_topics\t"));
  const auto again = run(small(dir, {"eval"}));
  ASSERT_EQ(again.code, 0);
  EXPECT_EQ(read_text(dir / "report.tsv"), report);

  const auto topics = run(small(dir, {"topics", "--ordinal", "1", "--top-n", "3"}));
  ASSERT_EQ(topics.code, 0) << topics.err;
  const auto bad = run(small(dir, {"topics", "--ordinal", "5"}));
  EXPECT_EQ(bad.code, 1);
  EXPECT_NE(bad.err.find("topics.ordinal"), std::string::npos) << bad.err;
}

TEST(Cli, FailedRunRemovesPartialOutputs) {
  TempDir dir;
  ASSERT_EQ(run(small(dir, {"synth"})).code, 0);
  ASSERT_EQ(run(small(dir, {"fit-lsi"})).code, 0);
  // Every track in one album: no positive pairs, so training stalls.
  auto corpus = read_text(dir / "corpus.tsv");
  std::string flattened;
  std::istringstream lines(corpus);
  for (std::string line; std::getline(lines, line);) {
    if (line.starts_with("#")) {
      flattened += line + "\n";
      continue;
    }
    auto fields = std::vector<std::string>{};
    std::istringstream cells(line);
    for (std::string cell; std::getline(cells, cell, '\t');) fields.push_back(cell);
    fields[1] = "one_artist";
    fields[2] = "one_album";
    flattened += fields[0] + "\t" + fields[1] + "\t" + fields[2] + "\t" + fields[3] + "\t" + fields[4] + "\n";
  }
  write_text(dir / "corpus.tsv", flattened);
  const auto r = run(small(dir, {"train", "--dump-triplets"}));
  EXPECT_EQ(r.code, 3) << r.err;
  EXPECT_FALSE(std::filesystem::exists(dir / "encoder.ckpt"));
  EXPECT_FALSE(std::filesystem::exists(dir / "triplets.tsv"));
  EXPECT_FALSE(std::filesystem::exists(dir / "manifests" / "train.manifest"));
}

TEST(Cli, SweepReusesCachedCells) {
  TempDir dir;
  ASSERT_EQ(run(small(dir, {"synth"})).code, 0);
  const auto sweep = [&] {
    return run(small(dir, {"sweep", "--grid", "3,4", "--combos", "genres;genres,moods"}));
  };
  const auto first = sweep();
  ASSERT_EQ(first.code, 0) << first.err;
  EXPECT_NE(first.out.find("4 rows (4 computed, 0 cached"), std::string::npos) << first.out;
  const auto report = read_text(dir / "sweep" / "report.tsv");
  const auto second = sweep();
  ASSERT_EQ(second.code, 0);
  EXPECT_NE(second.out.find("(0 computed, 4 cached"), std::string::npos) << second.out;
  EXPECT_EQ(read_text(dir / "sweep" / "report.tsv"), report);
  const auto changed = run(small(dir, {"sweep", "--grid", "3,4", "--combos", "genres;genres,moods", "--set", "train.margin=0.3"}));
  EXPECT_NE(changed.out.find("(4 computed, 0 cached"), std::string::npos) << changed.out;
}

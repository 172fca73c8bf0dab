#include "tagemb/cli.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ranges.h>

#include "tagemb/audiofeat.hpp"
#include "tagemb/config.hpp"
#include "tagemb/encoder.hpp"
#include "tagemb/error.hpp"
#include "tagemb/eval.hpp"
#include "tagemb/lsi.hpp"
#include "tagemb/pipeline.hpp"
#include "tagemb/synth.hpp"
#include "tagemb/tagspace.hpp"
#include "tagemb/text_io.hpp"
#include "tagemb/trainer.hpp"

namespace tagemb {

namespace {

namespace fs = std::filesystem;

struct Run {
  std::string command;
  PipelineConfig config;
  std::ostream& out;
  std::ostream& err;
  std::vector<std::pair<std::string, std::string>> inputs;
  std::vector<std::pair<std::string, std::string>> outputs;

  fs::path path(const std::string& name) const { return config.out(name); }

  void input(const fs::path& file) { inputs.emplace_back(file.string(), digest_file(file)); }
  void input(const std::string& label, const std::string& digest) { inputs.emplace_back(label, digest); }
  void output(const fs::path& file) { outputs.emplace_back(file.string(), digest_file(file)); }
};

template <typename Write>
void write_output(Run& run, const fs::path& path, Write&& write) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  AtomicFile file(path);
  write(file.stream());
  file.commit();
  run.output(path);
}

TagCorpus load_corpus(Run& run) {
  const auto path = run.config.corpus_path();
  run.input(path);
  return parse_tag_file(path);
}

SplitSpec load_split(Run& run) {
  const auto path = run.path("split.tsv");
  if (!fs::exists(path)) throw DataError(fmt::format("'{}' not found; run fit-lsi first", path.string()));
  run.input(path);
  return SplitSpec::load(path);
}

std::string table_digest(const FeatureTable& table) {
  Digest digest;
  for (std::size_t r = 0; r < table.track_ids.size(); ++r) {
    digest.update(table.track_ids[r]);
    for (Eigen::Index c = 0; c < table.values.cols(); ++c) {
      digest.update("\t").update(format_double(table.values(static_cast<Eigen::Index>(r), c)));
    }
    digest.update("\n");
  }
  return digest.hex();
}

FeatureTable load_features(Run& run) {
  const auto path = run.config.features_path();
  run.input(path);
  FeatureTable table = load_feature_table(path);
  run.input("feature-values", table_digest(table));
  return table;
}

void cmd_synth(Run& run) {
  const auto& spec = run.config.synth;
  const SynthCorpus synth = generate(spec);
  write_synth_corpus(synth, spec, run.config.out_dir);
  run.output(run.path("corpus.tsv"));
  run.output(run.path("features.manifest.tsv"));
  run.out << fmt::format("synth: {} tracks, {} tags, {} features per track -> {}\n", synth.corpus.track_count(),
                         synth.corpus.tag_count(), synth.features.cols(), run.config.out_dir.string());
}

void cmd_ingest(Run& run) {
  if (run.config.tags_file.empty()) throw ParameterError("ingest needs paths.tags (--tags)");
  run.input(run.config.tags_file);
  TagCorpus corpus = parse_tag_file(run.config.tags_file);
  const auto before = corpus.track_count();
  if (!run.config.intersect.empty()) corpus = intersect_tagsets(corpus, run.config.intersect);
  const auto stats = corpus_stats(corpus);
  write_output(run, run.path("corpus.tsv"), [&](std::ostream& o) { write_tag_stream(corpus, o); });
  write_output(run, run.path("stats.txt"), [&](std::ostream& o) { write_stats_table(stats, o); });
  write_output(run, run.path("stats.tsv"), [&](std::ostream& o) { write_stats_tsv(stats, o); });
  run.out << fmt::format("ingest: {} of {} tracks kept\n", corpus.track_count(), before);
  write_stats_table(stats, run.out);
}

void cmd_fit_lsi(Run& run) {
  const TagCorpus corpus = load_corpus(run);
  const SplitSpec split = make_split(corpus, run.config);
  write_output(run, run.path("split.tsv"), [&](std::ostream& o) { split.save(o); });
  const LsiModel model = fit_lsi_model(corpus, split, run.config.tag_sets, run.config.lsi_k, run.config.svd_tolerance);
  write_output(run, run.path("lsi.model"), [&](std::ostream& o) { model.save(o); });
  run.out << fmt::format("fit-lsi: {} tags x {} tracks, k = {}\n", model.tags().size(), model.tracks().size(),
                         model.k());
  run.out << "singular values:";
  for (Eigen::Index i = 0; i < model.singular_values().size(); ++i) {
    run.out << fmt::format(" {:.6g}", model.singular_values()[i]);
  }
  run.out << '\n';
}

void cmd_topics(Run& run) {
  const auto path = run.path("lsi.model");
  run.input(path);
  const LsiModel model = LsiModel::load(path);
  if (run.config.topic_top_n < 1) throw ParameterError("topics.top_n must be positive");
  TopicReport report;
  try {
    report = model.topic_top_terms(run.config.topic_ordinal, run.config.topic_top_n);
  } catch (const ParameterError& e) {
    throw ParameterError(fmt::format("topics.ordinal: {}", e.what()));
  }
  const auto target = run.path(fmt::format("topics_{}.txt", run.config.topic_ordinal));
  write_output(run, target, [&](std::ostream& o) { write_topic_report(report, o); });
  write_topic_report(report, run.out);
}

void cmd_extract_features(Run& run) {
  const auto& manifest = run.config.wav_manifest;
  if (manifest.empty()) throw ParameterError("extract-features needs paths.wavs (--wavs)");
  if (run.config.feature_mode == FeatureMode::raw) throw ParameterError("features.mode must be flatten or band-stats");
  run.input(manifest);
  const auto entries = read_manifest(manifest);
  if (entries.empty()) throw DataError(fmt::format("'{}' lists no clips", manifest.string()));
  std::vector<ManifestEntry> written;
  const std::string params = mel_params_string(run.config.mel);
  for (const auto& entry : entries) {
    fs::path wav(entry.path);
    if (wav.is_relative()) wav = manifest.parent_path() / wav;
    run.input(wav);
    const MelSpectrogram mel = audio_to_mel(read_wav(wav), run.config.mel);
    FeatureFile feature;
    feature.track_id = entry.track_id;
    feature.mode = run.config.feature_mode;
    if (feature.mode == FeatureMode::flatten) {
      feature.shape = {mel.bands(), mel.frames()};
    } else {
      feature.shape = {2 * mel.bands()};
    }
    feature.params = params;
    feature.values = features_from_mel(mel, feature.mode);
    const std::string relative = fmt::format("features/{}.feat", entry.track_id);
    write_output(run, run.path(relative), [&](std::ostream& o) { write_feature_file(feature, o); });
    written.push_back({entry.track_id, relative});
  }
  write_output(run, run.path("features.manifest.tsv"), [&](std::ostream& o) { write_manifest(written, o); });
  run.out << fmt::format("extract-features: {} clips -> {}\n", written.size(), run.path("features").string());
}

void cmd_train(Run& run) {
  const TagCorpus corpus = load_corpus(run);
  const SplitSpec split = load_split(run);
  const auto lsi_path = run.path("lsi.model");
  run.input(lsi_path);
  const LsiModel lsi = LsiModel::load(lsi_path);
  const FeatureTable features = load_features(run);
  const TrainingData data = make_training_data(corpus, features, lsi, split);

  std::optional<AtomicFile> dump;
  if (run.config.dump_triplets) dump.emplace(run.path("triplets.tsv"));
  TrainResult result;
  try {
    result = train_encoder(run.config, data, dump ? &dump->stream() : nullptr);
  } catch (const TrainingStallError& e) {
    const auto& d = e.diagnostics();
    run.err << fmt::format(
        "stall diagnostics: epoch {} batches {} positive pairs {:.4f} negative pairs {:.4f} "
        "anchors with positive {:.4f} anchors with negative {:.4f} max similarity {:.6f}\n",
        d.epoch, d.batches, d.positive_pair_fraction, d.negative_pair_fraction, d.anchors_with_positive,
        d.anchors_with_negative, d.max_similarity);
    throw;
  }
  if (dump) {
    dump->commit();
    run.output(run.path("triplets.tsv"));
  }
  const CheckpointInfo info{run.config.margin, run.config.seed, run.config.epochs};
  write_output(run, run.path("encoder.ckpt"), [&](std::ostream& o) { save_checkpoint(result.model, info, o); });
  write_output(run, run.path("loss_history.tsv"), [&](std::ostream& o) { write_loss_history(result.history, o); });
  run.out << fmt::format("train: {} tracks, {} parameters\n", data.track_ids.size(), result.model.parameter_count());
  for (const auto& epoch : result.history) {
    run.out << fmt::format("epoch {:>3}  loss {:.6f}  active {:>6}  batches {}\n", epoch.epoch, epoch.mean_loss,
                           epoch.active_triplets, epoch.batches);
  }
}

void cmd_embed(Run& run) {
  const auto ckpt = run.path("encoder.ckpt");
  run.input(ckpt);
  const EncoderModel model = load_checkpoint(ckpt);
  const FeatureTable features = load_features(run);
  const EmbeddingTable embeddings = embed_features(model, features);
  write_output(run, run.path("embeddings.tsv"), [&](std::ostream& o) { embeddings.save(o); });
  run.out << fmt::format("embed: {} tracks x {} dimensions\n", embeddings.size(), embeddings.values().cols());
}

void write_reports(Run& run, const fs::path& dir, const std::vector<EvaluationRow>& rows) {
  write_output(run, dir / "report.tsv", [&](std::ostream& o) { write_report_tsv(rows, o); });
  write_output(run, dir / "report.txt", [&](std::ostream& o) { write_report_table(rows, o); });
  write_report_table(rows, run.out);
}

void cmd_eval(Run& run) {
  const TagCorpus corpus = load_corpus(run);
  const SplitSpec split = load_split(run);
  const auto path = run.path("embeddings.tsv");
  run.input(path);
  const EmbeddingTable embeddings = EmbeddingTable::load(path);
  std::vector<std::string> test_ids;
  for (const auto& id : split.test) {
    if (embeddings.find(id) >= 0) test_ids.push_back(id);
  }
  EvaluationRow row = evaluate(embeddings, test_ids, corpus, run.config.eval_k, run.config.metric);
  const auto lsi_path = run.path("lsi.model");
  if (fs::exists(lsi_path)) {
    run.input(lsi_path);
    const LsiModel lsi = LsiModel::load(lsi_path);
    row.tag_set = tag_set_label(lsi.tag_sets());
    row.lsi_topics = lsi.k();
  } else {
    row.tag_set = tag_set_label(run.config.tag_sets);
    row.lsi_topics = run.config.lsi_k;
  }
  write_reports(run, run.config.out_dir, {row});
}

void cmd_sweep(Run& run) {
  const TagCorpus corpus = load_corpus(run);
  const FeatureTable features = load_features(run);
  const SplitSpec split = make_split(corpus, run.config);
  const auto dir = run.path("sweep");
  write_output(run, dir / "split.tsv", [&](std::ostream& o) { split.save(o); });
  Digest digest;
  for (const auto& [label, value] : run.inputs) digest.update(value).update("\n");
  SweepStats stats;
  const auto rows = sweep(run.config, corpus, features, split, dir / "cache", digest.hex(), &stats);
  write_reports(run, dir, rows);
  run.out << fmt::format("sweep: {} rows ({} computed, {} cached, {} failed)\n", rows.size(), stats.computed,
                         stats.cached, stats.failed);
}

struct Flag {
  std::string name;
  std::string key;
  std::string help;
  bool is_switch = false;
};

struct Command {
  std::string name;
  std::string help;
  std::function<void(Run&)> handler;
  std::vector<Flag> flags;
};

const std::vector<Command>& commands() {
  static const std::vector<Command> list = {
      {"ingest", "parse a tag file, keep tracks covering data.intersect, write corpus and stats", cmd_ingest,
       {{"--tags", "paths.tags", "input tag TSV"}, {"--intersect", "data.intersect", "required tag sets"}}},
      {"fit-lsi", "split the corpus and fit the LSI model on the training tracks", cmd_fit_lsi,
       {{"--tags", "paths.tags", "corpus TSV"},
        {"--tag-sets", "lsi.tag_sets", "tag sets joined into the matrix"},
        {"-k,--k", "lsi.k", "number of topics"}}},
      {"topics", "report the top tags of one topic", cmd_topics,
       {{"--ordinal", "topics.ordinal", "0-based topic index"}, {"--top-n", "topics.top_n", "tags per sign"}}},
      {"extract-features", "mel features from WAV clips", cmd_extract_features,
       {{"--wavs", "paths.wavs", "manifest of track_id, wav path"}, {"--mode", "features.mode", "flatten or band-stats"}}},
      {"train", "train the encoder with online triplet mining", cmd_train,
       {{"--tags", "paths.tags", "corpus TSV"},
        {"--features", "paths.features", "feature manifest"},
        {"--epochs", "train.epochs", "epochs"},
        {"--batch-size", "mining.batch_size", "tracks per batch"},
        {"--strategy", "mining.strategy", "paper-literal, batch-hard or random"},
        {"--margin", "train.margin", "triplet margin"},
        {"--lr", "train.learning_rate", "learning rate"},
        {"--dump-triplets", "train.dump_triplets", "write triplets.tsv", true}}},
      {"embed", "embed every track of the feature manifest", cmd_embed,
       {{"--features", "paths.features", "feature manifest"}}},
      {"eval", "precision@k on the test split", cmd_eval,
       {{"--tags", "paths.tags", "corpus TSV"},
        {"--eval-k", "eval.k", "retrieval cut-off"},
        {"--metric", "eval.metric", "euclidean or cosine"}}},
      {"sweep", "evaluate every tag-set combination over the topic grid", cmd_sweep,
       {{"--tags", "paths.tags", "corpus TSV"},
        {"--features", "paths.features", "feature manifest"},
        {"--grid", "sweep.grid", "lo:hi:step or a comma list"},
        {"--combos", "sweep.combos", "'all' or combinations like 'genres;genres,moods'"}}},
      {"synth", "generate a synthetic corpus with planted clusters", cmd_synth,
       {{"--clusters", "synth.clusters", "number of clusters"},
        {"--tracks-per-cluster", "synth.tracks_per_cluster", "tracks per cluster"},
        {"--feature-dim", "synth.feature_dim", "feature width"},
        {"--noise", "synth.noise", "feature noise sigma"},
        {"--overlap", "synth.overlap", "share of borrowed pool tags"},
        {"--synth-seed", "synth.seed", "generator seed"}}},
  };
  return list;
}

std::set<fs::path> existing_files(const fs::path& dir) {
  std::set<fs::path> files;
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) return files;
  for (auto it = fs::recursive_directory_iterator(dir, ec); !ec && it != fs::recursive_directory_iterator();
       it.increment(ec)) {
    if (it->is_regular_file(ec)) files.insert(it->path());
  }
  return files;
}

void remove_new_files(const fs::path& dir, const std::set<fs::path>& before) {
  const auto cache = dir / "sweep" / "cache";
  for (const auto& file : existing_files(dir)) {
    if (before.contains(file)) continue;
    if (file.parent_path() == cache) continue;
    std::error_code ec;
    fs::remove(file, ec);
  }
}

void write_run_manifest(const Run& run) {
  const auto path = run.path("manifests") / (run.command + ".manifest");
  fs::create_directories(path.parent_path());
  AtomicFile file(path);
  auto& o = file.stream();
  write_version_line(o, "manifest-run", 1);
  o << "command\t" << run.command << '\n';
  o << "version\t" << kVersion << '\n';
  o << "seed\t" << run.config.seed << '\n';
  for (const auto& [key, value] : run.config.values()) o << "config\t" << key << '\t' << value << '\n';
  for (const auto& [name, digest] : run.inputs) o << "input\t" << name << '\t' << digest << '\n';
  for (const auto& [name, digest] : run.outputs) o << "output\t" << name << '\t' << digest << '\n';
  file.commit();
}

int report_error(std::ostream& err, const std::string& command, const std::string& message, int code) {
  err << "tagemb " << command << ": error: " << message << '\n';
  return code;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Tag-space embedding pipeline: LSI over tags, triplet-trained audio encoders, retrieval evaluation",
               "tagemb"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1, 1);

  struct Parsed {
    std::string config_file;
    std::vector<std::string> sets;
    std::vector<std::pair<std::string, std::string>> flags;
  };
  std::map<std::string, Parsed> parsed;
  std::map<std::string, CLI::App*> subs;
  for (const auto& command : commands()) {
    auto* sub = app.add_subcommand(command.name, command.help);
    auto& p = parsed[command.name];
    sub->add_option("--config", p.config_file, "key = value config file")->check(CLI::ExistingFile);
    sub->add_option("--set", p.sets, "override one config key (key=value), repeatable");
    sub->add_option_function<std::string>(
        "-o,--out", [&p](const std::string& v) { p.flags.emplace_back("paths.out", v); }, "output directory");
    sub->add_option_function<std::string>(
        "--seed", [&p](const std::string& v) { p.flags.emplace_back("seed", v); }, "global seed");
    for (const auto& flag : command.flags) {
      if (flag.is_switch) {
        sub->add_flag_callback(flag.name, [&p, key = flag.key] { p.flags.emplace_back(key, "true"); }, flag.help);
      } else {
        sub->add_option_function<std::string>(
            flag.name, [&p, key = flag.key](const std::string& v) { p.flags.emplace_back(key, v); }, flag.help);
      }
    }
    subs[command.name] = sub;
  }

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    const auto chosen = app.get_subcommands();
    out << (chosen.empty() ? app.help() : chosen.front()->help());
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::CallForVersion& e) {
    out << kVersion << '\n';
    return 0;
  } catch (const CLI::ParseError& e) {
    // Subcommand help arrives here as a success code.
    if (e.get_exit_code() == 0) {
      for (const auto* sub : app.get_subcommands()) out << sub->help();
      return 0;
    }
    err << "tagemb: error: " << e.what() << '\n' << "run 'tagemb --help' for usage\n";
    return exit_code_for(ErrorKind::usage);
  }

  const Command* command = nullptr;
  for (const auto& c : commands()) {
    if (subs[c.name]->parsed()) command = &c;
  }
  if (command == nullptr) return report_error(err, "", "no subcommand given", 1);

  Run run{command->name, PipelineConfig{}, out, err, {}, {}};
  const auto& p = parsed[command->name];
  try {
    if (!p.config_file.empty()) load_config(run.config, fs::path(p.config_file));
    for (const auto& assignment : p.sets) {
      const auto eq = assignment.find('=');
      if (eq == std::string::npos) throw ParameterError(fmt::format("--set expects key=value, got '{}'", assignment));
      run.config.set(std::string(trim(std::string_view(assignment).substr(0, eq))), assignment.substr(eq + 1));
    }
    for (const auto& [key, value] : p.flags) run.config.set(key, value);
  } catch (const Error& e) {
    return report_error(err, command->name, e.what(), exit_code_for(e.kind()));
  }

  const auto before = existing_files(run.config.out_dir);
  try {
    fs::create_directories(run.config.out_dir);
    command->handler(run);
    write_run_manifest(run);
    return 0;
  } catch (const Error& e) {
    remove_new_files(run.config.out_dir, before);
    return report_error(err, command->name, e.what(), exit_code_for(e.kind()));
  } catch (const fs::filesystem_error& e) {
    remove_new_files(run.config.out_dir, before);
    return report_error(err, command->name, e.what(), exit_code_for(ErrorKind::data));
  } catch (const std::exception& e) {
    remove_new_files(run.config.out_dir, before);
    return report_error(err, command->name, fmt::format("internal error: {}", e.what()), 4);
  }
}

int run_cli(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run_cli(args, std::cout, std::cerr);
}

}  // namespace tagemb

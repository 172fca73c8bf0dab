// One line per criterion: PASS/FAIL, name, measured values, runtime.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "support/oracles.hpp"
#include "support/temp_dir.hpp"
#include "tagemb/audiofeat.hpp"
#include "tagemb/cli.hpp"
#include "tagemb/config.hpp"
#include "tagemb/encoder.hpp"
#include "tagemb/eval.hpp"
#include "tagemb/mining.hpp"
#include "tagemb/pipeline.hpp"
#include "tagemb/svd.hpp"
#include "tagemb/synth.hpp"
#include "tagemb/text_io.hpp"
#include "tagemb/trainer.hpp"

using namespace tagemb;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

std::string format(const char* pattern, auto... args) {
  char buffer[512];
  std::snprintf(buffer, sizeof buffer, pattern, args...);
  return buffer;
}

int run_quiet(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  if (code != 0) std::fprintf(stderr, "tagemb %s failed (%d): %s", args.front().c_str(), code, err.str().c_str());
  return code;
}

Outcome svd_oracle() {
  std::mt19937_64 eng(1001);
  double worst_value = 0.0;
  double worst_reconstruction = 0.0;
  int rank_cases = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const int m = gen::between(eng, 2, 40);
    const int n = gen::between(eng, 2, 60);
    const bool exact_rank = trial % 3 == 0;
    const int rank = exact_rank ? gen::between(eng, 1, std::min(m, n)) : std::min(m, n);
    const Eigen::MatrixXd a = exact_rank ? gen::low_rank(eng, m, n, rank) : gen::matrix(eng, m, n);
    const int k = exact_rank ? rank : gen::between(eng, 1, std::min(m, n));
    const auto svd = truncated_svd(Eigen::SparseMatrix<double>(a.sparseView()), k);
    const auto ref = oracle::jacobi_svd(a);
    for (int i = 0; i < k; ++i) worst_value = std::max(worst_value, std::abs(svd.values[i] - ref.s[i]));
    if (exact_rank) {
      ++rank_cases;
      worst_reconstruction = std::max(worst_reconstruction, (reconstruct(svd) - a).norm());
    }
  }
  return {worst_value <= 1e-9 && worst_reconstruction <= 1e-8,
          format("max |sigma - oracle| = %.2e (tol 1e-9), max rank-r ||A - USV'||_F = %.2e (tol 1e-8), %d rank-r cases",
                 worst_value, worst_reconstruction, rank_cases)};
}

Eigen::VectorXd flatten(const std::vector<DenseLayer>& layers) {
  std::vector<double> out;
  for (const auto& l : layers) {
    out.insert(out.end(), l.weight.data(), l.weight.data() + l.weight.size());
    out.insert(out.end(), l.bias.data(), l.bias.data() + l.bias.size());
  }
  return Eigen::Map<Eigen::VectorXd>(out.data(), static_cast<Eigen::Index>(out.size()));
}

void assign(EncoderModel& model, const Eigen::VectorXd& theta) {
  Eigen::Index at = 0;
  for (auto& l : model.layers()) {
    for (Eigen::Index i = 0; i < l.weight.size(); ++i) l.weight.data()[i] = theta[at++];
    for (Eigen::Index i = 0; i < l.bias.size(); ++i) l.bias[i] = theta[at++];
  }
  model.touch();
}

double worst_relative(const Eigen::VectorXd& analytic, const Eigen::VectorXd& numeric) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < analytic.size(); ++i) {
    worst = std::max(worst, oracle::relative_error(analytic[i], numeric[i], 1e-6));
  }
  return worst;
}

Outcome gradients() {
  std::mt19937_64 eng(1002);
  double worst_loss = 0.0;
  int active = 0;
  int inactive = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const int d = gen::between(eng, 1, 8);
    Eigen::MatrixXd m = gen::matrix(eng, 3, d);
    const double dp = (m.row(0) - m.row(1)).squaredNorm();
    const double dn = (m.row(0) - m.row(2)).squaredNorm();
    const bool want_active = trial % 2 == 0;
    double margin;
    if (want_active) {
      margin = std::max(0.0, dn - dp) + gen::uniform(eng, 0.1, 1.0);
    } else {
      if (dp > dn) m.row(1).swap(m.row(2));
      const double gap = std::abs(dn - dp);
      if (gap < 0.2) m.row(2) *= 3.0 + 1.0 / std::max(1e-3, m.row(2).norm());
      margin = 0.0;
    }
    Eigen::VectorXd x(3 * d);
    for (int r = 0; r < 3; ++r) x.segment(r * d, d) = m.row(r).transpose();
    const auto part = [d](const Eigen::VectorXd& v, int r) { return std::span<const double>(v.data() + r * d, static_cast<std::size_t>(d)); };
    const auto f = [&](const Eigen::VectorXd& v) { return triplet_loss(part(v, 0), part(v, 1), part(v, 2), margin); };
    (f(x) > 0 ? active : inactive) += 1;
    const auto g = triplet_loss_grad(part(x, 0), part(x, 1), part(x, 2), margin);
    Eigen::VectorXd analytic(3 * d);
    analytic << g.anchor, g.positive, g.negative;
    worst_loss = std::max(worst_loss, worst_relative(analytic, oracle::gradient(f, x)));
  }

  double worst_encoder = 0.0;
  int normalized = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const int in = gen::between(eng, 1, 5);
    const int out = gen::between(eng, 1, 4);
    const bool normalize = trial % 2 == 0;
    normalized += normalize ? 1 : 0;
    std::vector<int> dims{in};
    const auto kind = trial % 4 == 1 ? EncoderKind::linear : EncoderKind::mlp;
    if (kind == EncoderKind::mlp) {
      for (int h = gen::between(eng, 1, 2); h > 0; --h) dims.push_back(gen::between(eng, 1, 5));
    }
    dims.push_back(out);
    auto model = EncoderModel::create(kind, dims, normalize, static_cast<std::uint64_t>(trial));
    model.fit_standardizer(gen::matrix(eng, 8, in));
    const Eigen::MatrixXd x = gen::matrix(eng, gen::between(eng, 1, 5), in);
    const Eigen::MatrixXd upstream = gen::matrix(eng, x.rows(), out);
    const auto scalar = [&](const Eigen::VectorXd& theta) {
      auto copy = model;
      assign(copy, theta);
      return (copy.forward(x).array() * upstream.array()).sum();
    };
    ForwardCache cache;
    model.forward(x, cache);
    const auto analytic = flatten(model.backward(cache, upstream).layers);
    worst_encoder = std::max(worst_encoder, worst_relative(analytic, oracle::gradient(scalar, flatten(model.layers()))));
  }
  return {worst_loss <= 1e-4 && worst_encoder <= 1e-4,
          format("triplet max rel err %.2e (%d active, %d inactive), encoder max rel err %.2e (%d normalized of 100), tol 1e-4",
                 worst_loss, active, inactive, worst_encoder, normalized)};
}

Outcome mining() {
  std::mt19937_64 eng(1003);
  int mismatches = 0;
  std::size_t triplets = 0;
  std::size_t same_album_similar = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const int size = gen::between(eng, 3, 64);
    MiniBatch batch;
    batch.lsi_vectors = gen::unit_rows(eng, size, gen::between(eng, 2, 4));
    batch.embeddings = gen::matrix(eng, size, gen::between(eng, 1, 4));
    if (trial % 3 == 0) batch.embeddings = batch.embeddings.array().round();  // distance ties
    const int albums = gen::between(eng, 1, size);
    for (int i = 0; i < size; ++i) {
      batch.track_ids.push_back("t" + std::to_string(i));
      batch.album_ids.push_back("al" + std::to_string(gen::between(eng, 0, albums - 1)));
    }
    const double pos = gen::uniform(eng, 0.2, 0.9);
    const double neg = gen::uniform(eng, -0.6, pos - 0.05);
    const auto pairs = select_pairs(batch, pos, neg);
    const auto ref = oracle::pair_masks(batch, pos, neg);
    if (!(pairs.positive_mask == ref.positive).all() || !(pairs.negative_mask == ref.negative).all()) ++mismatches;
    for (int i = 0; i < size; ++i) {
      for (int j = 0; j < size; ++j) {
        if (i != j && ref.similarity(i, j) >= pos && batch.album_ids[static_cast<std::size_t>(i)] == batch.album_ids[static_cast<std::size_t>(j)]) {
          ++same_album_similar;
        }
      }
    }
    for (const auto strategy : {MiningStrategy::paper_literal, MiningStrategy::batch_hard}) {
      const auto got = select_triplets(batch, pairs, strategy);
      if (got != oracle::triplets(batch, ref, strategy)) ++mismatches;
      triplets += got.size();
    }
  }
  return {mismatches == 0, format("%d mismatches over 200 batches x (masks + 2 strategies), %zu triplets, %zu same-album similar pairs filtered",
                                  mismatches, triplets, same_album_similar)};
}

Outcome retrieval() {
  std::mt19937_64 eng(1004);
  int knn_mismatches = 0;
  int precision_mismatches = 0;
  std::size_t checks = 0;
  for (int pool = 0; pool < 20; ++pool) {
    gen::CorpusShape shape;
    shape.tracks = 200;
    shape.artists = gen::between(eng, 10, 60);
    shape.coverage = gen::uniform(eng, 0.5, 1.0);
    const auto corpus = gen::corpus(eng, shape);
    const auto& ids = corpus.tracks();
    Eigen::MatrixXd values = gen::matrix(eng, static_cast<int>(ids.size()), gen::between(eng, 2, 6));
    if (pool % 4 == 0) values = values.array().round();  // ties
    const bool cosine = pool % 2 == 1;
    if (cosine) {
      for (Eigen::Index r = 0; r < values.rows(); ++r) {
        if (values.row(r).isZero(0)) values(r, 0) = 1.0;
      }
    }
    const EmbeddingTable table(ids, values);
    const std::size_t k = static_cast<std::size_t>(gen::between(eng, 1, 50));
    for (const auto& query : ids) {
      const auto got = knn_retrieve(table, query, k, cosine ? Metric::cosine : Metric::euclidean);
      if (got != oracle::knn(ids, values, query, k, cosine)) ++knn_mismatches;
      for (const auto& task : default_tasks()) {
        ++checks;
        if (precision_at_k(got, query, task, corpus) != oracle::precision(got, query, task, corpus)) ++precision_mismatches;
      }
    }
  }
  return {knn_mismatches == 0 && precision_mismatches == 0,
          format("knn mismatches %d, precision mismatches %d over %zu query-task checks (20 pools x 200 tracks x 6 tasks)",
                 knn_mismatches, precision_mismatches, checks)};
}

Outcome mel_shape() {
  MelParams params;
  AudioClip clip;
  clip.sample_rate = 22050.0;
  clip.samples.resize(6 * 22050);
  for (std::size_t i = 0; i < clip.samples.size(); ++i) {
    clip.samples[i] = 0.5 * std::sin(2.0 * std::numbers::pi * 440.0 * static_cast<double>(i) / 22050.0);
  }
  const auto spec = mel_spectrogram(clip, params);
  const auto edges = mel_band_edges(params.n_mels, params.f_min, params.f_max);
  int hits = 0;
  for (Eigen::Index t = 0; t < spec.frames(); ++t) {
    Eigen::Index band;
    spec.values.col(t).maxCoeff(&band);
    const auto b = static_cast<std::size_t>(band);
    if (edges[b] < 440.0 && 440.0 < edges[b + 2]) ++hits;
  }
  const bool shape = spec.bands() == 80 && spec.frames() == 130;
  return {shape && hits >= 128, format("shape %ldx%ld (want 80x130), 440 Hz peak in its band in %d of %ld frames (want >= 128)",
                                       static_cast<long>(spec.bands()), static_cast<long>(spec.frames()), hits,
                                       static_cast<long>(spec.frames()))};
}

struct EndToEnd {
  double precision = 0.0;
  double first_loss = 0.0;
  double final_loss = 0.0;
};

EndToEnd end_to_end_run(MiningStrategy strategy) {
  SynthSpec spec;  // 4 clusters x 100 tracks, f = 32, noise 0.1, overlap 0.2, seed 7
  const auto synth = generate(spec);
  PipelineConfig config;
  config.lsi_k = 20;
  config.batch_size = 64;
  config.margin = 0.2;
  config.epochs = 30;
  config.mining.strategy = strategy;
  config.split_fractions = {0.5, 0.1, 0.4};
  const FeatureTable features{synth.track_ids, synth.features};
  const auto split = make_split(synth.corpus, config);
  const auto lsi = fit_lsi_model(synth.corpus, split, config.tag_sets, config.lsi_k);
  const auto data = make_training_data(synth.corpus, features, lsi, split);
  const auto result = train_encoder(config, data);
  const auto embeddings = embed_features(result.model, features);
  const auto row = evaluate(embeddings, split.test, synth.corpus, 10);
  return {row.results[0].precision, result.history.front().mean_loss, result.history.back().mean_loss};
}

Outcome end_to_end() {
  const auto run = end_to_end_run(MiningStrategy::batch_hard);
  Outcome outcome{run.precision >= 0.9 && run.final_loss < 0.1 * run.first_loss,
                  format("batch-hard mining: genres P@10 = %.4f (want >= 0.9), loss epoch 1 = %.6f, epoch 30 = %.6f (want < 10%%)",
                         run.precision, run.first_loss, run.final_loss)};
  const auto literal = end_to_end_run(MiningStrategy::paper_literal);
  outcome.detail += format("; paper-literal mining for reference: P@10 = %.4f, loss %.6f -> %.6f",
                           literal.precision, literal.first_loss, literal.final_loss);
  return outcome;
}

std::string count_rows(const std::string& tsv) {
  std::istringstream in(tsv);
  int rows = -1;  // header
  std::set<std::string> labels;
  bool layout = false;
  for (std::string line; std::getline(in, line);) {
    if (line.starts_with("#")) continue;
    if (rows < 0) layout = line == "tag_set\tlsi_topics\tprec_genres\tprec_styles\tprec_moods\tprec_themes\tprec_artists\tprec_album";
    else labels.insert(line.substr(0, line.find('\t')));
    ++rows;
  }
  return format("%d rows, %zu tag-set labels, layout %s", rows, labels.size(), layout ? "ok" : "WRONG");
}

Outcome sweep_protocol() {
  testing_support::TempDir dir;
  const std::string out = dir.path().string();
  if (run_quiet({"synth", "-o", out}) != 0) return {false, "synth failed"};
  const std::vector<std::string> sweep = {"sweep", "-o", out, "--grid", "10,20", "--set", "mining.strategy=batch-hard"};
  if (run_quiet(sweep) != 0) return {false, "sweep failed"};
  const auto first = read_file(dir / "sweep" / "report.tsv");
  const auto cache_files = std::distance(fs::directory_iterator(dir / "sweep" / "cache"), fs::directory_iterator{});
  if (run_quiet(sweep) != 0) return {false, "sweep rerun failed"};
  const auto second = read_file(dir / "sweep" / "report.tsv");
  const auto summary = count_rows(first);
  const bool pass = summary.starts_with("30 rows, 15 tag-set labels, layout ok") && first == second;
  return {pass, format("%s, %ld cached cells, rerun %s", summary.c_str(), static_cast<long>(cache_files),
                       first == second ? "byte-identical" : "DIFFERS")};
}

Outcome determinism() {
  testing_support::TempDir dir;
  std::vector<std::string> digests[2];
  const std::vector<std::string> files = {"lsi.model", "encoder.ckpt", "embeddings.tsv", "report.tsv"};
  testing_support::write_text(dir / "run.cfg", "seed = 11\ntrain.epochs = 5\nmining.strategy = batch-hard\n");
  for (int r = 0; r < 2; ++r) {
    const auto out = (dir / ("run" + std::to_string(r))).string();
    for (const char* command : {"synth", "fit-lsi", "train", "embed", "eval"}) {
      if (run_quiet({command, "--config", (dir / "run.cfg").string(), "-o", out}) != 0) {
        return {false, format("%s failed in run %d", command, r)};
      }
    }
    for (const auto& file : files) digests[r].push_back(digest_file(fs::path(out) / file));
  }
  std::string detail;
  for (std::size_t i = 0; i < files.size(); ++i) {
    detail += format("%s%s %s", i ? ", " : "", files[i].c_str(), digests[0][i] == digests[1][i] ? "identical" : "DIFFERS");
  }
  return {digests[0] == digests[1], detail};
}

Outcome split_validity() {
  std::mt19937_64 eng(1009);
  int violations = 0;
  double worst_excess = -1e300;
  for (int trial = 0; trial < 100; ++trial) {
    gen::CorpusShape shape;
    shape.tracks = gen::between(eng, 30, 400);
    shape.artists = gen::between(eng, 3, 60);
    shape.albums_per_artist = gen::between(eng, 1, 4);
    const auto corpus = gen::corpus(eng, shape);
    const auto split = stratified_split(corpus, default_split_fractions(), eng());
    std::map<std::string, std::size_t> per_artist;
    for (std::size_t t = 0; t < corpus.track_count(); ++t) ++per_artist[corpus.artist_of(t)];
    std::size_t largest = 0;
    for (const auto& [artist, count] : per_artist) largest = std::max(largest, count);

    std::map<std::string, int> owner;
    std::set<std::string> seen;
    bool ok = true;
    const std::vector<std::string>* parts[] = {&split.train, &split.validation, &split.test};
    std::size_t total = 0;
    for (int p = 0; p < 3; ++p) {
      total += parts[p]->size();
      for (const auto& id : *parts[p]) {
        if (!seen.insert(id).second) ok = false;  // disjointness
        const auto& artist = corpus.artist_of(corpus.track_index(id));
        if (owner.emplace(artist, p).first->second != p) ok = false;  // artist purity
      }
    }
    if (total != corpus.track_count()) ok = false;
    for (int p = 0; p < 3; ++p) {
      const double target = default_split_fractions()[static_cast<std::size_t>(p)] * static_cast<double>(total);
      const double excess = std::abs(static_cast<double>(parts[p]->size()) - target) - static_cast<double>(largest);
      worst_excess = std::max(worst_excess, excess);
      if (excess > 0) ok = false;  // within one artist of the target
    }
    if (!ok) ++violations;
  }
  return {violations == 0, format("%d of 100 splits violate disjointness, artist purity or size; worst |size - target| - largest artist = %.1f",
                                  violations, worst_excess)};
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    std::function<Outcome()> check;
    double max_seconds;  // 0: no runtime bound
  };
  const std::vector<Criterion> criteria = {
      {"svd-oracle-equivalence", svd_oracle, 30},
      {"gradient-correctness", gradients, 10},
      {"mining-oracle-equivalence", mining, 30},
      {"retrieval-oracle-equivalence", retrieval, 0},
      {"mel-shape-fidelity", mel_shape, 0},
      {"end-to-end-synthetic-learning", end_to_end, 300},
      {"sweep-protocol-fidelity", sweep_protocol, 0},
      {"determinism", determinism, 0},
      {"split-validity", split_validity, 0},
  };
  int failures = 0;
  for (const auto& [name, check, max_seconds] : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome outcome;
    try {
      outcome = check();
    } catch (const std::exception& e) {
      outcome = {false, std::string("exception: ") + e.what()};
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (max_seconds > 0 && seconds > max_seconds) {
      outcome.pass = false;
      outcome.detail += format("; over the %.0f s budget", max_seconds);
    }
    failures += outcome.pass ? 0 : 1;
    std::printf("%s  %-30s %s [%.1f s]\n", outcome.pass ? "PASS" : "FAIL", name, outcome.detail.c_str(), seconds);
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}

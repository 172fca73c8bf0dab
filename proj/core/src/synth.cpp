#include "tagemb/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "tagemb/audiofeat.hpp"
#include "tagemb/error.hpp"
#include "tagemb/random.hpp"
#include "tagemb/text_io.hpp"

namespace tagemb {

void SynthSpec::validate() const {
  if (n_clusters < 1 || tracks_per_cluster < 1 || feature_dim < 1 || tags_per_cluster < 1 ||
      artists_per_cluster < 1 || tracks_per_album < 1) {
    throw ParameterError("synth: all counts must be positive");
  }
  if (artists_per_cluster > tracks_per_cluster) {
    throw ParameterError("synth: artists_per_cluster cannot exceed tracks_per_cluster");
  }
  if (!(noise_sigma >= 0.0)) throw ParameterError("synth: noise_sigma must be >= 0");
  if (!(overlap >= 0.0 && overlap < 1.0)) throw ParameterError("synth: overlap must lie in [0, 1)");
  if (!(tag_probability >= 0.0 && tag_probability <= 1.0)) {
    throw ParameterError("synth: tag_probability must lie in [0, 1]");
  }
  if (tag_sets.empty()) throw ParameterError("synth: at least one tag set is required");
}

SynthCorpus generate(const SynthSpec& spec) {
  spec.validate();
  const int clusters = spec.n_clusters;
  const int pool = spec.tags_per_cluster;
  // Borrowed tags come from the next cluster's non-core tags, so at most pool - 1 of them.
  const int shared = clusters > 1 ? std::min(pool - 1, static_cast<int>(std::lround(spec.overlap * pool))) : 0;

  Rng mean_rng(spec.seed, 1);
  Eigen::MatrixXd means(clusters, spec.feature_dim);
  for (int c = 0; c < clusters; ++c) {
    for (int j = 0; j < spec.feature_dim; ++j) means(c, j) = mean_rng.normal();
    means.row(c).normalize();
  }

  // Pool of cluster c in one tag set: own tags c-0 .. c-(pool-1-shared), then borrowed
  // non-core labels (c+1)-1 .. (c+1)-shared.
  const auto pool_of = [&](const std::string& tag_set, int c) {
    std::vector<std::string> labels;
    for (int j = 0; j < pool - shared; ++j) labels.push_back(fmt::format("{}-{}-{}", tag_set, c, j));
    const int next = (c + 1) % clusters;
    for (int j = 1; j <= shared; ++j) labels.push_back(fmt::format("{}-{}-{}", tag_set, next, j));
    return labels;
  };

  Rng tag_rng(spec.seed, 2);
  Rng noise_rng(spec.seed, 3);
  std::vector<TagAssignment> rows;
  std::vector<std::pair<std::string, int>> tracks;
  std::vector<Eigen::VectorXd> feature_rows;
  const int per_artist = (spec.tracks_per_cluster + spec.artists_per_cluster - 1) / spec.artists_per_cluster;
  for (int c = 0; c < clusters; ++c) {
    std::vector<std::vector<std::string>> pools;
    for (const auto& tag_set : spec.tag_sets) pools.push_back(pool_of(tag_set, c));
    for (int i = 0; i < spec.tracks_per_cluster; ++i) {
      const std::string track = fmt::format("c{}_t{:04}", c, i);
      const std::string artist = fmt::format("c{}_a{}", c, std::min(i / per_artist, spec.artists_per_cluster - 1));
      const std::string album = fmt::format("c{}_al{}", c, i / spec.tracks_per_album);
      for (std::size_t s = 0; s < spec.tag_sets.size(); ++s) {
        for (std::size_t j = 0; j < pools[s].size(); ++j) {
          if (j == 0 || tag_rng.uniform() < spec.tag_probability) {
            rows.push_back({track, artist, album, spec.tag_sets[s], pools[s][j]});
          }
        }
      }
      Eigen::VectorXd x = means.row(c).transpose();
      for (int j = 0; j < spec.feature_dim; ++j) x[j] += spec.noise_sigma * noise_rng.normal();
      tracks.emplace_back(track, c);
      feature_rows.push_back(std::move(x));
    }
  }

  SynthCorpus out;
  out.corpus = TagCorpus::from_assignments(std::move(rows));
  std::vector<std::size_t> order(tracks.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return tracks[a].first < tracks[b].first; });
  out.features.resize(static_cast<Eigen::Index>(tracks.size()), spec.feature_dim);
  for (std::size_t r = 0; r < order.size(); ++r) {
    out.track_ids.push_back(tracks[order[r]].first);
    out.cluster_of.push_back(tracks[order[r]].second);
    out.features.row(static_cast<Eigen::Index>(r)) = feature_rows[order[r]].transpose();
  }
  return out;
}

void write_synth_corpus(const SynthCorpus& synth, const SynthSpec& spec, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "features");
  {
    AtomicFile file(dir / "corpus.tsv");
    write_tag_stream(synth.corpus, file.stream());
    file.commit();
  }
  const std::string params =
      fmt::format("synth clusters={} sigma={} seed={}", spec.n_clusters, format_double(spec.noise_sigma), spec.seed);
  std::vector<ManifestEntry> entries;
  for (std::size_t r = 0; r < synth.track_ids.size(); ++r) {
    FeatureFile feature;
    feature.track_id = synth.track_ids[r];
    feature.mode = FeatureMode::raw;
    feature.shape = {synth.features.cols()};
    feature.params = params;
    feature.values = synth.features.row(static_cast<Eigen::Index>(r)).transpose();
    const std::string relative = fmt::format("features/{}.feat", feature.track_id);
    write_feature_file(feature, dir / relative);
    entries.push_back({feature.track_id, relative});
  }
  AtomicFile manifest(dir / "features.manifest.tsv");
  write_manifest(entries, manifest.stream());
  manifest.commit();
}

}  // namespace tagemb

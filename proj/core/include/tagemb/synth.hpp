#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tagemb/tagspace.hpp"

namespace tagemb {

struct SynthSpec {
  int n_clusters = 4;
  int tracks_per_cluster = 100;
  int feature_dim = 32;
  double noise_sigma = 0.1;
  int tags_per_cluster = 6;  // pool size in every tag set
  int artists_per_cluster = 10;
  int tracks_per_album = 5;
  // Share of each pool borrowed from the next cluster's pool.
  double overlap = 0.2;
  // Chance that a non-core pool tag is assigned to a track.
  double tag_probability = 0.5;
  std::vector<std::string> tag_sets = kDefaultTagSets;
  std::uint64_t seed = 7;

  // Throws ParameterError for non-positive counts, negative noise or out-of-range shares.
  void validate() const;
};

struct SynthCorpus {
  TagCorpus corpus;
  std::vector<std::string> track_ids;  // sorted, rows of `features`
  Eigen::MatrixXd features;
  std::vector<int> cluster_of;         // parallel to track_ids
};

SynthCorpus generate(const SynthSpec& spec);

// corpus.tsv, features/<track>.feat and features.manifest.tsv under `dir`.
void write_synth_corpus(const SynthCorpus& synth, const SynthSpec& spec, const std::filesystem::path& dir);

}  // namespace tagemb

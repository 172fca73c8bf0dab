#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace tagemb {

using BoolMatrix = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

// One mini-batch; all members share the same row order.
struct MiniBatch {
  std::vector<std::string> track_ids;
  Eigen::MatrixXd lsi_vectors;  // B x k, unit rows
  Eigen::MatrixXd embeddings;   // B x d
  std::vector<std::string> album_ids;

  std::size_t size() const noexcept { return track_ids.size(); }
};

struct PairCandidates {
  Eigen::MatrixXd similarity;  // cosine similarity, zero diagonal
  BoolMatrix positive_mask;
  BoolMatrix negative_mask;
};

struct Triplet {
  std::size_t anchor = 0;
  std::size_t positive = 0;
  std::size_t negative = 0;

  friend bool operator==(const Triplet&, const Triplet&) = default;
};

enum class MiningStrategy {
  paper_literal,  // closest positive, farthest negative
  batch_hard,     // farthest positive, closest negative
  random,         // uniform among candidates
};

struct MiningConfig {
  double theta_pos = 0.8;
  double theta_neg = 0.2;
  MiningStrategy strategy = MiningStrategy::paper_literal;
  std::uint64_t seed = 0;  // used by MiningStrategy::random
};

MiningStrategy parse_mining_strategy(const std::string& name);
std::string to_string(MiningStrategy strategy);

// Throws ParameterError when a row is not unit-norm within 1e-9.
Eigen::MatrixXd pairwise_similarity(const Eigen::MatrixXd& lsi_vectors);

// Positives: similarity >= theta_pos and different albums. Negatives: similarity < theta_neg.
PairCandidates select_pairs(const MiniBatch& batch, double theta_pos = 0.8, double theta_neg = 0.2);

// Squared Euclidean distances between embedding rows.
Eigen::MatrixXd squared_distances(const Eigen::MatrixXd& embeddings);

// At most one triplet per anchor, in anchor order. Ties go to the lowest batch index.
// `seed` only matters for MiningStrategy::random.
std::vector<Triplet> select_triplets(const MiniBatch& batch, const PairCandidates& pairs,
                                     MiningStrategy strategy, std::uint64_t seed = 0);

// Seeded shuffle of [0, count) split into consecutive batches; a trailing batch
// shorter than three is dropped. Throws DataError for fewer than three items.
std::vector<std::vector<std::size_t>> make_batches(std::size_t count, std::size_t batch_size,
                                                   std::uint64_t seed, std::uint64_t epoch);

// Debug dump: epoch, batch, anchor_id, positive_id, negative_id, sim_ap, sim_an, d2_ap, d2_an.
void write_triplet_header(std::ostream& out);
void write_triplets(std::ostream& out, std::size_t epoch, std::size_t batch_index, const MiniBatch& batch,
                    const PairCandidates& pairs, std::span<const Triplet> triplets);

}  // namespace tagemb

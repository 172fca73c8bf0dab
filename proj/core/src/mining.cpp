#include "tagemb/mining.hpp"

#include <cmath>
#include <numeric>
#include <ostream>

#include <fmt/format.h>

#include "tagemb/error.hpp"
#include "tagemb/random.hpp"
#include "tagemb/text_io.hpp"

namespace tagemb {

MiningStrategy parse_mining_strategy(const std::string& name) {
  if (name == "paper-literal") return MiningStrategy::paper_literal;
  if (name == "batch-hard") return MiningStrategy::batch_hard;
  if (name == "random") return MiningStrategy::random;
  throw ParameterError(fmt::format("unknown mining strategy '{}' (paper-literal, batch-hard, random)", name));
}

std::string to_string(MiningStrategy strategy) {
  switch (strategy) {
    case MiningStrategy::paper_literal:
      return "paper-literal";
    case MiningStrategy::batch_hard:
      return "batch-hard";
    case MiningStrategy::random:
      return "random";
  }
  return "unknown";
}

Eigen::MatrixXd pairwise_similarity(const Eigen::MatrixXd& lsi_vectors) {
  const Eigen::Index n = lsi_vectors.rows();
  for (Eigen::Index i = 0; i < n; ++i) {
    const double norm = lsi_vectors.row(i).norm();
    if (std::abs(norm - 1.0) > 1e-9) {
      throw ParameterError(fmt::format("pairwise_similarity: row {} has norm {}", i, norm));
    }
  }
  Eigen::MatrixXd sim = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double dot = lsi_vectors.row(i).dot(lsi_vectors.row(j));
      sim(i, j) = dot;
      sim(j, i) = dot;
    }
  }
  return sim;
}

PairCandidates select_pairs(const MiniBatch& batch, double theta_pos, double theta_neg) {
  const auto n = static_cast<Eigen::Index>(batch.size());
  if (!(theta_neg < theta_pos)) {
    throw ParameterError(fmt::format("theta_neg ({}) must be below theta_pos ({})", theta_neg, theta_pos));
  }
  if (n < 3) throw ParameterError(fmt::format("mini-batch needs at least 3 tracks, got {}", n));
  if (batch.lsi_vectors.rows() != n || static_cast<Eigen::Index>(batch.album_ids.size()) != n) {
    throw ParameterError("mini-batch members differ in length");
  }
  PairCandidates pairs;
  pairs.similarity = pairwise_similarity(batch.lsi_vectors);
  pairs.positive_mask = BoolMatrix::Constant(n, n, false);
  pairs.negative_mask = BoolMatrix::Constant(n, n, false);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i == j) continue;
      const double s = pairs.similarity(i, j);
      const bool same_album = batch.album_ids[static_cast<std::size_t>(i)] == batch.album_ids[static_cast<std::size_t>(j)];
      pairs.positive_mask(i, j) = s >= theta_pos && !same_album;
      pairs.negative_mask(i, j) = s < theta_neg;
    }
  }
  return pairs;
}

Eigen::MatrixXd squared_distances(const Eigen::MatrixXd& embeddings) {
  const Eigen::Index n = embeddings.rows();
  Eigen::MatrixXd d2 = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double value = (embeddings.row(i) - embeddings.row(j)).squaredNorm();
      d2(i, j) = value;
      d2(j, i) = value;
    }
  }
  return d2;
}

namespace {

// Index of the extreme masked entry in one row; -1 when the mask row is empty.
// `prefer(a, b)` is true when a strictly beats b, so scanning upward keeps the lowest index on ties.
template <typename Prefer>
Eigen::Index pick(const Eigen::MatrixXd& d2, const BoolMatrix& mask, Eigen::Index row, Prefer prefer) {
  Eigen::Index best = -1;
  for (Eigen::Index j = 0; j < mask.cols(); ++j) {
    if (!mask(row, j)) continue;
    if (best < 0 || prefer(d2(row, j), d2(row, best))) best = j;
  }
  return best;
}

Eigen::Index pick_random(const BoolMatrix& mask, Eigen::Index row, Rng& rng) {
  std::vector<Eigen::Index> candidates;
  for (Eigen::Index j = 0; j < mask.cols(); ++j) {
    if (mask(row, j)) candidates.push_back(j);
  }
  if (candidates.empty()) return -1;
  return candidates[static_cast<std::size_t>(rng.below(candidates.size()))];
}

}  // namespace

std::vector<Triplet> select_triplets(const MiniBatch& batch, const PairCandidates& pairs,
                                     MiningStrategy strategy, std::uint64_t seed) {
  const auto n = static_cast<Eigen::Index>(batch.size());
  if (pairs.positive_mask.rows() != n || batch.embeddings.rows() != n) {
    throw ParameterError("select_triplets: pair candidates do not belong to this batch");
  }
  const Eigen::MatrixXd d2 = squared_distances(batch.embeddings);
  const auto less = [](double a, double b) { return a < b; };
  const auto greater = [](double a, double b) { return a > b; };
  Rng rng(seed, 0x7219);

  std::vector<Triplet> triplets;
  for (Eigen::Index a = 0; a < n; ++a) {
    Eigen::Index p = -1;
    Eigen::Index q = -1;
    switch (strategy) {
      case MiningStrategy::paper_literal:
        p = pick(d2, pairs.positive_mask, a, less);
        q = pick(d2, pairs.negative_mask, a, greater);
        break;
      case MiningStrategy::batch_hard:
        p = pick(d2, pairs.positive_mask, a, greater);
        q = pick(d2, pairs.negative_mask, a, less);
        break;
      case MiningStrategy::random:
        p = pick_random(pairs.positive_mask, a, rng);
        q = pick_random(pairs.negative_mask, a, rng);
        break;
    }
    if (p < 0 || q < 0) continue;
    triplets.push_back(Triplet{static_cast<std::size_t>(a), static_cast<std::size_t>(p),
                               static_cast<std::size_t>(q)});
  }
  return triplets;
}

std::vector<std::vector<std::size_t>> make_batches(std::size_t count, std::size_t batch_size,
                                                   std::uint64_t seed, std::uint64_t epoch) {
  if (batch_size < 3) throw ParameterError(fmt::format("batch size must be at least 3, got {}", batch_size));
  if (count < 3) throw DataError(fmt::format("need at least 3 tracks to form a batch, got {}", count));
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed, epoch);
  rng.shuffle(std::span<std::size_t>(order));

  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < count; start += batch_size) {
    const std::size_t end = std::min(count, start + batch_size);
    if (end - start < 3) break;
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

void write_triplet_header(std::ostream& out) {
  write_version_line(out, "triplets", 1);
  out << "epoch\tbatch\tanchor_id\tpositive_id\tnegative_id\tsim_ap\tsim_an\td2_ap\td2_an\n";
}

void write_triplets(std::ostream& out, std::size_t epoch, std::size_t batch_index, const MiniBatch& batch,
                    const PairCandidates& pairs, std::span<const Triplet> triplets) {
  for (const auto& t : triplets) {
    const auto a = static_cast<Eigen::Index>(t.anchor);
    const auto p = static_cast<Eigen::Index>(t.positive);
    const auto q = static_cast<Eigen::Index>(t.negative);
    out << epoch << '\t' << batch_index << '\t' << batch.track_ids[t.anchor] << '\t'
        << batch.track_ids[t.positive] << '\t' << batch.track_ids[t.negative] << '\t'
        << format_double(pairs.similarity(a, p)) << '\t' << format_double(pairs.similarity(a, q)) << '\t'
        << format_double((batch.embeddings.row(a) - batch.embeddings.row(p)).squaredNorm()) << '\t'
        << format_double((batch.embeddings.row(a) - batch.embeddings.row(q)).squaredNorm()) << '\n';
  }
}

}  // namespace tagemb

#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tagemb/encoder.hpp"
#include "tagemb/error.hpp"
#include "tagemb/mining.hpp"

namespace tagemb {

enum class Reduction { sum, mean };

struct TripletLossConfig {
  double margin = 0.2;
  Reduction reduction = Reduction::mean;
};

Reduction parse_reduction(const std::string& name);
std::string to_string(Reduction reduction);

// max(|a-p|^2 - |a-n|^2 + margin, 0). Throws ParameterError on length mismatch.
double triplet_loss(std::span<const double> anchor, std::span<const double> positive,
                    std::span<const double> negative, double margin);

struct TripletGradients {
  Eigen::VectorXd anchor;
  Eigen::VectorXd positive;
  Eigen::VectorXd negative;
};

// Exact gradient where the hinge is active; zero on the flat side and on the boundary.
TripletGradients triplet_loss_grad(std::span<const double> anchor, std::span<const double> positive,
                                   std::span<const double> negative, double margin);

struct BatchLoss {
  double loss = 0.0;
  std::size_t active = 0;     // triplets with positive hinge value
  Eigen::MatrixXd gradient;   // dLoss / dEmbeddings, same shape as embeddings
};

BatchLoss batch_triplet_loss(const Eigen::MatrixXd& embeddings, std::span<const Triplet> triplets,
                             const TripletLossConfig& config);

enum class OptimizerKind { sgd, momentum, adam };

OptimizerKind parse_optimizer(const std::string& name);
std::string to_string(OptimizerKind kind);

// Plain SGD, SGD with momentum 0.9, or Adam(0.9, 0.999, 1e-8).
class Optimizer {
 public:
  Optimizer(OptimizerKind kind, double learning_rate);
  void step(EncoderModel& model, const EncoderGradients& gradients);

 private:
  OptimizerKind kind_;
  double learning_rate_;
  std::uint64_t steps_ = 0;
  std::vector<DenseLayer> first_moment_;
  std::vector<DenseLayer> second_moment_;
};

struct TrainConfig {
  int epochs = 10;
  std::size_t batch_size = 600;
  double learning_rate = 1e-3;
  OptimizerKind optimizer = OptimizerKind::adam;
  std::uint64_t seed = 0;
  MiningConfig mining;
  TripletLossConfig loss;

  // Throws ParameterError for out-of-range values.
  void validate() const;
};

// Row-aligned training inputs.
struct TrainingData {
  std::vector<std::string> track_ids;
  Eigen::MatrixXd features;       // n x f
  Eigen::MatrixXd lsi_vectors;    // n x k, unit rows
  std::vector<std::string> album_ids;
};

struct EpochStats {
  int epoch = 0;
  double mean_loss = 0.0;  // over batches that yielded triplets
  std::size_t active_triplets = 0;
  std::size_t selected_triplets = 0;
  std::size_t batches = 0;
};

struct TrainResult {
  EncoderModel model;
  std::vector<EpochStats> history;
};

// Mask occupancy collected over one epoch, reported when no triplet was found.
struct StallDiagnostics {
  int epoch = 0;
  std::size_t batches = 0;
  double positive_pair_fraction = 0.0;
  double negative_pair_fraction = 0.0;
  double anchors_with_positive = 0.0;
  double anchors_with_negative = 0.0;
  double max_similarity = 0.0;
};

class TrainingStallError : public NumericalError {
 public:
  explicit TrainingStallError(const StallDiagnostics& diagnostics);
  const StallDiagnostics& diagnostics() const noexcept { return diagnostics_; }

 private:
  StallDiagnostics diagnostics_;
};

// Epoch loop: seeded shuffle, batches, embeddings, pair masks, triplets, loss, step.
// The standardizer is fitted on `data.features` when the model has none.
// `triplet_dump` receives the mining debug TSV when non-null.
TrainResult train(EncoderModel model, const TrainingData& data, const TrainConfig& config,
                  std::ostream* triplet_dump = nullptr);

void write_loss_history(std::span<const EpochStats> history, std::ostream& out);

}  // namespace tagemb

#include "tagemb/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include <fmt/format.h>

#include "tagemb/text_io.hpp"

namespace tagemb {

namespace {

void check_lengths(std::size_t a, std::size_t p, std::size_t n) {
  if (a != p || a != n) {
    throw ParameterError(fmt::format("triplet embeddings differ in length ({}, {}, {})", a, p, n));
  }
}

double squared_distance(std::span<const double> x, std::span<const double> y) {
  double sum = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - y[i];
    sum += d * d;
  }
  return sum;
}

}  // namespace

Reduction parse_reduction(const std::string& name) {
  if (name == "sum") return Reduction::sum;
  if (name == "mean") return Reduction::mean;
  throw ParameterError(fmt::format("unknown loss reduction '{}' (sum, mean)", name));
}

std::string to_string(Reduction reduction) { return reduction == Reduction::sum ? "sum" : "mean"; }

double triplet_loss(std::span<const double> anchor, std::span<const double> positive,
                    std::span<const double> negative, double margin) {
  check_lengths(anchor.size(), positive.size(), negative.size());
  const double value = squared_distance(anchor, positive) - squared_distance(anchor, negative) + margin;
  return std::max(value, 0.0);
}

TripletGradients triplet_loss_grad(std::span<const double> anchor, std::span<const double> positive,
                                   std::span<const double> negative, double margin) {
  check_lengths(anchor.size(), positive.size(), negative.size());
  const auto d = static_cast<Eigen::Index>(anchor.size());
  TripletGradients grads{Eigen::VectorXd::Zero(d), Eigen::VectorXd::Zero(d), Eigen::VectorXd::Zero(d)};
  const double value = squared_distance(anchor, positive) - squared_distance(anchor, negative) + margin;
  if (!(value > 0.0)) return grads;
  for (Eigen::Index i = 0; i < d; ++i) {
    const auto k = static_cast<std::size_t>(i);
    grads.anchor[i] = 2.0 * (negative[k] - positive[k]);
    grads.positive[i] = 2.0 * (positive[k] - anchor[k]);
    grads.negative[i] = 2.0 * (anchor[k] - negative[k]);
  }
  return grads;
}

BatchLoss batch_triplet_loss(const Eigen::MatrixXd& embeddings, std::span<const Triplet> triplets,
                             const TripletLossConfig& config) {
  BatchLoss result;
  result.gradient = Eigen::MatrixXd::Zero(embeddings.rows(), embeddings.cols());
  if (triplets.empty()) return result;
  // Row-major copies so rows can be viewed as contiguous spans.
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rows = embeddings;
  const auto d = static_cast<std::size_t>(rows.cols());
  const auto row = [&](std::size_t i) { return std::span<const double>(rows.data() + i * d, d); };
  const double scale = config.reduction == Reduction::mean ? 1.0 / static_cast<double>(triplets.size()) : 1.0;
  for (const auto& t : triplets) {
    const double value = triplet_loss(row(t.anchor), row(t.positive), row(t.negative), config.margin);
    if (value <= 0.0) continue;
    ++result.active;
    result.loss += value;
    const auto g = triplet_loss_grad(row(t.anchor), row(t.positive), row(t.negative), config.margin);
    result.gradient.row(static_cast<Eigen::Index>(t.anchor)) += scale * g.anchor.transpose();
    result.gradient.row(static_cast<Eigen::Index>(t.positive)) += scale * g.positive.transpose();
    result.gradient.row(static_cast<Eigen::Index>(t.negative)) += scale * g.negative.transpose();
  }
  result.loss *= scale;
  return result;
}

OptimizerKind parse_optimizer(const std::string& name) {
  if (name == "sgd") return OptimizerKind::sgd;
  if (name == "sgd-momentum" || name == "momentum") return OptimizerKind::momentum;
  if (name == "adam") return OptimizerKind::adam;
  throw ParameterError(fmt::format("unknown optimizer '{}' (sgd, sgd-momentum, adam)", name));
}

std::string to_string(OptimizerKind kind) {
  switch (kind) {
    case OptimizerKind::sgd:
      return "sgd";
    case OptimizerKind::momentum:
      return "sgd-momentum";
    case OptimizerKind::adam:
      return "adam";
  }
  return "unknown";
}

Optimizer::Optimizer(OptimizerKind kind, double learning_rate) : kind_(kind), learning_rate_(learning_rate) {
  if (!(learning_rate >= 0.0)) throw ParameterError("learning rate must be nonnegative");
}

void Optimizer::step(EncoderModel& model, const EncoderGradients& gradients) {
  auto& layers = model.layers();
  if (gradients.layers.size() != layers.size()) throw ParameterError("gradient/parameter layer count mismatch");
  if (first_moment_.empty()) {
    first_moment_ = model.zero_gradients().layers;
    second_moment_ = model.zero_gradients().layers;
  }
  ++steps_;
  constexpr double momentum = 0.9;
  constexpr double beta1 = 0.9;
  constexpr double beta2 = 0.999;
  constexpr double epsilon = 1e-8;
  const double correction1 = 1.0 - std::pow(beta1, static_cast<double>(steps_));
  const double correction2 = 1.0 - std::pow(beta2, static_cast<double>(steps_));

  const auto update = [&](auto& param, const auto& grad, auto& m, auto& v) {
    switch (kind_) {
      case OptimizerKind::sgd:
        param -= learning_rate_ * grad;
        break;
      case OptimizerKind::momentum:
        m = momentum * m + grad;
        param -= learning_rate_ * m;
        break;
      case OptimizerKind::adam:
        m = beta1 * m + (1.0 - beta1) * grad;
        v = beta2 * v + (1.0 - beta2) * grad.cwiseProduct(grad);
        param.array() -= learning_rate_ * (m.array() / correction1) /
                         ((v.array() / correction2).sqrt() + epsilon);
        break;
    }
  };
  for (std::size_t l = 0; l < layers.size(); ++l) {
    update(layers[l].weight, gradients.layers[l].weight, first_moment_[l].weight, second_moment_[l].weight);
    update(layers[l].bias, gradients.layers[l].bias, first_moment_[l].bias, second_moment_[l].bias);
  }
  model.touch();
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ParameterError("epochs must be at least 1");
  if (batch_size < 3) throw ParameterError("batch size must be at least 3");
  if (!(learning_rate > 0.0)) throw ParameterError("learning rate must be positive");
  if (!(loss.margin >= 0.0)) throw ParameterError("margin must be nonnegative");
  if (!(mining.theta_neg < mining.theta_pos)) throw ParameterError("theta_neg must be below theta_pos");
}

TrainingStallError::TrainingStallError(const StallDiagnostics& d)
    : NumericalError(fmt::format(
          "training stalled: no valid triplet in epoch {} ({} batches; positive pairs {:.4f}, "
          "negative pairs {:.4f}, anchors with a positive {:.4f}, anchors with a negative {:.4f}, "
          "max similarity {:.4f})",
          d.epoch, d.batches, d.positive_pair_fraction, d.negative_pair_fraction, d.anchors_with_positive,
          d.anchors_with_negative, d.max_similarity)),
      diagnostics_(d) {}

TrainResult train(EncoderModel model, const TrainingData& data, const TrainConfig& config,
                  std::ostream* triplet_dump) {
  config.validate();
  const auto n = static_cast<Eigen::Index>(data.track_ids.size());
  if (n == 0) throw DataError("training split is empty");
  if (data.features.rows() != n || data.lsi_vectors.rows() != n ||
      static_cast<Eigen::Index>(data.album_ids.size()) != n) {
    throw ParameterError("training features, LSI vectors and albums are not aligned");
  }
  if (!model.standardizer().fitted()) model.fit_standardizer(data.features);

  Optimizer optimizer(config.optimizer, config.learning_rate);
  TrainResult result;
  if (triplet_dump != nullptr) write_triplet_header(*triplet_dump);

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto batches = make_batches(data.track_ids.size(), config.batch_size, config.seed,
                                      static_cast<std::uint64_t>(epoch));
    EpochStats stats;
    stats.epoch = epoch;
    stats.batches = batches.size();
    std::size_t loss_batches = 0;
    StallDiagnostics diag;
    diag.epoch = epoch;
    diag.batches = batches.size();
    double pair_count = 0.0;
    double anchor_count = 0.0;
    diag.max_similarity = -1.0;

    for (std::size_t b = 0; b < batches.size(); ++b) {
      const auto& members = batches[b];
      const auto size = static_cast<Eigen::Index>(members.size());
      Eigen::MatrixXd features(size, data.features.cols());
      MiniBatch batch;
      batch.lsi_vectors.resize(size, data.lsi_vectors.cols());
      for (Eigen::Index r = 0; r < size; ++r) {
        const auto src = static_cast<Eigen::Index>(members[static_cast<std::size_t>(r)]);
        features.row(r) = data.features.row(src);
        batch.lsi_vectors.row(r) = data.lsi_vectors.row(src);
        batch.track_ids.push_back(data.track_ids[static_cast<std::size_t>(src)]);
        batch.album_ids.push_back(data.album_ids[static_cast<std::size_t>(src)]);
      }
      ForwardCache cache;
      batch.embeddings = model.forward(features, cache);
      const auto pairs = select_pairs(batch, config.mining.theta_pos, config.mining.theta_neg);
      const std::uint64_t mining_seed =
          config.mining.seed ^ (static_cast<std::uint64_t>(epoch) * 0x9e3779b97f4a7c15ULL + b);
      const auto triplets = select_triplets(batch, pairs, config.mining.strategy, mining_seed);

      const double pairs_in_batch = static_cast<double>(size * (size - 1));
      pair_count += pairs_in_batch;
      anchor_count += static_cast<double>(size);
      diag.positive_pair_fraction += static_cast<double>(pairs.positive_mask.count());
      diag.negative_pair_fraction += static_cast<double>(pairs.negative_mask.count());
      diag.anchors_with_positive += static_cast<double>(pairs.positive_mask.rowwise().any().count());
      diag.anchors_with_negative += static_cast<double>(pairs.negative_mask.rowwise().any().count());
      if (size > 1) diag.max_similarity = std::max(diag.max_similarity, pairs.similarity.maxCoeff());

      if (triplet_dump != nullptr) {
        write_triplets(*triplet_dump, static_cast<std::size_t>(epoch), b, batch, pairs, triplets);
      }
      if (triplets.empty()) continue;
      stats.selected_triplets += triplets.size();
      const auto loss = batch_triplet_loss(batch.embeddings, triplets, config.loss);
      stats.active_triplets += loss.active;
      stats.mean_loss += loss.loss;
      ++loss_batches;
      if (loss.active > 0 && !model.layers().empty()) {
        optimizer.step(model, model.backward(cache, loss.gradient));
      }
    }
    if (stats.selected_triplets == 0) {
      if (pair_count > 0) {
        diag.positive_pair_fraction /= pair_count;
        diag.negative_pair_fraction /= pair_count;
        diag.anchors_with_positive /= anchor_count;
        diag.anchors_with_negative /= anchor_count;
      }
      throw TrainingStallError(diag);
    }
    stats.mean_loss /= static_cast<double>(loss_batches);
    result.history.push_back(stats);
  }
  result.model = std::move(model);
  return result;
}

void write_loss_history(std::span<const EpochStats> history, std::ostream& out) {
  write_version_line(out, "loss-history", 1);
  out << "epoch\tmean_loss\tactive_triplets\tbatches\n";
  for (const auto& e : history) {
    out << e.epoch << '\t' << format_double(e.mean_loss) << '\t' << e.active_triplets << '\t' << e.batches
        << '\n';
  }
}

}  // namespace tagemb

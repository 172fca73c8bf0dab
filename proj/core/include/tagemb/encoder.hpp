#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace tagemb {

enum class EncoderKind { identity, linear, mlp };

EncoderKind parse_encoder_kind(const std::string& name);
std::string to_string(EncoderKind kind);

// Per-feature affine standardization fitted on training features.
struct Standardizer {
  Eigen::VectorXd mean;
  Eigen::VectorXd variance;

  bool fitted() const noexcept { return mean.size() > 0; }
  // Constant features get variance 1 so they map to zero.
  static Standardizer fit(const Eigen::MatrixXd& features);
  Eigen::MatrixXd apply(const Eigen::MatrixXd& features) const;
};

struct DenseLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;    // out
};

// Same shape as the encoder's parameters.
struct EncoderGradients {
  std::vector<DenseLayer> layers;
};

// Everything backward() needs from one forward pass.
struct ForwardCache {
  std::uint64_t parameter_version = 0;
  bool valid = false;
  std::vector<Eigen::MatrixXd> activations;      // inputs to each layer, activations[0] is standardized
  std::vector<Eigen::MatrixXd> pre_activations;  // z for each layer
  Eigen::MatrixXd raw_output;                    // before l2 normalization
  Eigen::MatrixXd output;
};

// Feature vector -> d-dimensional embedding: standardize, dense layers with ELU on
// hidden layers and a linear output, then optional l2 normalization.
class EncoderModel {
 public:
  EncoderModel() = default;

  // layer_dims = {input, hidden..., output}; identity takes a single width.
  // Weights are seeded uniform in +-sqrt(6 / (fan_in + fan_out)), biases zero.
  static EncoderModel create(EncoderKind kind, std::vector<int> layer_dims, bool output_normalize,
                             std::uint64_t seed);

  EncoderKind kind() const noexcept { return kind_; }
  const std::vector<int>& layer_dims() const noexcept { return layer_dims_; }
  int input_dim() const { return layer_dims_.front(); }
  int output_dim() const { return layer_dims_.back(); }
  bool output_normalize() const noexcept { return output_normalize_; }
  double elu_alpha() const noexcept { return 1.0; }

  const Standardizer& standardizer() const noexcept { return standardizer_; }
  void fit_standardizer(const Eigen::MatrixXd& features);
  void set_standardizer(Standardizer standardizer);

  std::vector<DenseLayer>& layers() noexcept { return layers_; }
  const std::vector<DenseLayer>& layers() const noexcept { return layers_; }
  std::size_t parameter_count() const;

  // Call after mutating parameters; caches from earlier passes become stale.
  void touch() noexcept { ++version_; }
  std::uint64_t version() const noexcept { return version_; }

  // Rows of `features` are samples. Throws ParameterError on width mismatch and
  // StateError before the standardizer is fitted.
  Eigen::MatrixXd forward(const Eigen::MatrixXd& features) const;
  Eigen::MatrixXd forward(const Eigen::MatrixXd& features, ForwardCache& cache) const;

  // Gradients of a scalar loss given dLoss/dOutput (rows match the cached batch),
  // summed over samples. Throws StateError for a missing or stale cache.
  EncoderGradients backward(const ForwardCache& cache, const Eigen::MatrixXd& upstream) const;

  EncoderGradients zero_gradients() const;

  friend bool operator==(const EncoderModel& a, const EncoderModel& b);

 private:
  EncoderKind kind_ = EncoderKind::mlp;
  std::vector<int> layer_dims_;
  bool output_normalize_ = true;
  Standardizer standardizer_;
  std::vector<DenseLayer> layers_;
  std::uint64_t version_ = 0;
};

struct CheckpointInfo {
  double margin = 0.2;
  std::uint64_t seed = 0;
  int epoch = 0;
};

void save_checkpoint(const EncoderModel& model, const CheckpointInfo& info, std::ostream& out);
void save_checkpoint(const EncoderModel& model, const CheckpointInfo& info,
                     const std::filesystem::path& path);
EncoderModel load_checkpoint(std::istream& in, CheckpointInfo* info = nullptr,
                             std::string_view source = "<stream>");
EncoderModel load_checkpoint(const std::filesystem::path& path, CheckpointInfo* info = nullptr);

}  // namespace tagemb

#include "tagemb/encoder.hpp"

#include <cmath>
#include <fstream>

#include <fmt/format.h>

#include "tagemb/error.hpp"
#include "tagemb/random.hpp"
#include "tagemb/text_io.hpp"

namespace tagemb {

namespace {

constexpr int kCheckpointVersion = 1;

double elu(double x) { return x > 0.0 ? x : std::expm1(x); }
double elu_derivative(double x) { return x > 0.0 ? 1.0 : std::exp(x); }

}  // namespace

EncoderKind parse_encoder_kind(const std::string& name) {
  if (name == "identity") return EncoderKind::identity;
  if (name == "linear") return EncoderKind::linear;
  if (name == "mlp") return EncoderKind::mlp;
  throw ParameterError(fmt::format("unknown encoder kind '{}' (identity, linear, mlp)", name));
}

std::string to_string(EncoderKind kind) {
  switch (kind) {
    case EncoderKind::identity:
      return "identity";
    case EncoderKind::linear:
      return "linear";
    case EncoderKind::mlp:
      return "mlp";
  }
  return "unknown";
}

Standardizer Standardizer::fit(const Eigen::MatrixXd& features) {
  if (features.rows() == 0 || features.cols() == 0) {
    throw DataError("cannot fit a standardizer on an empty feature matrix");
  }
  Standardizer s;
  const auto n = static_cast<double>(features.rows());
  s.mean = features.colwise().sum().transpose() / n;
  s.variance.resize(features.cols());
  for (Eigen::Index c = 0; c < features.cols(); ++c) {
    const double var = (features.col(c).array() - s.mean[c]).square().sum() / n;
    s.variance[c] = var > 1e-12 ? var : 1.0;
  }
  return s;
}

Eigen::MatrixXd Standardizer::apply(const Eigen::MatrixXd& features) const {
  Eigen::MatrixXd out = features.rowwise() - mean.transpose();
  out.array().rowwise() /= variance.transpose().array().sqrt();
  return out;
}

EncoderModel EncoderModel::create(EncoderKind kind, std::vector<int> layer_dims,
                                  bool output_normalize, std::uint64_t seed) {
  if (layer_dims.empty()) throw ParameterError("encoder needs at least an input width");
  for (const int width : layer_dims) {
    if (width < 1) throw ParameterError("encoder layer widths must be positive");
  }
  switch (kind) {
    case EncoderKind::identity:
      if (layer_dims.size() != 1) throw ParameterError("identity encoder takes a single width");
      break;
    case EncoderKind::linear:
      if (layer_dims.size() != 2) throw ParameterError("linear encoder takes {input, output} widths");
      break;
    case EncoderKind::mlp:
      if (layer_dims.size() < 2) throw ParameterError("mlp encoder needs at least {input, output} widths");
      break;
  }
  EncoderModel model;
  model.kind_ = kind;
  model.layer_dims_ = std::move(layer_dims);
  model.output_normalize_ = output_normalize;
  Rng rng(seed, 0x1417);
  for (std::size_t l = 0; l + 1 < model.layer_dims_.size(); ++l) {
    const int fan_in = model.layer_dims_[l];
    const int fan_out = model.layer_dims_[l + 1];
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    DenseLayer layer{Eigen::MatrixXd(fan_out, fan_in), Eigen::VectorXd::Zero(fan_out)};
    for (int r = 0; r < fan_out; ++r) {
      for (int c = 0; c < fan_in; ++c) layer.weight(r, c) = rng.uniform(-limit, limit);
    }
    model.layers_.push_back(std::move(layer));
  }
  return model;
}

void EncoderModel::fit_standardizer(const Eigen::MatrixXd& features) {
  if (features.cols() != input_dim()) {
    throw ParameterError(fmt::format("feature width {} does not match encoder input {}",
                                     features.cols(), input_dim()));
  }
  standardizer_ = Standardizer::fit(features);
  touch();
}

void EncoderModel::set_standardizer(Standardizer standardizer) {
  standardizer_ = std::move(standardizer);
  touch();
}

std::size_t EncoderModel::parameter_count() const {
  std::size_t count = 0;
  for (const auto& layer : layers_) count += static_cast<std::size_t>(layer.weight.size() + layer.bias.size());
  return count;
}

Eigen::MatrixXd EncoderModel::forward(const Eigen::MatrixXd& features) const {
  ForwardCache cache;
  return forward(features, cache);
}

Eigen::MatrixXd EncoderModel::forward(const Eigen::MatrixXd& features, ForwardCache& cache) const {
  if (features.cols() != input_dim()) {
    throw ParameterError(fmt::format("feature width {} does not match encoder input {}",
                                     features.cols(), input_dim()));
  }
  if (!standardizer_.fitted()) throw StateError("encoder standardizer has not been fitted");

  cache = ForwardCache{};
  Eigen::MatrixXd h = standardizer_.apply(features);
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    cache.activations.push_back(h);
    Eigen::MatrixXd z = h * layers_[l].weight.transpose();
    z.rowwise() += layers_[l].bias.transpose();
    cache.pre_activations.push_back(z);
    if (l + 1 < layers_.size()) {
      h = z.unaryExpr([](double x) { return elu(x); });
    } else {
      h = std::move(z);
    }
  }
  cache.raw_output = h;
  if (output_normalize_) {
    for (Eigen::Index r = 0; r < h.rows(); ++r) {
      const double norm = h.row(r).norm();
      if (norm == 0.0) throw DegenerateError("cannot l2-normalize a zero embedding");
      h.row(r) /= norm;
    }
  }
  cache.output = h;
  cache.parameter_version = version_;
  cache.valid = true;
  return h;
}

EncoderGradients EncoderModel::zero_gradients() const {
  EncoderGradients grads;
  for (const auto& layer : layers_) {
    grads.layers.push_back(DenseLayer{Eigen::MatrixXd::Zero(layer.weight.rows(), layer.weight.cols()),
                                      Eigen::VectorXd::Zero(layer.bias.size())});
  }
  return grads;
}

EncoderGradients EncoderModel::backward(const ForwardCache& cache, const Eigen::MatrixXd& upstream) const {
  if (!cache.valid) throw StateError("backward called without a forward pass");
  if (cache.parameter_version != version_) throw StateError("forward cache is stale");
  if (upstream.rows() != cache.output.rows() || upstream.cols() != cache.output.cols()) {
    throw ParameterError("upstream gradient shape does not match the cached output");
  }
  Eigen::MatrixXd g = upstream;
  if (output_normalize_) {
    for (Eigen::Index r = 0; r < g.rows(); ++r) {
      const double norm = cache.raw_output.row(r).norm();
      const auto y = cache.output.row(r);
      const double projection = y.dot(g.row(r));
      g.row(r) = (g.row(r) - projection * y) / norm;
    }
  }
  EncoderGradients grads = zero_gradients();
  for (std::size_t l = layers_.size(); l-- > 0;) {
    Eigen::MatrixXd delta = g;
    if (l + 1 < layers_.size()) {
      delta.array() *= cache.pre_activations[l].unaryExpr([](double x) { return elu_derivative(x); }).array();
    }
    grads.layers[l].weight = delta.transpose() * cache.activations[l];
    grads.layers[l].bias = delta.colwise().sum().transpose();
    if (l > 0) g = delta * layers_[l].weight;
  }
  return grads;
}

bool operator==(const EncoderModel& a, const EncoderModel& b) {
  if (a.kind_ != b.kind_ || a.layer_dims_ != b.layer_dims_ || a.output_normalize_ != b.output_normalize_) {
    return false;
  }
  if (a.standardizer_.mean != b.standardizer_.mean || a.standardizer_.variance != b.standardizer_.variance) {
    return false;
  }
  if (a.layers_.size() != b.layers_.size()) return false;
  for (std::size_t l = 0; l < a.layers_.size(); ++l) {
    if (a.layers_[l].weight != b.layers_[l].weight || a.layers_[l].bias != b.layers_[l].bias) return false;
  }
  return true;
}

namespace {

void write_row(std::ostream& out, std::string_view label, const Eigen::VectorXd& values) {
  out << label;
  for (Eigen::Index i = 0; i < values.size(); ++i) out << '\t' << format_double(values[i]);
  out << '\n';
}

}  // namespace

void save_checkpoint(const EncoderModel& model, const CheckpointInfo& info, std::ostream& out) {
  write_version_line(out, "checkpoint", kCheckpointVersion);
  out << "kind\t" << to_string(model.kind()) << '\n';
  out << "layer_dims";
  for (const int width : model.layer_dims()) out << '\t' << width;
  out << '\n';
  out << "output_normalize\t" << (model.output_normalize() ? 1 : 0) << '\n';
  out << "activation\telu\t" << format_double(model.elu_alpha()) << '\n';
  out << "margin\t" << format_double(info.margin) << '\n';
  out << "seed\t" << info.seed << '\n';
  out << "epoch\t" << info.epoch << '\n';
  const auto& s = model.standardizer();
  out << "standardizer\t" << s.mean.size() << '\n';
  if (s.fitted()) {
    write_row(out, "mean", s.mean);
    write_row(out, "variance", s.variance);
  }
  for (std::size_t l = 0; l < model.layers().size(); ++l) {
    const auto& layer = model.layers()[l];
    out << "weight\t" << l << '\t' << layer.weight.rows() << '\t' << layer.weight.cols() << '\n';
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
      write_row(out, "w", layer.weight.row(r).transpose());
    }
    write_row(out, "bias", layer.bias);
  }
}

void save_checkpoint(const EncoderModel& model, const CheckpointInfo& info,
                     const std::filesystem::path& path) {
  AtomicFile file(path);
  save_checkpoint(model, info, file.stream());
  file.commit();
}

EncoderModel load_checkpoint(std::istream& in, CheckpointInfo* info, std::string_view source) {
  const std::string src(source);
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line)) throw FormatError(fmt::format("{}: empty checkpoint", src));
  check_version_line(line, "checkpoint", kCheckpointVersion, src);

  std::vector<std::string_view> fields;
  const auto next = [&](std::string_view expected) {
    ++line_no;
    if (!std::getline(in, line)) {
      throw ParseError(src, line_no, fmt::format("unexpected end of file, expected '{}'", expected));
    }
    fields = split(line, '\t');
    if (fields.empty() || fields[0] != expected) {
      throw ParseError(src, line_no, fmt::format("expected '{}' record", expected));
    }
  };
  const auto number = [&](std::string_view text) {
    try {
      return parse_double(text);
    } catch (const FormatError& e) {
      throw ParseError(src, line_no, e.what());
    }
  };
  const auto integer = [&](std::string_view text) {
    try {
      return parse_int(text);
    } catch (const FormatError& e) {
      throw ParseError(src, line_no, e.what());
    }
  };
  const auto vector = [&](std::string_view expected, Eigen::Index size) {
    next(expected);
    if (static_cast<Eigen::Index>(fields.size()) != size + 1) {
      throw ParseError(src, line_no, fmt::format("'{}' expects {} values", expected, size));
    }
    Eigen::VectorXd values(size);
    for (Eigen::Index i = 0; i < size; ++i) values[i] = number(fields[static_cast<std::size_t>(i + 1)]);
    return values;
  };

  next("kind");
  if (fields.size() != 2) throw ParseError(src, line_no, "kind expects one value");
  const EncoderKind kind = parse_encoder_kind(std::string(fields[1]));
  next("layer_dims");
  std::vector<int> dims;
  for (std::size_t i = 1; i < fields.size(); ++i) dims.push_back(static_cast<int>(integer(fields[i])));
  next("output_normalize");
  const bool normalize = fields.size() == 2 && integer(fields[1]) != 0;
  next("activation");
  if (fields.size() != 3 || fields[1] != "elu" || number(fields[2]) != 1.0) {
    throw ParseError(src, line_no, "only elu(1) activations are supported");
  }
  CheckpointInfo meta;
  next("margin");
  meta.margin = number(fields.at(1));
  next("seed");
  meta.seed = static_cast<std::uint64_t>(integer(fields.at(1)));
  next("epoch");
  meta.epoch = static_cast<int>(integer(fields.at(1)));

  EncoderModel model = EncoderModel::create(kind, dims, normalize, 0);
  next("standardizer");
  const auto width = static_cast<Eigen::Index>(integer(fields.at(1)));
  if (width > 0) {
    if (width != model.input_dim()) throw ParseError(src, line_no, "standardizer width mismatch");
    Standardizer s;
    s.mean = vector("mean", width);
    s.variance = vector("variance", width);
    model.set_standardizer(std::move(s));
  }
  for (std::size_t l = 0; l < model.layers().size(); ++l) {
    auto& layer = model.layers()[l];
    next("weight");
    if (fields.size() != 4 || integer(fields[1]) != static_cast<long long>(l) ||
        integer(fields[2]) != layer.weight.rows() || integer(fields[3]) != layer.weight.cols()) {
      throw ParseError(src, line_no, "weight header does not match layer_dims");
    }
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
      layer.weight.row(r) = vector("w", layer.weight.cols()).transpose();
    }
    layer.bias = vector("bias", layer.bias.size());
  }
  model.touch();
  if (info != nullptr) *info = meta;
  return model;
}

EncoderModel load_checkpoint(const std::filesystem::path& path, CheckpointInfo* info) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(fmt::format("cannot open checkpoint '{}'", path.string()));
  return load_checkpoint(in, info, path.string());
}

}  // namespace tagemb

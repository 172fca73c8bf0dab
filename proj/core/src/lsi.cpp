#include "tagemb/lsi.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <fmt/format.h>

#include "tagemb/error.hpp"
#include "tagemb/text_io.hpp"

namespace tagemb {

namespace {

constexpr int kModelVersion = 1;

// Relative floor below which a singular value counts as zero.
constexpr double kRankTolerance = 1e-10;

}  // namespace

LsiModel LsiModel::fit(const TagTrackMatrix& matrix, int k, const SvdOptions& options) {
  SvdResult svd = truncated_svd(matrix.cells, k, options);
  if (svd.values[k - 1] <= kRankTolerance * std::max(svd.values[0], 1.0)) {
    throw NumericalError(fmt::format(
        "matrix rank is below k = {} (singular value {} is {:.3e})", k, k, svd.values[k - 1]));
  }
  for (int c = 0; c < k; ++c) {
    Eigen::Index pivot = 0;
    svd.left.col(c).cwiseAbs().maxCoeff(&pivot);
    if (svd.left(pivot, c) < 0.0) {
      svd.left.col(c) *= -1.0;
      svd.right.col(c) *= -1.0;
    }
  }
  LsiModel model;
  model.tag_sets_ = matrix.tag_sets;
  model.tags_ = matrix.tags;
  model.tracks_ = matrix.tracks;
  model.singular_values_ = svd.values;
  model.tag_factors_ = std::move(svd.left);
  model.track_vectors_ = svd.right * svd.values.asDiagonal();
  model.index_tracks();
  return model;
}

void LsiModel::index_tracks() {
  track_lookup_.clear();
  for (std::size_t i = 0; i < tracks_.size(); ++i) track_lookup_.emplace(tracks_[i], i);
}

std::optional<std::size_t> LsiModel::find_track(std::string_view track_id) const {
  const auto it = track_lookup_.find(track_id);
  if (it == track_lookup_.end()) return std::nullopt;
  return it->second;
}

LsiVector LsiModel::track_vector(std::string_view track_id, bool normalize) const {
  const auto index = find_track(track_id);
  if (!index) throw LookupError(fmt::format("track '{}' is not in the LSI model", track_id));
  LsiVector result{track_vectors_.row(static_cast<Eigen::Index>(*index)).transpose(), false};
  if (normalize) {
    const double norm = result.values.norm();
    if (norm == 0.0) {
      throw DegenerateError(fmt::format("LSI vector of track '{}' has zero norm", track_id));
    }
    result.values /= norm;
    result.normalized = true;
  }
  return result;
}

LsiVector LsiModel::fold_in(std::span<const double> incidence) const {
  if (static_cast<Eigen::Index>(incidence.size()) != tag_factors_.rows()) {
    throw ParameterError(fmt::format("fold_in: incidence length {} does not match {} tags",
                                     incidence.size(), tag_factors_.rows()));
  }
  const Eigen::Map<const Eigen::VectorXd> x(incidence.data(),
                                            static_cast<Eigen::Index>(incidence.size()));
  if (x.cwiseAbs().maxCoeff() == 0.0) throw DegenerateError("fold_in: all-zero tag incidence");
  return LsiVector{tag_factors_.transpose() * x, false};
}

TopicReport LsiModel::topic_top_terms(int topic_ordinal, int top_n) const {
  if (topic_ordinal < 0 || topic_ordinal >= k()) {
    throw ParameterError(
        fmt::format("topic ordinal {} outside [0, {})", topic_ordinal, k()));
  }
  if (top_n < 1) throw ParameterError("top_n must be positive");
  TopicReport report;
  report.topic_ordinal = topic_ordinal;
  for (Eigen::Index j = 0; j < tag_factors_.rows(); ++j) {
    const double loading = tag_factors_(j, topic_ordinal);
    const TopicLoading entry{tags_[static_cast<std::size_t>(j)], loading};
    if (loading > 0.0) report.positive_loadings.push_back(entry);
    if (loading < 0.0) report.negative_loadings.push_back(entry);
  }
  const auto by_magnitude = [](const TopicLoading& a, const TopicLoading& b) {
    const double ma = std::abs(a.loading);
    const double mb = std::abs(b.loading);
    if (ma != mb) return ma > mb;
    return a.tag < b.tag;
  };
  for (auto* list : {&report.positive_loadings, &report.negative_loadings}) {
    std::sort(list->begin(), list->end(), by_magnitude);
    if (list->size() > static_cast<std::size_t>(top_n)) list->resize(static_cast<std::size_t>(top_n));
  }
  return report;
}

void LsiModel::save(std::ostream& out) const {
  write_version_line(out, "lsi", kModelVersion);
  out << "dims\t" << tag_factors_.rows() << '\t' << track_vectors_.rows() << '\t' << k() << '\n';
  out << "tag_sets\t" << fmt::format("{}", fmt::join(tag_sets_, ",")) << '\n';
  out << "singular_values";
  for (Eigen::Index c = 0; c < singular_values_.size(); ++c) {
    out << '\t' << format_double(singular_values_[c]);
  }
  out << '\n';
  for (Eigen::Index j = 0; j < tag_factors_.rows(); ++j) {
    const auto& key = tags_[static_cast<std::size_t>(j)];
    out << "tag\t" << key.tag_set << '\t' << key.tag;
    for (Eigen::Index c = 0; c < tag_factors_.cols(); ++c) out << '\t' << format_double(tag_factors_(j, c));
    out << '\n';
  }
  for (Eigen::Index i = 0; i < track_vectors_.rows(); ++i) {
    out << "track\t" << tracks_[static_cast<std::size_t>(i)];
    for (Eigen::Index c = 0; c < track_vectors_.cols(); ++c) out << '\t' << format_double(track_vectors_(i, c));
    out << '\n';
  }
}

LsiModel LsiModel::load(std::istream& in, std::string_view source) {
  const std::string src(source);
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line)) throw FormatError(fmt::format("{}: empty LSI model file", src));
  check_version_line(line, "lsi", kModelVersion, src);

  const auto next = [&](std::string_view expected) {
    ++line_no;
    if (!std::getline(in, line)) {
      throw ParseError(src, line_no, fmt::format("unexpected end of file, expected '{}'", expected));
    }
    auto fields = split(line, '\t');
    if (fields.empty() || fields[0] != expected) {
      throw ParseError(src, line_no, fmt::format("expected '{}' record", expected));
    }
    return fields;
  };
  const auto number = [&](std::string_view text) {
    try {
      return parse_double(text);
    } catch (const FormatError& e) {
      throw ParseError(src, line_no, e.what());
    }
  };

  auto dims = next("dims");
  if (dims.size() != 4) throw ParseError(src, line_no, "dims needs m, n, k");
  const auto m = static_cast<Eigen::Index>(number(dims[1]));
  const auto n = static_cast<Eigen::Index>(number(dims[2]));
  const auto k = static_cast<Eigen::Index>(number(dims[3]));
  if (m < 1 || n < 1 || k < 1 || k > std::min(m, n)) throw ParseError(src, line_no, "invalid dims");

  LsiModel model;
  auto sets = next("tag_sets");
  if (sets.size() != 2) throw ParseError(src, line_no, "tag_sets needs one field");
  model.tag_sets_ = parse_tag_set_list(sets[1]);

  auto values = next("singular_values");
  if (static_cast<Eigen::Index>(values.size()) != k + 1) throw ParseError(src, line_no, "expected k singular values");
  model.singular_values_.resize(k);
  for (Eigen::Index c = 0; c < k; ++c) model.singular_values_[c] = number(values[static_cast<std::size_t>(c + 1)]);

  model.tag_factors_.resize(m, k);
  for (Eigen::Index j = 0; j < m; ++j) {
    auto fields = next("tag");
    if (static_cast<Eigen::Index>(fields.size()) != k + 3) throw ParseError(src, line_no, "malformed tag row");
    model.tags_.push_back(TagKey{std::string(fields[1]), std::string(fields[2])});
    for (Eigen::Index c = 0; c < k; ++c) model.tag_factors_(j, c) = number(fields[static_cast<std::size_t>(c + 3)]);
  }
  model.track_vectors_.resize(n, k);
  for (Eigen::Index i = 0; i < n; ++i) {
    auto fields = next("track");
    if (static_cast<Eigen::Index>(fields.size()) != k + 2) throw ParseError(src, line_no, "malformed track row");
    model.tracks_.emplace_back(fields[1]);
    for (Eigen::Index c = 0; c < k; ++c) model.track_vectors_(i, c) = number(fields[static_cast<std::size_t>(c + 2)]);
  }
  model.index_tracks();
  return model;
}

void LsiModel::save(const std::filesystem::path& path) const {
  AtomicFile file(path);
  save(file.stream());
  file.commit();
}

LsiModel LsiModel::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(fmt::format("cannot open LSI model '{}'", path.string()));
  return load(in, path.string());
}

Eigen::MatrixXd normalized_track_vectors(const LsiModel& model,
                                         const std::vector<std::string>& track_ids) {
  Eigen::MatrixXd rows(static_cast<Eigen::Index>(track_ids.size()), model.k());
  for (std::size_t i = 0; i < track_ids.size(); ++i) {
    rows.row(static_cast<Eigen::Index>(i)) = model.track_vector(track_ids[i], true).values.transpose();
  }
  return rows;
}

void write_topic_report(const TopicReport& report, std::ostream& out) {
  const auto label = [](const TopicLoading& l) { return fmt::format("{}:{}", l.tag.tag_set, l.tag.tag); };
  std::size_t width = 20;
  for (const auto& l : report.positive_loadings) width = std::max(width, label(l).size() + 2);
  out << fmt::format("Topic #{}\n", report.topic_ordinal);
  out << fmt::format("{:<{}} {:>10}   {:<{}} {:>10}\n", "positive", width, "loading", "negative", width,
                     "loading");
  const auto rows = std::max(report.positive_loadings.size(), report.negative_loadings.size());
  for (std::size_t r = 0; r < rows; ++r) {
    if (r < report.positive_loadings.size()) {
      const auto& l = report.positive_loadings[r];
      out << fmt::format("{:<{}} {:>10.6f}   ", label(l), width, l.loading);
    } else {
      out << fmt::format("{:<{}} {:>10}   ", "", width, "");
    }
    if (r < report.negative_loadings.size()) {
      const auto& l = report.negative_loadings[r];
      out << fmt::format("{:<{}} {:>10.6f}", label(l), width, l.loading);
    }
    out << '\n';
  }
}

}  // namespace tagemb

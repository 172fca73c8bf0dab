#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "tagemb/svd.hpp"
#include "tagemb/tagspace.hpp"

namespace tagemb {

struct LsiVector {
  Eigen::VectorXd values;
  bool normalized = false;
};

struct TopicLoading {
  TagKey tag;
  double loading = 0.0;
};

struct TopicReport {
  int topic_ordinal = 0;
  std::vector<TopicLoading> positive_loadings;  // > 0, by |loading| descending
  std::vector<TopicLoading> negative_loadings;  // < 0, by |loading| descending
};

// Truncated-SVD concept space over a tag-track matrix. Each topic's sign is fixed
// so that its largest-magnitude tag loading is positive.
class LsiModel {
 public:
  LsiModel() = default;

  // Throws ParameterError for k outside [1, min(m, n)] and NumericalError when the
  // matrix rank is below k (a zero singular value cannot define a topic).
  static LsiModel fit(const TagTrackMatrix& matrix, int k, const SvdOptions& options = {});

  int k() const noexcept { return static_cast<int>(singular_values_.size()); }
  const std::vector<std::string>& tag_sets() const noexcept { return tag_sets_; }
  const std::vector<TagKey>& tags() const noexcept { return tags_; }
  const std::vector<std::string>& tracks() const noexcept { return tracks_; }
  const Eigen::VectorXd& singular_values() const noexcept { return singular_values_; }
  // m x k, columns are the left singular vectors.
  const Eigen::MatrixXd& tag_factors() const noexcept { return tag_factors_; }
  // n x k, row i is Sigma_k * V_k^T column i.
  const Eigen::MatrixXd& track_vectors() const noexcept { return track_vectors_; }

  std::optional<std::size_t> find_track(std::string_view track_id) const;

  // Throws LookupError for unknown tracks and DegenerateError when asked to
  // normalize a zero vector.
  LsiVector track_vector(std::string_view track_id, bool normalize) const;

  // Projects a length-m tag incidence vector onto the topics (U_k^T x). A training
  // track's own column reproduces its stored vector.
  LsiVector fold_in(std::span<const double> incidence) const;

  // Clamps top_n to the number of available loadings.
  TopicReport topic_top_terms(int topic_ordinal, int top_n) const;

  void save(std::ostream& out) const;
  static LsiModel load(std::istream& in, std::string_view source = "<stream>");
  void save(const std::filesystem::path& path) const;
  static LsiModel load(const std::filesystem::path& path);

 private:
  std::vector<std::string> tag_sets_;
  std::vector<TagKey> tags_;
  std::vector<std::string> tracks_;
  std::map<std::string, std::size_t, std::less<>> track_lookup_;
  Eigen::VectorXd singular_values_;
  Eigen::MatrixXd tag_factors_;
  Eigen::MatrixXd track_vectors_;

  void index_tracks();
};

// Unit-norm LSI rows for the given tracks, in order. Throws like track_vector.
Eigen::MatrixXd normalized_track_vectors(const LsiModel& model,
                                         const std::vector<std::string>& track_ids);

void write_topic_report(const TopicReport& report, std::ostream& out);

}  // namespace tagemb

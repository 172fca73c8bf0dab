#include "tagemb/audiofeat.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <memory>
#include <numbers>

#include <fftw3.h>
#include <fmt/format.h>

#include "tagemb/error.hpp"
#include "tagemb/text_io.hpp"

namespace tagemb {

namespace {

constexpr int kFeatureVersion = 1;
constexpr int kManifestVersion = 1;

// Real-to-complex FFT of a fixed size; owns the FFTW buffers and plan.
class RealFft {
 public:
  explicit RealFft(int size)
      : size_(size),
        input_(static_cast<double*>(fftw_malloc(sizeof(double) * static_cast<std::size_t>(size)))),
        output_(static_cast<fftw_complex*>(
            fftw_malloc(sizeof(fftw_complex) * static_cast<std::size_t>(size / 2 + 1)))) {
    if (input_ == nullptr || output_ == nullptr) {
      release();
      throw std::bad_alloc();
    }
    plan_ = fftw_plan_dft_r2c_1d(size, input_, output_, FFTW_ESTIMATE);
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;
  ~RealFft() { release(); }

  double* input() { return input_; }
  void execute() { fftw_execute(plan_); }
  double magnitude(int bin) const { return std::hypot(output_[bin][0], output_[bin][1]); }

 private:
  void release() {
    if (plan_ != nullptr) fftw_destroy_plan(plan_);
    if (input_ != nullptr) fftw_free(input_);
    if (output_ != nullptr) fftw_free(output_);
    plan_ = nullptr;
    input_ = nullptr;
    output_ = nullptr;
  }

  int size_;
  double* input_;
  fftw_complex* output_;
  fftw_plan plan_ = nullptr;
};

// numpy-style "reflect" index (edge sample not repeated) for any integer position.
std::size_t reflect_index(std::ptrdiff_t i, std::size_t n) {
  if (n == 1) return 0;
  const auto period = static_cast<std::ptrdiff_t>(2 * (n - 1));
  std::ptrdiff_t r = i % period;
  if (r < 0) r += period;
  if (r >= static_cast<std::ptrdiff_t>(n)) r = period - r;
  return static_cast<std::size_t>(r);
}

}  // namespace

AudioClip resample(const AudioClip& clip, double target_rate) {
  if (!(clip.sample_rate > 0.0)) throw ParameterError("resample: source sample rate must be positive");
  if (!(target_rate > 0.0)) throw ParameterError("resample: target sample rate must be positive");
  if (clip.sample_rate == target_rate) return clip;
  AudioClip out;
  out.sample_rate = target_rate;
  const auto n = clip.samples.size();
  if (n == 0) return out;
  const auto length = static_cast<std::size_t>(
      std::max<long long>(1, std::llround(static_cast<double>(n) * target_rate / clip.sample_rate)));
  const double step = clip.sample_rate / target_rate;
  out.samples.resize(length);
  for (std::size_t j = 0; j < length; ++j) {
    const double position = static_cast<double>(j) * step;
    const auto left = static_cast<std::size_t>(position);
    if (left + 1 >= n) {
      out.samples[j] = clip.samples[n - 1];
      continue;
    }
    const double t = position - static_cast<double>(left);
    const double a = clip.samples[left];
    out.samples[j] = a + t * (clip.samples[left + 1] - a);
  }
  return out;
}

AudioClip segment(const AudioClip& clip, double offset_seconds, double length_seconds) {
  if (!(clip.sample_rate > 0.0)) throw ParameterError("segment: sample rate must be positive");
  if (offset_seconds < 0.0 || !(length_seconds > 0.0)) throw ParameterError("segment: invalid window");
  const auto offset = static_cast<std::size_t>(std::llround(offset_seconds * clip.sample_rate));
  const auto length = static_cast<std::size_t>(std::llround(length_seconds * clip.sample_rate));
  if (clip.samples.size() < offset + length) {
    throw DurationError(offset_seconds + length_seconds, clip.duration());
  }
  AudioClip out;
  out.sample_rate = clip.sample_rate;
  out.samples.assign(clip.samples.begin() + static_cast<std::ptrdiff_t>(offset),
                     clip.samples.begin() + static_cast<std::ptrdiff_t>(offset + length));
  return out;
}

Eigen::MatrixXd stft_magnitude(std::span<const double> samples, int n_fft, int hop) {
  if (samples.empty()) throw ParameterError("stft: empty signal");
  if (n_fft < 2 || n_fft % 2 != 0) throw ParameterError("stft: window size must be even and >= 2");
  if (hop < 1) throw ParameterError("stft: hop must be positive");
  const std::size_t n = samples.size();
  const auto frames = static_cast<Eigen::Index>(n / static_cast<std::size_t>(hop) + 1);
  const int bins = n_fft / 2 + 1;
  const std::ptrdiff_t pad = n_fft / 2;

  std::vector<double> window(static_cast<std::size_t>(n_fft));
  for (int i = 0; i < n_fft; ++i) {
    window[static_cast<std::size_t>(i)] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / n_fft);
  }
  RealFft fft(n_fft);
  Eigen::MatrixXd magnitude(frames, bins);
  for (Eigen::Index t = 0; t < frames; ++t) {
    const std::ptrdiff_t start = static_cast<std::ptrdiff_t>(t) * hop - pad;
    for (int i = 0; i < n_fft; ++i) {
      const auto index = reflect_index(start + i, n);
      fft.input()[i] = samples[index] * window[static_cast<std::size_t>(i)];
    }
    fft.execute();
    for (int b = 0; b < bins; ++b) magnitude(t, b) = fft.magnitude(b);
  }
  return magnitude;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }

double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

std::vector<double> mel_band_edges(int n_mels, double f_min, double f_max) {
  const double lo = hz_to_mel(f_min);
  const double hi = hz_to_mel(f_max);
  std::vector<double> edges(static_cast<std::size_t>(n_mels + 2));
  for (int i = 0; i < n_mels + 2; ++i) {
    edges[static_cast<std::size_t>(i)] = mel_to_hz(lo + (hi - lo) * i / (n_mels + 1));
  }
  edges.front() = f_min;
  edges.back() = f_max;
  return edges;
}

Eigen::MatrixXd mel_filterbank(int n_mels, double f_min, double f_max, int n_fft, double sample_rate) {
  if (n_mels < 1) throw ParameterError("mel_filterbank: n_mels must be positive");
  if (n_fft < 2 || n_fft % 2 != 0) throw ParameterError("mel_filterbank: n_fft must be even");
  if (!(sample_rate > 0.0)) throw ParameterError("mel_filterbank: sample rate must be positive");
  if (!(f_min >= 0.0) || !(f_min < f_max) || f_max > sample_rate / 2.0) {
    throw ParameterError(fmt::format("mel_filterbank: need 0 <= f_min < f_max <= {} (got {}, {})",
                                     sample_rate / 2.0, f_min, f_max));
  }
  const auto edges = mel_band_edges(n_mels, f_min, f_max);
  const int bins = n_fft / 2 + 1;
  Eigen::MatrixXd bank = Eigen::MatrixXd::Zero(n_mels, bins);
  for (int m = 0; m < n_mels; ++m) {
    const double lo = edges[static_cast<std::size_t>(m)];
    const double center = edges[static_cast<std::size_t>(m + 1)];
    const double hi = edges[static_cast<std::size_t>(m + 2)];
    for (int b = 0; b < bins; ++b) {
      const double f = b * sample_rate / n_fft;
      double w = 0.0;
      if (f > lo && f <= center) {
        w = (f - lo) / (center - lo);
      } else if (f > center && f < hi) {
        w = (hi - f) / (hi - center);
      }
      bank(m, b) = w;
    }
  }
  return bank;
}

MelSpectrogram mel_spectrogram(const AudioClip& clip, const MelParams& params) {
  if (clip.sample_rate != params.sample_rate) {
    throw ParameterError(fmt::format("mel_spectrogram: clip rate {} differs from {}", clip.sample_rate,
                                     params.sample_rate));
  }
  const Eigen::MatrixXd magnitude = stft_magnitude(clip.samples, params.n_fft, params.hop);
  const Eigen::MatrixXd bank =
      mel_filterbank(params.n_mels, params.f_min, params.f_max, params.n_fft, params.sample_rate);
  const Eigen::MatrixXd power = magnitude.array().square().matrix();
  MelSpectrogram spec;
  spec.params = params;
  spec.values = (bank * power.transpose()).array().log1p().matrix();
  return spec;
}

MelSpectrogram audio_to_mel(const AudioClip& clip, const MelParams& params) {
  const AudioClip resampled = resample(clip, params.sample_rate);
  const AudioClip window = segment(resampled, params.offset_seconds, params.segment_seconds);
  return mel_spectrogram(window, params);
}

FeatureMode parse_feature_mode(const std::string& name) {
  if (name == "flatten") return FeatureMode::flatten;
  if (name == "band-stats") return FeatureMode::band_stats;
  if (name == "raw") return FeatureMode::raw;
  throw ParameterError(fmt::format("unknown feature mode '{}' (flatten, band-stats)", name));
}

std::string to_string(FeatureMode mode) {
  switch (mode) {
    case FeatureMode::flatten:
      return "flatten";
    case FeatureMode::band_stats:
      return "band-stats";
    case FeatureMode::raw:
      return "raw";
  }
  return "unknown";
}

Eigen::VectorXd features_from_mel(const MelSpectrogram& spec, FeatureMode mode) {
  const Eigen::Index bands = spec.bands();
  const Eigen::Index frames = spec.frames();
  switch (mode) {
    case FeatureMode::flatten: {
      Eigen::VectorXd flat(bands * frames);
      for (Eigen::Index b = 0; b < bands; ++b) {
        for (Eigen::Index t = 0; t < frames; ++t) flat[b * frames + t] = spec.values(b, t);
      }
      return flat;
    }
    case FeatureMode::band_stats: {
      Eigen::VectorXd stats(2 * bands);
      for (Eigen::Index b = 0; b < bands; ++b) {
        const double mean = spec.values.row(b).mean();
        const double var = (spec.values.row(b).array() - mean).square().sum() / static_cast<double>(frames);
        stats[b] = mean;
        stats[bands + b] = std::sqrt(var);
      }
      return stats;
    }
    case FeatureMode::raw:
      break;
  }
  throw ParameterError("features_from_mel: mode must be flatten or band-stats");
}

Eigen::MatrixXd unflatten(const Eigen::VectorXd& flat, Eigen::Index bands, Eigen::Index frames) {
  if (flat.size() != bands * frames) throw ParameterError("unflatten: size mismatch");
  Eigen::MatrixXd values(bands, frames);
  for (Eigen::Index b = 0; b < bands; ++b) {
    for (Eigen::Index t = 0; t < frames; ++t) values(b, t) = flat[b * frames + t];
  }
  return values;
}

void write_feature_file(const FeatureFile& file, std::ostream& out) {
  write_version_line(out, "features", kFeatureVersion);
  out << "track_id\t" << file.track_id << '\n';
  out << "mode\t" << to_string(file.mode) << '\n';
  out << "shape";
  for (const auto dim : file.shape) out << '\t' << dim;
  out << '\n';
  out << "params\t" << file.params << '\n';
  out << "values\t" << file.values.size() << '\n';
  for (Eigen::Index i = 0; i < file.values.size(); ++i) out << format_double(file.values[i]) << '\n';
}

void write_feature_file(const FeatureFile& file, const std::filesystem::path& path) {
  AtomicFile out(path);
  write_feature_file(file, out.stream());
  out.commit();
}

FeatureFile read_feature_file(std::istream& in, std::string_view source) {
  const std::string src(source);
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line)) throw FormatError(fmt::format("{}: empty feature file", src));
  check_version_line(line, "features", kFeatureVersion, src);
  std::vector<std::string_view> fields;
  const auto next = [&](std::string_view expected) {
    ++line_no;
    if (!std::getline(in, line)) throw ParseError(src, line_no, fmt::format("expected '{}'", expected));
    fields = split(line, '\t');
    if (fields[0] != expected) throw ParseError(src, line_no, fmt::format("expected '{}' record", expected));
  };
  FeatureFile file;
  next("track_id");
  if (fields.size() != 2 || fields[1].empty()) throw ParseError(src, line_no, "missing track id");
  file.track_id = std::string(fields[1]);
  next("mode");
  file.mode = parse_feature_mode(std::string(fields.at(1)));
  next("shape");
  Eigen::Index expected_size = 1;
  for (std::size_t i = 1; i < fields.size(); ++i) {
    file.shape.push_back(static_cast<Eigen::Index>(parse_int(fields[i])));
    expected_size *= file.shape.back();
  }
  next("params");
  file.params = fields.size() > 1 ? std::string(line.substr(7)) : std::string();
  next("values");
  const auto count = static_cast<Eigen::Index>(parse_int(fields.at(1)));
  if (count != expected_size) throw ParseError(src, line_no, "value count does not match shape");
  file.values.resize(count);
  for (Eigen::Index i = 0; i < count; ++i) {
    ++line_no;
    if (!std::getline(in, line)) throw ParseError(src, line_no, "truncated values");
    try {
      file.values[i] = parse_double(line);
    } catch (const FormatError& e) {
      throw ParseError(src, line_no, e.what());
    }
  }
  return file;
}

FeatureFile read_feature_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(fmt::format("cannot open feature file '{}'", path.string()));
  return read_feature_file(in, path.string());
}

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(fmt::format("cannot open manifest '{}'", path.string()));
  std::vector<ManifestEntry> entries;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (is_version_line(line)) {
      check_version_line(line, "manifest", kManifestVersion, path.string());
      continue;
    }
    if (line.starts_with('#') || trim(line).empty()) continue;
    const auto fields = split(line, '\t');
    if (fields.size() != 2 || fields[0].empty() || fields[1].empty()) {
      throw ParseError(path.string(), line_no, "expected 'track_id<TAB>path'");
    }
    entries.push_back(ManifestEntry{std::string(fields[0]), std::string(fields[1])});
  }
  return entries;
}

void write_manifest(const std::vector<ManifestEntry>& entries, std::ostream& out) {
  write_version_line(out, "manifest", kManifestVersion);
  for (const auto& e : entries) out << e.track_id << '\t' << e.path << '\n';
}

std::ptrdiff_t FeatureTable::find(std::string_view track_id) const {
  const auto it = std::lower_bound(track_ids.begin(), track_ids.end(), track_id);
  if (it == track_ids.end() || *it != track_id) return -1;
  return it - track_ids.begin();
}

FeatureTable load_feature_table(const std::filesystem::path& manifest) {
  const auto entries = read_manifest(manifest);
  if (entries.empty()) throw DataError(fmt::format("manifest '{}' lists no features", manifest.string()));
  std::map<std::string, Eigen::VectorXd> vectors;
  const auto base = manifest.parent_path();
  for (const auto& entry : entries) {
    std::filesystem::path path(entry.path);
    if (path.is_relative()) path = base / path;
    FeatureFile file = read_feature_file(path);
    if (file.track_id != entry.track_id) {
      throw DataError(fmt::format("feature file '{}' holds track '{}', manifest says '{}'", path.string(),
                                  file.track_id, entry.track_id));
    }
    if (!vectors.emplace(entry.track_id, std::move(file.values)).second) {
      throw DataError(fmt::format("manifest lists track '{}' twice", entry.track_id));
    }
  }
  FeatureTable table;
  const Eigen::Index width = vectors.begin()->second.size();
  table.values.resize(static_cast<Eigen::Index>(vectors.size()), width);
  Eigen::Index r = 0;
  for (auto& [id, values] : vectors) {
    if (values.size() != width) throw DataError(fmt::format("track '{}' has feature width {}, expected {}", id, values.size(), width));
    table.track_ids.push_back(id);
    table.values.row(r++) = values.transpose();
  }
  return table;
}

std::string mel_params_string(const MelParams& p) {
  return fmt::format("rate={} n_fft={} hop={} n_mels={} f_min={} f_max={} offset={} length={} window=hann",
                     p.sample_rate, p.n_fft, p.hop, p.n_mels, p.f_min, p.f_max, p.offset_seconds,
                     p.segment_seconds);
}

}  // namespace tagemb

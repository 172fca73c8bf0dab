#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace tagemb {

struct AudioClip {
  std::vector<double> samples;  // mono, in [-1, 1]
  double sample_rate = 0.0;

  double duration() const { return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0; }
};

// PCM WAV: 8/16-bit integer or 32-bit float, mono or stereo (downmixed by averaging).
AudioClip read_wav(const std::filesystem::path& path);
AudioClip read_wav(std::istream& in, std::string_view source = "<stream>");
// 16-bit PCM, or 32-bit float when `float_samples` is set.
void write_wav(const AudioClip& clip, std::ostream& out, bool float_samples = false);
void write_wav(const AudioClip& clip, const std::filesystem::path& path, bool float_samples = false);

struct MelParams {
  double sample_rate = 22050.0;
  int n_fft = 2048;
  int hop = 1024;
  int n_mels = 80;
  double f_min = 16.0;
  double f_max = 11000.0;
  double offset_seconds = 3.0;
  double segment_seconds = 6.0;
};

// Linear interpolation; returns the input unchanged when the rates match.
AudioClip resample(const AudioClip& clip, double target_rate = 22050.0);

// Throws DurationError when the clip is shorter than offset + length.
AudioClip segment(const AudioClip& clip, double offset_seconds = 3.0, double length_seconds = 6.0);

// Magnitude STFT with a periodic Hann window and reflect padding of n_fft/2 on both
// sides. Result is frames x (n_fft/2 + 1) with floor(N / hop) + 1 frames.
Eigen::MatrixXd stft_magnitude(std::span<const double> samples, int n_fft = 2048, int hop = 1024);

double hz_to_mel(double hz);
double mel_to_hz(double mel);

// n_mels + 2 band edges in Hz, equally spaced on the mel scale; filter i peaks at edge i + 1.
std::vector<double> mel_band_edges(int n_mels, double f_min, double f_max);

// n_mels x (n_fft/2 + 1) triangular filters with unit peak height.
Eigen::MatrixXd mel_filterbank(int n_mels = 80, double f_min = 16.0, double f_max = 11000.0,
                               int n_fft = 2048, double sample_rate = 22050.0);

struct MelSpectrogram {
  Eigen::MatrixXd values;  // n_mels x frames, log(1 + mel power)
  MelParams params;

  Eigen::Index bands() const { return values.rows(); }
  Eigen::Index frames() const { return values.cols(); }
};

// log(1 + filterbank * power spectrum) of an already segmented clip at params.sample_rate.
MelSpectrogram mel_spectrogram(const AudioClip& clip, const MelParams& params = {});

// Full pipeline: downmixed clip -> resample -> segment -> mel spectrogram.
MelSpectrogram audio_to_mel(const AudioClip& clip, const MelParams& params = {});

enum class FeatureMode { flatten, band_stats, raw };

FeatureMode parse_feature_mode(const std::string& name);
std::string to_string(FeatureMode mode);

// flatten: row-major (band-major) values, length bands * frames.
// band_stats: per-band means followed by per-band population standard deviations.
Eigen::VectorXd features_from_mel(const MelSpectrogram& spec, FeatureMode mode);
Eigen::MatrixXd unflatten(const Eigen::VectorXd& flat, Eigen::Index bands, Eigen::Index frames);

struct FeatureFile {
  std::string track_id;
  FeatureMode mode = FeatureMode::raw;
  std::vector<Eigen::Index> shape;
  std::string params;  // free-form "key=value" list describing the extraction
  Eigen::VectorXd values;
};

void write_feature_file(const FeatureFile& file, std::ostream& out);
void write_feature_file(const FeatureFile& file, const std::filesystem::path& path);
FeatureFile read_feature_file(std::istream& in, std::string_view source = "<stream>");
FeatureFile read_feature_file(const std::filesystem::path& path);

// Manifest rows: track_id, path (relative paths resolve against the manifest's directory).
struct ManifestEntry {
  std::string track_id;
  std::string path;
};

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);
void write_manifest(const std::vector<ManifestEntry>& entries, std::ostream& out);

// Every feature file listed in the manifest, sorted by track id. All vectors must share one width.
struct FeatureTable {
  std::vector<std::string> track_ids;
  Eigen::MatrixXd values;  // rows follow track_ids

  std::ptrdiff_t find(std::string_view track_id) const;
};

FeatureTable load_feature_table(const std::filesystem::path& manifest);

std::string mel_params_string(const MelParams& params);

}  // namespace tagemb

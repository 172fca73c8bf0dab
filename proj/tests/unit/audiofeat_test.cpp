#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "support/oracles.hpp"
#include "support/temp_dir.hpp"
#include "tagemb/audiofeat.hpp"
#include "tagemb/error.hpp"

using namespace tagemb;

namespace {

AudioClip tone(double hz, double seconds, double rate, double amplitude = 0.5) {
  AudioClip clip;
  clip.sample_rate = rate;
  const auto n = static_cast<std::size_t>(std::llround(seconds * rate));
  clip.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    clip.samples[i] = amplitude * std::sin(2.0 * std::numbers::pi * hz * static_cast<double>(i) / rate);
  }
  return clip;
}

AudioClip ramp(std::size_t n, double rate) {
  AudioClip clip;
  clip.sample_rate = rate;
  for (std::size_t i = 0; i < n; ++i) clip.samples.push_back(static_cast<double>(i));
  return clip;
}

}  // namespace

TEST(Resample, IdentityAndLength) {
  const auto clip = tone(100, 0.5, 44100);
  EXPECT_EQ(resample(clip, 44100).samples, clip.samples);
  const auto down = resample(clip, 22050);
  EXPECT_EQ(down.samples.size(), 11025u);
  EXPECT_EQ(down.sample_rate, 22050);
  for (std::size_t j = 0; j < 100; ++j) EXPECT_DOUBLE_EQ(down.samples[j], clip.samples[2 * j]);
  EXPECT_THROW(resample(AudioClip{}, 22050), ParameterError);
}

TEST(Resample, LinearInterpolationIsExactOnRamps) {
  const auto up = resample(ramp(100, 10), 15);
  ASSERT_EQ(up.samples.size(), 150u);
  for (std::size_t j = 0; j < 140; ++j) EXPECT_NEAR(up.samples[j], static_cast<double>(j) * 10.0 / 15.0, 1e-12);
  EXPECT_EQ(up.samples.back(), 99.0);
}

TEST(Segment, Boundaries) {
  const auto nine = ramp(9 * 22050, 22050);
  const auto seg = segment(nine, 3.0, 6.0);
  ASSERT_EQ(seg.samples.size(), 132300u);
  EXPECT_EQ(seg.samples.front(), 66150.0);
  EXPECT_EQ(seg.samples.back(), 9.0 * 22050 - 1);
  const auto short_clip = ramp(static_cast<std::size_t>(8.99 * 22050), 22050);
  EXPECT_THROW(segment(short_clip, 3.0, 6.0), DurationError);
  EXPECT_THROW(segment(nine, -1.0, 6.0), ParameterError);
  EXPECT_THROW(segment(nine, 0.0, 0.0), ParameterError);
}

TEST(Stft, ShapeAndDftOracle) {
  std::mt19937_64 eng(70);
  std::vector<double> x(300);
  for (auto& v : x) v = gen::uniform(eng, -1, 1);
  const auto mag = stft_magnitude(x, 64, 16);
  EXPECT_EQ(mag.rows(), 300 / 16 + 1);
  EXPECT_EQ(mag.cols(), 33);
  // Interior frame, no padding involved.
  const int t = 5;
  std::vector<double> frame(64);
  for (int i = 0; i < 64; ++i) {
    const double w = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / 64);
    frame[static_cast<std::size_t>(i)] = x[static_cast<std::size_t>(t * 16 - 32 + i)] * w;
  }
  const auto ref = oracle::dft_magnitude(frame);
  for (int b = 0; b < 33; ++b) EXPECT_NEAR(mag(t, b), ref[static_cast<std::size_t>(b)], 1e-10);
  // First frame uses reflected samples around index 0.
  for (int i = 0; i < 64; ++i) {
    const int src = std::abs(i - 32);
    const double w = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / 64);
    frame[static_cast<std::size_t>(i)] = x[static_cast<std::size_t>(src)] * w;
  }
  const auto first = oracle::dft_magnitude(frame);
  for (int b = 0; b < 33; ++b) EXPECT_NEAR(mag(0, b), first[static_cast<std::size_t>(b)], 1e-10);
  EXPECT_THROW(stft_magnitude(std::vector<double>{}, 64, 16), ParameterError);
  EXPECT_THROW(stft_magnitude(x, 63, 16), ParameterError);
  EXPECT_THROW(stft_magnitude(x, 64, 0), ParameterError);
}

TEST(Stft, ToneEnergyAtItsBin) {
  const auto clip = tone(22050.0 * 100 / 2048, 1.0, 22050);
  const auto mag = stft_magnitude(clip.samples);
  Eigen::Index arg;
  mag.row(5).maxCoeff(&arg);
  EXPECT_EQ(arg, 100);
}

TEST(Mel, ScaleRoundTrip) {
  for (const double hz : {0.0, 16.0, 440.0, 1000.0, 11000.0}) EXPECT_NEAR(mel_to_hz(hz_to_mel(hz)), hz, 1e-9);
  EXPECT_NEAR(hz_to_mel(700.0), 2595.0 * std::log10(2.0), 1e-12);
}

TEST(Mel, FilterbankProperties) {
  const auto bank = mel_filterbank();
  EXPECT_EQ(bank.rows(), 80);
  EXPECT_EQ(bank.cols(), 1025);
  EXPECT_GE(bank.minCoeff(), 0.0);
  EXPECT_LE(bank.maxCoeff(), 1.0 + 1e-12);
  const auto edges = mel_band_edges(80, 16.0, 11000.0);
  ASSERT_EQ(edges.size(), 82u);
  EXPECT_EQ(edges.front(), 16.0);
  EXPECT_EQ(edges.back(), 11000.0);
  for (std::size_t i = 1; i < edges.size(); ++i) EXPECT_GT(edges[i], edges[i - 1]);
  for (int m = 0; m < 80; ++m) {
    EXPECT_GT(bank.row(m).sum(), 0.0) << "empty band " << m;
    for (int b = 0; b < 1025; ++b) {
      const double f = b * 22050.0 / 2048;
      if (bank(m, b) > 0) {
        EXPECT_GT(f, edges[static_cast<std::size_t>(m)]);
        EXPECT_LT(f, edges[static_cast<std::size_t>(m + 2)]);
      }
    }
  }
  // Adjacent triangles overlap so that between peaks the weights sum to one.
  for (int b = 0; b < 1025; ++b) {
    const double f = b * 22050.0 / 2048;
    if (f > edges[1] && f < edges[80]) EXPECT_NEAR(bank.col(b).sum(), 1.0, 1e-9);
  }
  EXPECT_THROW(mel_filterbank(80, 16, 12000, 2048, 22050), ParameterError);
  EXPECT_THROW(mel_filterbank(0), ParameterError);
}

TEST(Mel, ToneAt440LightsTheRightBand) {
  const auto clip = tone(440, 9.0, 22050);
  const auto spec = audio_to_mel(clip);
  ASSERT_EQ(spec.bands(), 80);
  ASSERT_EQ(spec.frames(), 130);
  const auto edges = mel_band_edges(80, 16.0, 11000.0);
  int expected = 0;
  for (int m = 1; m < 80; ++m) {
    if (std::abs(edges[static_cast<std::size_t>(m + 1)] - 440) < std::abs(edges[static_cast<std::size_t>(expected + 1)] - 440)) expected = m;
  }
  int hits = 0;
  for (Eigen::Index t = 0; t < spec.frames(); ++t) {
    Eigen::Index arg;
    spec.values.col(t).maxCoeff(&arg);
    if (std::abs(arg - expected) <= 1) ++hits;
  }
  EXPECT_GE(hits, 128);
}

TEST(Mel, PipelineResamplesAndRejectsShortClips) {
  const auto clip = tone(440, 9.5, 44100);
  const auto spec = audio_to_mel(clip);
  EXPECT_EQ(spec.frames(), 130);
  EXPECT_THROW(audio_to_mel(tone(440, 8.0, 22050)), DurationError);
  EXPECT_THROW(mel_spectrogram(tone(440, 6.0, 44100)), ParameterError);
  EXPECT_GE(spec.values.minCoeff(), 0.0);
}

TEST(Features, FlattenAndBandStats) {
  MelSpectrogram spec;
  spec.values.resize(2, 3);
  spec.values << 1, 2, 3, 4, 4, 4;
  const auto flat = features_from_mel(spec, FeatureMode::flatten);
  EXPECT_EQ(flat, (Eigen::VectorXd(6) << 1, 2, 3, 4, 4, 4).finished());
  EXPECT_EQ(unflatten(flat, 2, 3), spec.values);
  const auto stats = features_from_mel(spec, FeatureMode::band_stats);
  ASSERT_EQ(stats.size(), 4);
  EXPECT_DOUBLE_EQ(stats[0], 2.0);
  EXPECT_DOUBLE_EQ(stats[1], 4.0);
  EXPECT_NEAR(stats[2], std::sqrt(2.0 / 3.0), 1e-15);
  EXPECT_DOUBLE_EQ(stats[3], 0.0);
  EXPECT_THROW(features_from_mel(spec, FeatureMode::raw), ParameterError);
  EXPECT_THROW(unflatten(flat, 4, 2), ParameterError);
  EXPECT_EQ(parse_feature_mode("band-stats"), FeatureMode::band_stats);
  EXPECT_THROW(parse_feature_mode("mfcc"), ParameterError);
}

TEST(Wav, RoundTrip) {
  const auto clip = tone(440, 0.1, 22050, 0.7);
  std::stringstream pcm;
  write_wav(clip, pcm);
  const auto back = read_wav(pcm);
  ASSERT_EQ(back.samples.size(), clip.samples.size());
  EXPECT_EQ(back.sample_rate, 22050);
  for (std::size_t i = 0; i < clip.samples.size(); ++i) EXPECT_NEAR(back.samples[i], clip.samples[i], 1.0 / 32767);
  std::stringstream flt;
  write_wav(clip, flt, true);
  const auto fback = read_wav(flt);
  for (std::size_t i = 0; i < clip.samples.size(); ++i) EXPECT_NEAR(fback.samples[i], clip.samples[i], 1e-7);
  std::istringstream junk("RIFX....");
  EXPECT_THROW(read_wav(junk), DataError);
}

TEST(Wav, StereoIsAveraged) {
  // Hand-built 16-bit stereo file with two frames.
  std::string bytes;
  const auto u32 = [&](std::uint32_t v) { for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<char>((v >> (8 * i)) & 0xff)); };
  const auto u16 = [&](std::uint16_t v) { for (int i = 0; i < 2; ++i) bytes.push_back(static_cast<char>((v >> (8 * i)) & 0xff)); };
  bytes += "RIFF";
  u32(36 + 8);
  bytes += "WAVEfmt ";
  u32(16);
  u16(1);
  u16(2);
  u32(8000);
  u32(8000 * 4);
  u16(4);
  u16(16);
  bytes += "data";
  u32(8);
  for (const std::int16_t v : {std::int16_t{16384}, std::int16_t{0}, std::int16_t{-16384}, std::int16_t{-16384}}) {
    u16(static_cast<std::uint16_t>(v));
  }
  std::istringstream in(bytes);
  const auto clip = read_wav(in);
  ASSERT_EQ(clip.samples.size(), 2u);
  EXPECT_EQ(clip.sample_rate, 8000);
  EXPECT_NEAR(clip.samples[0], 0.25, 1e-4);
  EXPECT_NEAR(clip.samples[1], -0.5, 1e-4);
}

TEST(FeatureFiles, RoundTripAndManifest) {
  testing_support::TempDir dir;
  FeatureFile file{"t1", FeatureMode::flatten, {2, 3}, "sr=22050", (Eigen::VectorXd(6) << 1, 2.5, -3, 1e-300, 0.1, 7).finished()};
  write_feature_file(file, dir / "t1.feat");
  const auto back = read_feature_file(dir / "t1.feat");
  EXPECT_EQ(back.track_id, "t1");
  EXPECT_EQ(back.mode, FeatureMode::flatten);
  EXPECT_EQ(back.shape, file.shape);
  EXPECT_EQ(back.values, file.values);
  file.track_id = "t0";
  file.values *= 2;
  write_feature_file(file, dir / "t0.feat");
  testing_support::write_text(dir / "m.tsv", "t1\tt1.feat\nt0\tt0.feat\n");
  const auto table = load_feature_table(dir / "m.tsv");
  ASSERT_EQ(table.track_ids, (std::vector<std::string>{"t0", "t1"}));
  EXPECT_EQ(table.values.row(1).transpose(), back.values);
  EXPECT_EQ(table.find("t1"), 1);
  EXPECT_EQ(table.find("zz"), -1);
  testing_support::write_text(dir / "bad.tsv", "t9\tt1.feat\n");
  EXPECT_THROW(load_feature_table(dir / "bad.tsv"), DataError);
  testing_support::write_text(dir / "dup.tsv", "t1\tt1.feat\nt1\tt1.feat\n");
  EXPECT_THROW(load_feature_table(dir / "dup.tsv"), DataError);
}

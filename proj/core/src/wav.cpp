#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <iterator>
#include <ostream>

#include <fmt/format.h>

#include "tagemb/audiofeat.hpp"
#include "tagemb/error.hpp"
#include "tagemb/text_io.hpp"

namespace tagemb {

namespace {

std::uint32_t le32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
         static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

std::uint16_t le16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | p[1] << 8);
}

void put32(std::ostream& out, std::uint32_t v) {
  const std::array<char, 4> bytes{static_cast<char>(v), static_cast<char>(v >> 8), static_cast<char>(v >> 16),
                                  static_cast<char>(v >> 24)};
  out.write(bytes.data(), 4);
}

void put16(std::ostream& out, std::uint16_t v) {
  const std::array<char, 2> bytes{static_cast<char>(v), static_cast<char>(v >> 8)};
  out.write(bytes.data(), 2);
}

}  // namespace

AudioClip read_wav(std::istream& in, std::string_view source) {
  const std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const auto* bytes = reinterpret_cast<const unsigned char*>(data.data());
  const auto fail = [&](std::string_view why) {
    return DataError(fmt::format("{}: invalid WAV file: {}", source, why));
  };
  if (data.size() < 12 || std::memcmp(bytes, "RIFF", 4) != 0 || std::memcmp(bytes + 8, "WAVE", 4) != 0) {
    throw fail("missing RIFF/WAVE header");
  }
  std::uint16_t format = 0;
  std::uint16_t channels = 0;
  std::uint32_t rate = 0;
  std::uint16_t bits = 0;
  const unsigned char* payload = nullptr;
  std::size_t payload_size = 0;
  std::size_t pos = 12;
  while (pos + 8 <= data.size()) {
    const auto* chunk = bytes + pos;
    const std::size_t size = le32(chunk + 4);
    const std::size_t body = pos + 8;
    if (body + size > data.size()) {
      if (std::memcmp(chunk, "data", 4) == 0) {
        payload = bytes + body;  // tolerate truncated data chunks
        payload_size = data.size() - body;
        break;
      }
      throw fail("truncated chunk");
    }
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16) throw fail("short fmt chunk");
      format = le16(bytes + body);
      channels = le16(bytes + body + 2);
      rate = le32(bytes + body + 4);
      bits = le16(bytes + body + 14);
      if (format == 0xFFFE && size >= 26) format = le16(bytes + body + 24);
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      payload = bytes + body;
      payload_size = size;
    }
    pos = body + size + (size & 1U);
  }
  if (format == 0) throw fail("missing fmt chunk");
  if (payload == nullptr) throw fail("missing data chunk");
  if (channels != 1 && channels != 2) throw fail(fmt::format("{} channels (mono or stereo only)", channels));
  if (rate == 0) throw fail("zero sample rate");
  const bool pcm = format == 1 && (bits == 8 || bits == 16);
  const bool ieee = format == 3 && bits == 32;
  if (!pcm && !ieee) throw fail(fmt::format("unsupported encoding (format {}, {} bits)", format, bits));

  const std::size_t sample_bytes = bits / 8U;
  const std::size_t frames = payload_size / (sample_bytes * channels);
  AudioClip clip;
  clip.sample_rate = static_cast<double>(rate);
  clip.samples.resize(frames);
  for (std::size_t f = 0; f < frames; ++f) {
    double sum = 0.0;
    for (std::size_t c = 0; c < channels; ++c) {
      const auto* p = payload + (f * channels + c) * sample_bytes;
      double value = 0.0;
      if (bits == 8) {
        value = (static_cast<double>(p[0]) - 128.0) / 128.0;
      } else if (bits == 16) {
        value = static_cast<double>(static_cast<std::int16_t>(le16(p))) / 32768.0;
      } else {
        const std::uint32_t raw = le32(p);
        float f32 = 0.0F;
        std::memcpy(&f32, &raw, sizeof f32);
        value = static_cast<double>(f32);
      }
      sum += value;
    }
    clip.samples[f] = sum / static_cast<double>(channels);
    if (!std::isfinite(clip.samples[f])) throw fail("non-finite sample");
  }
  if (clip.samples.empty()) throw fail("no samples");
  return clip;
}

AudioClip read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(fmt::format("cannot open WAV file '{}'", path.string()));
  return read_wav(in, path.string());
}

void write_wav(const AudioClip& clip, std::ostream& out, bool float_samples) {
  const std::uint16_t bits = float_samples ? 32 : 16;
  const std::uint32_t data_size = static_cast<std::uint32_t>(clip.samples.size() * (bits / 8U));
  const auto rate = static_cast<std::uint32_t>(std::lround(clip.sample_rate));
  out.write("RIFF", 4);
  put32(out, 36 + data_size);
  out.write("WAVEfmt ", 8);
  put32(out, 16);
  put16(out, float_samples ? 3 : 1);
  put16(out, 1);
  put32(out, rate);
  put32(out, rate * (bits / 8U));
  put16(out, static_cast<std::uint16_t>(bits / 8U));
  put16(out, bits);
  out.write("data", 4);
  put32(out, data_size);
  for (const double s : clip.samples) {
    if (float_samples) {
      const auto f32 = static_cast<float>(s);
      std::uint32_t raw = 0;
      std::memcpy(&raw, &f32, sizeof raw);
      put32(out, raw);
    } else {
      const double clamped = std::clamp(s, -1.0, 32767.0 / 32768.0);
      put16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(std::lround(clamped * 32768.0))));
    }
  }
}

void write_wav(const AudioClip& clip, const std::filesystem::path& path, bool float_samples) {
  AtomicFile file(path);
  write_wav(clip, file.stream(), float_samples);
  file.commit();
}

}  // namespace tagemb

#include "tagemb/text_io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <system_error>

#include <fmt/format.h>

#include "tagemb/error.hpp"

namespace tagemb {

std::string format_double(double value) { return fmt::format("{:.17g}", value); }

double parse_double(std::string_view text) {
  text = trim(text);
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  double value = 0.0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end || text.empty()) {
    throw FormatError(fmt::format("not a number: '{}'", text));
  }
  return value;
}

long long parse_int(std::string_view text) {
  text = trim(text);
  long long value = 0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end || text.empty()) {
    throw FormatError(fmt::format("not an integer: '{}'", text));
  }
  return value;
}

std::vector<std::string_view> split(std::string_view text, char separator) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    const auto pos = text.find(separator, start);
    if (pos == std::string_view::npos) {
      parts.push_back(text.substr(start));
      break;
    }
    parts.push_back(text.substr(start, pos - start));
    start = pos + 1;
  }
  return parts;
}

std::string_view trim(std::string_view text) {
  constexpr std::string_view ws = " \t\r\n";
  const auto first = text.find_first_not_of(ws);
  if (first == std::string_view::npos) return {};
  const auto last = text.find_last_not_of(ws);
  return text.substr(first, last - first + 1);
}

void write_version_line(std::ostream& out, std::string_view kind, int version) {
  out << "# tagemb " << kind << ' ' << version << '\n';
}

bool is_version_line(std::string_view line) { return line.starts_with("# tagemb "); }

void check_version_line(std::string_view line, std::string_view kind, int supported_version,
                        std::string_view source) {
  if (!is_version_line(line)) {
    throw FormatError(fmt::format("{}: missing format-version line (expected '# tagemb {} {}')",
                                  source, kind, supported_version));
  }
  const auto fields = split(trim(line.substr(9)), ' ');
  if (fields.size() != 2 || fields[0] != kind) {
    throw FormatError(fmt::format("{}: expected a '{}' file, found '{}'", source, kind, line));
  }
  long long version = 0;
  try {
    version = parse_int(fields[1]);
  } catch (const FormatError&) {
    throw FormatError(fmt::format("{}: malformed format version '{}'", source, fields[1]));
  }
  if (version != supported_version) {
    throw FormatError(fmt::format("{}: unsupported {} format version {} (supported: {})", source,
                                  kind, version, supported_version));
  }
}

Digest& Digest::update(std::string_view bytes) {
  for (const unsigned char c : bytes) {
    state_ ^= c;
    state_ *= 0x100000001b3ULL;
  }
  return *this;
}

std::string Digest::hex() const { return fmt::format("{:016x}", state_); }

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(fmt::format("cannot open '{}'", path.string()));
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

std::string digest_file(const std::filesystem::path& path) {
  return Digest().update(read_file(path)).hex();
}

struct AtomicFile::Impl {
  std::ofstream out;
};

AtomicFile::AtomicFile(std::filesystem::path target)
    : target_(std::move(target)), impl_(std::make_unique<Impl>()) {
  temp_ = target_;
  temp_ += ".partial";
  if (target_.has_parent_path()) std::filesystem::create_directories(target_.parent_path());
  impl_->out.open(temp_, std::ios::binary | std::ios::trunc);
  if (!impl_->out) {
    throw DataError(fmt::format("cannot write '{}'", temp_.string()));
  }
}

AtomicFile::AtomicFile(AtomicFile&& other) noexcept
    : target_(std::move(other.target_)),
      temp_(std::move(other.temp_)),
      impl_(std::move(other.impl_)),
      committed_(other.committed_) {}

AtomicFile::~AtomicFile() {
  if (impl_ == nullptr) return;
  impl_->out.close();
  if (!committed_) {
    std::error_code ec;
    std::filesystem::remove(temp_, ec);
  }
}

std::ostream& AtomicFile::stream() { return impl_->out; }

void AtomicFile::commit() {
  impl_->out.flush();
  if (!impl_->out) throw DataError(fmt::format("write failed for '{}'", target_.string()));
  impl_->out.close();
  std::filesystem::rename(temp_, target_);
  committed_ = true;
}

}  // namespace tagemb

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace tagemb {

// Shortest decimal form that parses back to the same double (17 significant digits).
std::string format_double(double value);
double parse_double(std::string_view text);
long long parse_int(std::string_view text);

std::vector<std::string_view> split(std::string_view text, char separator);
std::string_view trim(std::string_view text);

// Artifact files open with "# tagemb <kind> <version>".
void write_version_line(std::ostream& out, std::string_view kind, int version);
bool is_version_line(std::string_view line);
// Checks a version line; throws FormatError on a kind mismatch or an unsupported version.
void check_version_line(std::string_view line, std::string_view kind, int supported_version,
                        std::string_view source);

// 64-bit FNV-1a, rendered as 16 hex digits.
class Digest {
 public:
  Digest& update(std::string_view bytes);
  std::uint64_t value() const noexcept { return state_; }
  std::string hex() const;

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

std::string digest_file(const std::filesystem::path& path);
std::string read_file(const std::filesystem::path& path);

// Writes to a sibling temporary file; the target only appears after commit().
// Uncommitted temporaries are removed on destruction.
class AtomicFile {
 public:
  explicit AtomicFile(std::filesystem::path target);
  AtomicFile(const AtomicFile&) = delete;
  AtomicFile& operator=(const AtomicFile&) = delete;
  AtomicFile(AtomicFile&&) noexcept;
  AtomicFile& operator=(AtomicFile&&) = delete;
  ~AtomicFile();

  std::ostream& stream();
  const std::filesystem::path& target() const noexcept { return target_; }
  void commit();

 private:
  struct Impl;
  std::filesystem::path target_;
  std::filesystem::path temp_;
  std::unique_ptr<Impl> impl_;
  bool committed_ = false;
};

}  // namespace tagemb

#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

namespace dapt::testing {

/// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("dapt-test-" + tag + "-" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

/// Random valid UTF-8: ASCII (including whitespace and punctuation) mixed
/// with 2-, 3- and 4-byte sequences, never surrogates.
template <typename Rng>
std::string random_utf8(Rng& rng, std::size_t code_points) {
  std::uniform_int_distribution<int> kind(0, 9);
  std::string out;
  auto put = [&](std::uint32_t cp) {
    if (cp < 0x80) {
      out += static_cast<char>(cp);
    } else if (cp < 0x800) {
      out += static_cast<char>(0xC0 | (cp >> 6));
      out += static_cast<char>(0x80 | (cp & 0x3F));
    } else if (cp < 0x10000) {
      out += static_cast<char>(0xE0 | (cp >> 12));
      out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
      out += static_cast<char>(0x80 | (cp & 0x3F));
    } else {
      out += static_cast<char>(0xF0 | (cp >> 18));
      out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
      out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
      out += static_cast<char>(0x80 | (cp & 0x3F));
    }
  };
  for (std::size_t i = 0; i < code_points; ++i) {
    const int k = kind(rng);
    std::uint32_t cp;
    if (k < 3) {
      cp = std::uniform_int_distribution<std::uint32_t>('a', 'z')(rng);
    } else if (k < 5) {
      static const char kAscii[] = " \t\n.,;:!?'\"()[]{}-_0123456789ABCXYZ";
      cp = static_cast<unsigned char>(kAscii[std::uniform_int_distribution<std::size_t>(0, sizeof(kAscii) - 2)(rng)]);
    } else if (k < 7) {
      cp = std::uniform_int_distribution<std::uint32_t>(0x80, 0x7FF)(rng);
    } else if (k < 9) {
      cp = std::uniform_int_distribution<std::uint32_t>(0x800, 0xFFFF)(rng);
      if (cp >= 0xD800 && cp <= 0xDFFF) cp -= 0x800;
    } else {
      cp = std::uniform_int_distribution<std::uint32_t>(0x10000, 0x10FFFF)(rng);
    }
    put(cp);
  }
  return out;
}

}  // namespace dapt::testing

#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>

#include "json.hpp"

namespace pirl {

/// Invalid or inconsistent configuration (CLI exit code 1).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A required artifact file does not exist (CLI exit code 2).
struct MissingArtifactError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Read/write failure or malformed file (CLI exit code 3).
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// 64-bit FNV-1a.
constexpr std::uint64_t fnv1a64(std::string_view bytes) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view contents);
nlohmann::json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const nlohmann::json& j);

/// fnv1a64 of the file's bytes, as 16 hex digits.
std::string file_checksum(const std::filesystem::path& path);

}  // namespace pirl

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace gloss::io {

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path);
std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

/// One parsed JSON object per non-blank line. Throws FormatError with the line number.
std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& path);

std::string sha256_hex(const std::vector<std::uint8_t>& bytes);
std::string sha256_file(const std::filesystem::path& path);

/// Shortest decimal form that reads back to the same double.
std::string format_real(double v);

}  // namespace gloss::io

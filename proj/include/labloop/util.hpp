#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace labloop {

std::string sha256_hex(const std::string& data);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& content);
// Write via a temp file + rename so readers never see a half-written file.
void write_text_file_atomic(const std::filesystem::path& path, const std::string& content);

std::string to_lower(std::string s);
std::string trim(const std::string& s);
std::vector<std::string> split_lines(const std::string& text);

// Non-overlapping, case-insensitive occurrence count.
long count_occurrences(const std::string& haystack, const std::string& needle);

// Last `max_bytes` of `text`, cut at a line boundary where possible.
std::string tail_bytes(const std::string& text, std::size_t max_bytes);

// Best-effort extraction of the first JSON value ({...} or [...]) embedded
// in free-form model output. Returns a null json on failure.
nlohmann::json extract_json_block(const std::string& text);

// Canonical serialization used for every file this project writes:
// sorted keys, 2-space indent, trailing newline.
std::string canonical_json(const nlohmann::json& value);

}  // namespace labloop

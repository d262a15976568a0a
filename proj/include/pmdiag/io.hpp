#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <string_view>

#include <json.hpp>

namespace pmdiag {

using Json = nlohmann::json;

/// Writes `contents` to a sibling temporary file and renames it over `path`,
/// so readers never observe a partially written file. Throws Error(Io).
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

std::string read_file(const std::filesystem::path& path);

/// Calls `fn(object, line_number)` for each line of a JSONL file. Line numbers
/// are 1-based. Unparseable lines raise Error(Parse) carrying the line number.
void for_each_jsonl(const std::filesystem::path& path,
                    const std::function<void(const Json&, std::size_t)>& fn);

/// Lowercase hex SHA-256 of `bytes`.
std::string sha256_hex(std::string_view bytes);

// Strict field accessors used by the file readers; throw Error(Parse).
double json_number(const Json& obj, const char* key, std::size_t line = 0);
std::string json_string(const Json& obj, const char* key, std::size_t line = 0);

}  // namespace pmdiag

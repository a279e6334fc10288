#pragma once

#include <filesystem>
#include <string>

#include "json.hpp"

namespace dmvr {

using Json = nlohmann::json;

/// Deterministic JSON text: object keys in sorted order, floating-point
/// values at 17 significant digits, non-finite values as the strings
/// "inf" / "-inf" / "nan". indent < 0 gives a single line.
std::string dump_json(const Json& value, int indent = 2);

/// Accepts a JSON number or one of the non-finite spellings written by dump_json.
double json_to_double(const Json& value);

Json read_json_file(const std::filesystem::path& path);

/// Write-temp-then-rename so readers never observe a partial file.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

std::string read_text_file(const std::filesystem::path& path);

/// 64-bit FNV-1a, rendered as 16 lowercase hex digits.
std::string content_hash(const std::string& text);

}  // namespace dmvr

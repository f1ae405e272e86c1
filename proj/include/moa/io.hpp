#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <string_view>

#include <json.hpp>

namespace moa::io {

std::string read_file(const std::filesystem::path& path);

/// Writes via a temporary sibling and rename, so readers never see a partial file.
void write_file(const std::filesystem::path& path, std::string_view contents);

/// Calls `fn(line_number, record)` for every non-blank line. Line numbers are 1-based.
/// Throws ParseError naming the file and line on malformed JSON.
void for_each_jsonl(const std::filesystem::path& path,
                    const std::function<void(std::size_t, const nlohmann::json&)>& fn);

/// Compact single-line serialization used by every line-delimited format.
std::string dump_line(const nlohmann::json& record);

}  // namespace moa::io

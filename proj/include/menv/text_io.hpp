#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace menv {

// Shortest decimal text that parses back to exactly the same double.
std::string format_double(double value);

// Parses one comma-separated row of reals. Throws ParseError carrying line_no.
std::vector<double> parse_csv_row(std::string_view line, std::size_t line_no);

std::string read_text_file(const std::filesystem::path& path);

// Writes to "<path>.partial" first and renames on success, so an interrupted
// write never leaves a file under the final name.
void write_text_file(const std::filesystem::path& path, std::string_view content);

// Non-negative integer config value; anything else (including -3 or 2.5) is a
// ConfigError naming the option.
std::uint64_t json_count(const nlohmann::json& value, std::string_view name);

}  // namespace menv

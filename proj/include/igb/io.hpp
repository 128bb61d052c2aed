#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace igb::io {

/// Shortest decimal string that parses back to the same double.
std::string format_double(double x);
/// Strict full-string parse; throws FormatError naming `what` on failure.
double parse_double(std::string_view s, std::string_view what);

/// Writes bytes atomically enough for our purposes (truncate + write + check).
void write_text(const std::filesystem::path& path, std::string_view text);
std::string read_text(const std::filesystem::path& path);

}  // namespace igb::io

#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace vt::csv {

// Splits one CSV record. Double-quoted fields may contain commas and "" escapes.
std::vector<std::string> split_line(std::string_view line);

// Quotes a field only when it contains a comma, quote or newline.
std::string escape(std::string_view field);

std::string join(const std::vector<std::string>& fields);

// Shortest round-trip decimal form of a double ("nan" for NaN).
std::string format_double(double v);

// Strips a trailing '\r' left by CRLF files.
std::string_view chomp(std::string_view line);

}  // namespace vt::csv

#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace afen::csv {

/// Quotes a field when it contains a comma, quote or line break.
std::string field(std::string_view s);
/// Splits one record; quoted fields may contain commas and doubled quotes.
std::vector<std::string> split_record(std::string_view line);
/// Lines with any trailing '\r' removed.
std::vector<std::string_view> lines(std::string_view text);

}  // namespace afen::csv

#pragma once

#include <optional>
#include <string>
#include <string_view>

namespace ditto {

// Shortest decimal text that parses back to the identical double.
std::string format_double(double v);
// Fixed notation with `decimals` digits after the point.
std::string format_fixed(double v, int decimals);
// Full-string parse; nullopt on any trailing garbage.
std::optional<double> parse_double(std::string_view s);
std::optional<long long> parse_int(std::string_view s);

}  // namespace ditto

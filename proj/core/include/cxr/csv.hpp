#pragma once

#include <string>
#include <vector>

namespace cxr {

// RFC-4180-ish CSV: comma separated, double quotes for fields containing
// commas, quotes or newlines, quotes escaped by doubling.
std::vector<std::vector<std::string>> parse_csv(const std::string& text);
std::string csv_escape(const std::string& field);
std::string csv_join(const std::vector<std::string>& fields);

}  // namespace cxr

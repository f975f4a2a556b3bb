#pragma once

// Data files under data/ compiled into the library, so the tools work without
// a checkout. Generated from cmake/embedded_data.cpp.in at configure time.

#include <optional>
#include <string_view>

namespace parlframe::data {

std::string_view abbreviations_de();
std::string_view keywords_migrant();
std::string_view keywords_woman();
/// A file from data/templates by name, e.g. "migrant_high_level.txt".
std::optional<std::string_view> template_file(std::string_view name);

}  // namespace parlframe::data

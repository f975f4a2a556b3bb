#pragma once

// File helpers for the JSONL/CSV/JSON stage artifacts. All writers emit UTF-8
// with LF line endings and replace the target atomically (temp file + rename).

#include <filesystem>
#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace parlframe::io {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string read_file(const std::filesystem::path& path);

/// Writes `content` to a sibling temp file, fsyncs it and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

/// Calls `fn` for every non-empty line parsed as JSON. Parse failures raise
/// DataError naming the file and line.
void for_each_jsonl(const std::filesystem::path& path, const std::function<void(const nlohmann::json&)>& fn);

template <typename T>
std::vector<T> read_jsonl(const std::filesystem::path& path) {
  std::vector<T> out;
  for_each_jsonl(path, [&](const nlohmann::json& j) {
    try {
      out.push_back(j.get<T>());
    } catch (const std::exception& e) {
      throw DataError(path.string() + ": " + e.what());
    }
  });
  return out;
}

/// Serializes compactly, one object per line, without escaping non-ASCII.
std::string dump_line(const nlohmann::json& j);

template <typename Range>
std::string to_jsonl(const Range& items) {
  std::string out;
  for (const auto& item : items) {
    out += dump_line(nlohmann::json(item));
    out += '\n';
  }
  return out;
}

template <typename Range>
void write_jsonl(const std::filesystem::path& path, const Range& items) {
  write_file_atomic(path, to_jsonl(items));
}

/// RFC 4180 quoting when needed.
std::string csv_field(std::string_view s);

}  // namespace parlframe::io

#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace parlframe::testing {

std::filesystem::path source_dir();
std::filesystem::path fixture(std::string_view name);
std::filesystem::path cli_path();

/// Fresh, empty directory under the system temp dir; removed on destruction.
class TempDir {
 public:
  explicit TempDir(std::string_view prefix = "parlframe");
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(std::string_view name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

std::string slurp(const std::filesystem::path& p);

}  // namespace parlframe::testing

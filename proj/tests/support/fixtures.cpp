#include "fixtures.hpp"

#include <unistd.h>

#include <atomic>
#include <fstream>
#include <sstream>

namespace parlframe::testing {

std::filesystem::path source_dir() { return PARLFRAME_SOURCE_DIR; }
std::filesystem::path fixture(std::string_view name) { return source_dir() / "tests" / "fixtures" / name; }
std::filesystem::path cli_path() { return PARLFRAME_CLI_PATH; }

TempDir::TempDir(std::string_view prefix) {
  static std::atomic<int> counter{0};
  path_ = std::filesystem::temp_directory_path() /
          (std::string(prefix) + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
  std::filesystem::remove_all(path_);
  std::filesystem::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace parlframe::testing

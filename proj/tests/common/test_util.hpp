#pragma once

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "spkid/eval.hpp"

namespace testutil {

/// Self-deleting scratch directory under the system temp root.
class TempDir {
 public:
  explicit TempDir(const std::string& prefix) {
    std::random_device rd;
    for (int attempt = 0; attempt < 16; ++attempt) {
      auto candidate = std::filesystem::temp_directory_path() /
                       (prefix + "_" + std::to_string(rd() % 1000000));
      std::error_code ec;
      if (std::filesystem::create_directories(candidate, ec) && !ec) {
        path_ = candidate;
        return;
      }
    }
    throw std::runtime_error("cannot create temp dir for prefix " + prefix);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::string str(const std::string& sub = "") const {
    return sub.empty() ? path_.string() : (path_ / sub).string();
  }

 private:
  std::filesystem::path path_;
};

/// Run the command line tool with the given arguments, capturing combined
/// stdout/stderr. Returns the process exit code (-1 if it did not exit
/// normally). `env_prefix` may hold e.g. "VAR=value " to prepend.
inline int run_cli(const std::string& args, std::string* output = nullptr,
                   const std::string& env_prefix = "") {
  const std::string cmd = env_prefix + std::string(SPKID_CLI_PATH) + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return -1;
  std::string captured;
  char buf[4096];
  while (std::size_t n = fread(buf, 1, sizeof(buf), pipe)) captured.append(buf, n);
  const int status = pclose(pipe);
  if (output) *output = captured;
  if (WIFEXITED(status)) return WEXITSTATUS(status);
  return -1;
}

inline std::string slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is.good()) throw std::runtime_error("cannot read " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

inline void spit(const std::string& path, const std::string& content) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  os << content;
  if (!os.good()) throw std::runtime_error("cannot write " + path);
}

/// Name carried by a library error, or "<none>" when fn does not throw.
template <typename Fn>
std::string error_name(Fn&& fn) {
  try {
    fn();
  } catch (const spkid::Error& e) {
    return e.name();
  }
  return "<none>";
}

}  // namespace testutil

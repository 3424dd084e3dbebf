#pragma once

#include <cstdlib>
#include <filesystem>
#include <string>

#include "celiac/rng.hpp"
#include "celiac/tensor.hpp"

namespace testutil {

inline celiac::Tensor random_tensor(std::vector<int> shape, celiac::Rng& rng,
                                    double lo = -1.0, double hi = 1.0) {
  celiac::Tensor t(std::move(shape));
  for (std::int64_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

// Scratch directory unique to a test, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    dir_ = std::filesystem::temp_directory_path() /
           ("celiac_test_" + tag + "_" + std::to_string(counter()++));
    std::filesystem::create_directories(dir_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(dir_, ec);
  }
  const std::filesystem::path& path() const { return dir_; }

 private:
  static int& counter() {
    static int c = 0;
    return c;
  }
  std::filesystem::path dir_;
};

}  // namespace testutil

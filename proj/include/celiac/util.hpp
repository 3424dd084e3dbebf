#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace celiac {

// Raised for bad input data or unsatisfiable requests. The CLI maps this
// (and filesystem errors) to exit code 1; usage problems exit 2.
class PipelineError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::vector<std::string> split(std::string_view s, char sep);
std::string trim(std::string_view s);
std::string lower(std::string_view s);

// Write-to-temp-then-rename so a failed run never leaves a partial file
// behind under the final name.
void atomic_write_file(const std::filesystem::path& path, const void* data,
                       std::size_t n);
void atomic_write_file(const std::filesystem::path& path,
                       const std::string& text);

std::string read_text_file(const std::filesystem::path& path);
std::vector<std::uint8_t> read_binary_file(const std::filesystem::path& path);

}  // namespace celiac

#pragma once

#include <filesystem>
#include <functional>
#include <string>

#include "gcs/cli.hpp"

namespace gcs::cli {

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

/// Runs fn(0..n-1) on up to `jobs` threads. Every index runs even if another
/// throws; the first exception (by index) is rethrown afterwards.
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn);

}  // namespace gcs::cli

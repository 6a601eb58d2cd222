#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "doob/engine.hpp"

namespace doob {

/// Writes `content` to a sibling temporary file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

std::string read_file(const std::filesystem::path& path);

/// Round-trip decimal form of a double ("%.17g").
std::string format_double(double v);

/// CSV with header x0,...,x{d-1} and one row per sample; rows of `samples` are samples.
std::string samples_csv(const Matrix& samples);

/// Writes the CSV and a `<path>.meta` sidecar holding the version and the config echo.
void write_samples_csv(const std::filesystem::path& path, const Matrix& samples,
                       const std::string& config_echo);

Matrix read_samples_csv(const std::filesystem::path& path);

/// Binary trajectory: magic "DOOBTRJ\0", u64 n_chains, u64 n_times, u64 d, then float64
/// little-endian values ordered [chain][time][dim], time index 0 being the final sample.
void write_trajectory(const std::filesystem::path& path, const std::vector<Matrix>& trajectory);
std::vector<Matrix> read_trajectory(const std::filesystem::path& path);

/// Library version string baked in at build time.
std::string version_string();

}  // namespace doob

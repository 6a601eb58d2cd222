#include "doob/io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "doob/config.hpp"

#ifndef DOOB_LAB_VERSION
#define DOOB_LAB_VERSION "unknown"
#endif

namespace doob {

std::string version_string() { return DOOB_LAB_VERSION; }

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string format_double(double v) {
  std::array<char, 32> buf{};
  std::snprintf(buf.data(), buf.size(), "%.17g", v);
  return buf.data();
}

std::string samples_csv(const Matrix& samples) {
  std::string out;
  for (Index j = 0; j < samples.cols(); ++j) {
    if (j) out += ',';
    out += "x" + std::to_string(j);
  }
  out += '\n';
  for (Index i = 0; i < samples.rows(); ++i) {
    for (Index j = 0; j < samples.cols(); ++j) {
      if (j) out += ',';
      out += format_double(samples(i, j));
    }
    out += '\n';
  }
  return out;
}

void write_samples_csv(const std::filesystem::path& path, const Matrix& samples,
                       const std::string& config_echo) {
  write_file_atomic(path, samples_csv(samples));
  std::filesystem::path meta = path;
  meta += ".meta";
  write_file_atomic(meta, "version = " + version_string() + "\n" + config_echo);
}

Matrix read_samples_csv(const std::filesystem::path& path) {
  std::istringstream in(read_file(path));
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("empty CSV " + path.string());
  const Index d = static_cast<Index>(std::count(line.begin(), line.end(), ',')) + 1;
  std::vector<double> values;
  Index rows = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string cell;
    Index n = 0;
    while (std::getline(row, cell, ',')) {
      values.push_back(parse_double(cell, path.string()));
      ++n;
    }
    if (n != d) throw ConfigError("ragged CSV row in " + path.string());
    ++rows;
  }
  Matrix out(rows, d);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < d; ++j) out(i, j) = values[static_cast<std::size_t>(i * d + j)];
  return out;
}

namespace {
constexpr char kTrajMagic[8] = {'D', 'O', 'O', 'B', 'T', 'R', 'J', '\0'};

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint64_t get_u64(const std::string& s, std::size_t& pos) {
  if (s.size() - pos < 8) throw ConfigError("truncated trajectory file");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) {
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(s[pos + i])) << (8 * i);
  }
  pos += 8;
  return v;
}
}  // namespace

void write_trajectory(const std::filesystem::path& path, const std::vector<Matrix>& trajectory) {
  if (trajectory.empty()) throw ConfigError("no trajectory was stored");
  const Index n = trajectory.front().rows();
  const Index d = trajectory.front().cols();
  std::string out(kTrajMagic, kTrajMagic + 8);
  put_u64(out, static_cast<std::uint64_t>(n));
  put_u64(out, trajectory.size());
  put_u64(out, static_cast<std::uint64_t>(d));
  out.reserve(out.size() + 8 * static_cast<std::size_t>(n * d) * trajectory.size());
  for (Index c = 0; c < n; ++c)
    for (const Matrix& step : trajectory)
      for (Index j = 0; j < d; ++j) put_u64(out, std::bit_cast<std::uint64_t>(step(c, j)));
  write_file_atomic(path, out);
}

std::vector<Matrix> read_trajectory(const std::filesystem::path& path) {
  const std::string s = read_file(path);
  if (s.size() < 8 || s.compare(0, 8, std::string(kTrajMagic, 8)) != 0) {
    throw ConfigError("bad trajectory magic in " + path.string());
  }
  std::size_t pos = 8;
  const auto n = static_cast<Index>(get_u64(s, pos));
  const auto T = static_cast<std::size_t>(get_u64(s, pos));
  const auto d = static_cast<Index>(get_u64(s, pos));
  std::vector<Matrix> traj(T, Matrix(n, d));
  for (Index c = 0; c < n; ++c)
    for (std::size_t t = 0; t < T; ++t)
      for (Index j = 0; j < d; ++j) traj[t](c, j) = std::bit_cast<double>(get_u64(s, pos));
  if (pos != s.size()) throw ConfigError("trailing bytes in trajectory " + path.string());
  return traj;
}

}  // namespace doob

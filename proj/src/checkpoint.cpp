#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "doob/io.hpp"
#include "doob/nets.hpp"

namespace doob {

namespace {

constexpr std::array<char, 8> kMagic{'D', 'O', 'O', 'B', 'N', 'E', 'T', '\0'};
constexpr std::uint32_t kFormatVersion = 1;

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_f64(std::string& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

class Reader {
 public:
  Reader(std::string data, std::string origin) : data_(std::move(data)), origin_(std::move(origin)) {}

  std::uint64_t u64() { return le(8); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(le(4)); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool at_end() const { return pos_ == data_.size(); }

  [[noreturn]] void fail(const std::string& what) const {
    throw ConfigError("checkpoint " + origin_ + ": " + what);
  }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) fail("truncated file");
  }
  std::uint64_t le(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    }
    pos_ += static_cast<std::size_t>(n);
    return v;
  }

  std::string data_;
  std::string origin_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const EpsNet& net,
                     const std::string& config_echo) {
  const NetLayout& layout = net.layout();
  std::string out(kMagic.begin(), kMagic.end());
  put_u32(out, kFormatVersion);
  put_u32(out, static_cast<std::uint32_t>(layout.mode));
  put_u64(out, static_cast<std::uint64_t>(layout.dim));
  put_u64(out, static_cast<std::uint64_t>(layout.aux_dim));
  put_u64(out, layout.hidden.size());
  for (Index h : layout.hidden) put_u64(out, static_cast<std::uint64_t>(h));
  const Vector& p = net.mlp().params();
  put_u64(out, static_cast<std::uint64_t>(p.size()));
  for (Index i = 0; i < p.size(); ++i) put_f64(out, p[i]);
  put_u64(out, config_echo.size());
  out += config_echo;
  write_file_atomic(path, out);
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open checkpoint " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  Reader r(buf.str(), path.string());

  if (r.bytes(kMagic.size()) != std::string(kMagic.begin(), kMagic.end())) r.fail("bad magic");
  const std::uint32_t version = r.u32();
  if (version != kFormatVersion) r.fail("unsupported format version " + std::to_string(version));
  const std::uint32_t mode = r.u32();
  if (mode > static_cast<std::uint32_t>(NetMode::RfDiff)) r.fail("unknown network mode");

  NetLayout layout;
  layout.mode = static_cast<NetMode>(mode);
  layout.dim = static_cast<Index>(r.u64());
  layout.aux_dim = static_cast<Index>(r.u64());
  const std::uint64_t n_hidden = r.u64();
  if (n_hidden > 64) r.fail("implausible number of hidden layers");
  layout.hidden.clear();
  for (std::uint64_t i = 0; i < n_hidden; ++i) layout.hidden.push_back(static_cast<Index>(r.u64()));

  auto net = std::make_shared<EpsNet>(layout, 0);
  const std::uint64_t n_params = r.u64();
  if (n_params != static_cast<std::uint64_t>(net->mlp().n_params())) {
    r.fail("parameter count does not match the stored layout");
  }
  Vector& p = net->mlp().params();
  for (Index i = 0; i < p.size(); ++i) p[i] = r.f64();
  const std::uint64_t echo_len = r.u64();
  std::string echo = r.bytes(static_cast<std::size_t>(echo_len));
  if (!r.at_end()) r.fail("trailing bytes");
  return {std::move(net), std::move(echo)};
}

}  // namespace doob

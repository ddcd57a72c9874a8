#include "gridlight/checkpoint.h"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace gridlight::ad {

namespace {

constexpr std::array<char, 8> kMagic = {'G', 'L', 'C', 'K', 'P', 'T', '\0', '\1'};

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is, const std::string& what) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) throw std::runtime_error("checkpoint truncated while reading " + what);
  return v;
}

std::string get_bytes(std::istream& is, std::size_t n, const std::string& what) {
  std::string s(n, '\0');
  if (n && !is.read(s.data(), static_cast<std::streamsize>(n))) throw std::runtime_error("checkpoint truncated while reading " + what);
  return s;
}

}  // namespace

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::string manifest;
  for (const auto& [k, v] : ckpt.manifest) {
    if (k.find_first_of("=\n") != std::string::npos || v.find('\n') != std::string::npos) {
      throw std::invalid_argument("checkpoint manifest entry not representable: " + k);
    }
    manifest += k + "=" + v + "\n";
  }
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write checkpoint " + tmp.string());
    os.write(kMagic.data(), kMagic.size());
    put<std::uint32_t>(os, kCheckpointVersion);
    put<std::uint32_t>(os, static_cast<std::uint32_t>(manifest.size()));
    os.write(manifest.data(), static_cast<std::streamsize>(manifest.size()));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(ckpt.tensors.size()));
    for (const auto& [name, t] : ckpt.tensors) {
      put<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
      os.write(name.data(), static_cast<std::streamsize>(name.size()));
      put<std::uint32_t>(os, static_cast<std::uint32_t>(t.rank()));
      for (int d : t.shape()) put<std::uint64_t>(os, static_cast<std::uint64_t>(d));
      os.write(reinterpret_cast<const char*>(t.ptr()), static_cast<std::streamsize>(t.size() * sizeof(double)));
    }
    if (!os) throw std::runtime_error("failed writing checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint " + path.string());
  std::array<char, 8> magic{};
  if (!is.read(magic.data(), magic.size()) || magic != kMagic) throw std::runtime_error(path.string() + " is not a checkpoint file");
  const auto version = get<std::uint32_t>(is, "version");
  if (version != kCheckpointVersion) throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));

  Checkpoint ckpt;
  const auto mlen = get<std::uint32_t>(is, "manifest length");
  std::istringstream ms(get_bytes(is, mlen, "manifest"));
  for (std::string line; std::getline(ms, line);) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw std::runtime_error("bad manifest line: " + line);
    ckpt.manifest[line.substr(0, eq)] = line.substr(eq + 1);
  }

  const auto count = get<std::uint32_t>(is, "record count");
  for (std::uint32_t r = 0; r < count; ++r) {
    const auto nlen = get<std::uint32_t>(is, "name length");
    std::string name = get_bytes(is, nlen, "name");
    const auto rank = get<std::uint32_t>(is, "rank of " + name);
    if (rank > 8) throw std::runtime_error("implausible rank for " + name);
    Shape shape;
    for (std::uint32_t i = 0; i < rank; ++i) {
      const auto d = get<std::uint64_t>(is, "shape of " + name);
      if (d > (1u << 30)) throw std::runtime_error("implausible dimension for " + name);
      shape.push_back(static_cast<int>(d));
    }
    Tensor t(shape);
    if (t.size() && !is.read(reinterpret_cast<char*>(t.ptr()), static_cast<std::streamsize>(t.size() * sizeof(double)))) {
      throw std::runtime_error("checkpoint truncated in payload of " + name);
    }
    ckpt.tensors.emplace(std::move(name), std::move(t));
  }
  return ckpt;
}

}  // namespace gridlight::ad

#include "dcnp/tensor_io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

static_assert(std::endian::native == std::endian::little,
              "tensor files are little-endian; byte swapping is not implemented");

namespace dcnp {

namespace {

constexpr char kMagic[4] = {'D', 'C', 'N', 'P'};
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ostream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

std::uint32_t read_u32(std::istream& is, const std::string& what) {
  std::uint32_t v = 0;
  if (!is.read(reinterpret_cast<char*>(&v), sizeof v)) {
    throw std::runtime_error("tensor file truncated while reading " + what);
  }
  return v;
}

}  // namespace

void save_tensor(const std::filesystem::path& path, const Tensor& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open tensor file for writing: " + path.string());
  os.write(kMagic, 4);
  write_u32(os, kVersion);
  write_u32(os, static_cast<std::uint32_t>(t.rank()));
  for (int e : t.shape()) write_u32(os, static_cast<std::uint32_t>(e));
  os.write(reinterpret_cast<const char*>(t.data()),
           static_cast<std::streamsize>(t.size() * sizeof(double)));
  if (!os) throw std::runtime_error("tensor write failed: " + path.string());
}

Tensor load_tensor(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open tensor file: " + path.string());
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw std::runtime_error("bad tensor file magic in " + path.string());
  }
  const std::uint32_t version = read_u32(is, "version");
  if (version != kVersion) {
    throw std::runtime_error("unsupported tensor file version in " + path.string());
  }
  const std::uint32_t rank = read_u32(is, "rank");
  if (rank > 8) throw std::runtime_error("implausible tensor rank in " + path.string());
  std::vector<int> shape;
  for (std::uint32_t i = 0; i < rank; ++i) {
    shape.push_back(static_cast<int>(read_u32(is, "extent")));
  }
  Tensor t(shape.empty() ? std::vector<int>{1} : shape);
  if (!is.read(reinterpret_cast<char*>(t.data()),
               static_cast<std::streamsize>(t.size() * sizeof(double)))) {
    throw std::runtime_error("tensor file truncated: " + path.string());
  }
  return t;
}

}  // namespace dcnp

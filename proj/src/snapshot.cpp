#include "wildflow/snapshot.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace wildflow {

namespace {
constexpr char kMagic[4] = {'W', 'F', 'L', 'D'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<char*>(b), 4);
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void write_snapshot(const std::filesystem::path& path, const Field& f) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open snapshot for writing: " + path.string());
  os.write(kMagic, 4);
  put_u32(os, kVersion);
  put_u32(os, static_cast<std::uint32_t>(f.grid.d));
  put_u32(os, static_cast<std::uint32_t>(f.grid.n));
  put_u32(os, static_cast<std::uint32_t>(f.rank));
  os.write(reinterpret_cast<const char*>(&f.t), sizeof(double));
  for (const auto& c : f.comp)
    os.write(reinterpret_cast<const char*>(c.data()),
             static_cast<std::streamsize>(c.size() * sizeof(double)));
  if (!os) throw std::runtime_error("snapshot write failed: " + path.string());
}

Field read_snapshot(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open snapshot: " + path.string());
  char magic[4];
  is.read(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("bad snapshot magic in " + path.string());
  if (get_u32(is) != kVersion)
    throw std::runtime_error("unsupported snapshot version in " + path.string());
  Grid g;
  g.d = static_cast<int>(get_u32(is));
  g.n = static_cast<int>(get_u32(is));
  Rank rank = static_cast<Rank>(get_u32(is));
  double t = 0;
  is.read(reinterpret_cast<char*>(&t), sizeof(double));
  Field f = Field::zeros(g, rank, t);
  for (auto& c : f.comp)
    is.read(reinterpret_cast<char*>(c.data()),
            static_cast<std::streamsize>(c.size() * sizeof(double)));
  if (!is) throw std::runtime_error("snapshot truncated: " + path.string());
  return f;
}

}  // namespace wildflow

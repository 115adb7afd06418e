#include "slm/report.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace slm {

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t x) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", (unsigned long long)x);
  return std::string(buf);
}

void atomic_write(const std::string& path, const std::string& content) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write '" + tmp.string() + "'");
    out << content;
    if (!out) throw std::runtime_error("short write to '" + tmp.string() + "'");
  }
  fs::rename(tmp, target);
}

void write_repro_log(const std::string& path, std::uint64_t seed,
                     std::uint64_t config_hash) {
  std::string blob;
  blob += "SLMF";
  blob.push_back(1);  // version
  auto put_u64 = [&blob](std::uint64_t x) {
    for (int i = 0; i < 8; ++i) blob.push_back((char)((x >> (8 * i)) & 0xff));
  };
  put_u64(seed);
  put_u64(config_hash);
  atomic_write(path, blob);
}

}  // namespace slm

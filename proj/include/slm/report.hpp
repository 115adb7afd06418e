#pragma once

#include <cstdint>
#include <string>

namespace slm {

std::uint64_t fnv1a64(const std::string& bytes);
std::string hex64(std::uint64_t x);

// Writes to a temp file in the target directory, then renames over the
// destination.
void atomic_write(const std::string& path, const std::string& content);

// Little-endian repro log: magic "SLMF", version, base seed, config hash.
void write_repro_log(const std::string& path, std::uint64_t seed,
                     std::uint64_t config_hash);

}  // namespace slm

#include "gcs/rng.hpp"

namespace gcs {
namespace {

// FNV-1a
std::uint64_t hash_name(std::string_view name) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : name) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint32_t lo(std::uint64_t v) { return static_cast<std::uint32_t>(v); }
std::uint32_t hi(std::uint64_t v) { return static_cast<std::uint32_t>(v >> 32); }

}  // namespace

Rng make_stream(std::uint64_t master_seed, std::string_view name, std::uint64_t index) {
  const std::uint64_t h = hash_name(name);
  std::seed_seq seq{lo(master_seed), hi(master_seed), lo(h), hi(h), lo(index), hi(index)};
  return Rng(seq);
}

Rng make_stream(std::uint64_t master_seed, std::string_view name) {
  return make_stream(master_seed, name, 0);
}

}  // namespace gcs

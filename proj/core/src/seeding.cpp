#include "sybilsim/seeding.hpp"

namespace sybilsim {

std::uint64_t fnv1a64(std::string_view text) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t master, std::string_view label, std::uint64_t client,
                          std::uint64_t round) noexcept {
  std::uint64_t h = fnv1a64(label);
  h = mix64(h ^ master);
  h = mix64(h ^ client);
  h = mix64(h ^ round);
  return h;
}

}  // namespace sybilsim

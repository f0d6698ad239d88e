#pragma once

#include <cstdint>
#include <string_view>

namespace sybilsim {

// 64-bit FNV-1a over the bytes of `text`.
std::uint64_t fnv1a64(std::string_view text) noexcept;

// splitmix64 finalizer.
std::uint64_t mix64(std::uint64_t x) noexcept;

// Seed for one random stream of an experiment:
//   h = fnv1a64(label)
//   h = mix64(h ^ master); h = mix64(h ^ client); h = mix64(h ^ round)
std::uint64_t derive_seed(std::uint64_t master, std::string_view label, std::uint64_t client = 0,
                          std::uint64_t round = 0) noexcept;

}  // namespace sybilsim

#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace volcal {

// splitmix64 finalizer.
std::uint64_t mix64(std::uint64_t x);

// Seed for one (stage, key) pair under a root seed: FNV-1a over
// "<stage>/<key>" folded into the root through mix64. Stable across runs and
// platforms, so any stage can be re-run in isolation.
std::uint64_t derive_seed(std::uint64_t root, std::string_view stage, std::string_view key = {});

// Fisher-Yates permutation of 0..n-1 driven by mt19937_64(seed).
std::vector<int> seeded_permutation(int n, std::uint64_t seed);

}  // namespace volcal

#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace nar {

using Rng = std::mt19937_64;

// Derives an independent generator from a root seed and a stream name, so that
// e.g. dataset sampling and weight initialisation can vary independently.
Rng substream(std::uint64_t root_seed, std::string_view name);
std::uint64_t derive_seed(std::uint64_t root_seed, std::string_view name);

double uniform(Rng& rng, double lo, double hi);
double normal(Rng& rng, double mean, double stddev);
// Uniform integer in [lo, hi].
std::size_t uniform_index(Rng& rng, std::size_t lo, std::size_t hi);

}  // namespace nar

#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>

namespace trpa {

using Rng = std::mt19937_64;

/// Inverse-CDF draw from unnormalised non-negative weights.
std::size_t sample_index(std::span<const double> weights, Rng& rng);

}  // namespace trpa

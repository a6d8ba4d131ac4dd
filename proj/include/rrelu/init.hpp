#pragma once

// Weight and slope initialization.
//
// Type I: Kaiming weights plus slopes drawn from a truncated two-component
// Gaussian mixture (means +-1, variance 3) restricted to the bands whose
// rotation angle lies in +-[35deg, 55deg], i.e. |b| in [tan 35deg, tan 55deg].
// Type II: copy a trained plain-ReLU network's weights and statistics and set
// every slope to exactly 1, which reproduces the donor network bit for bit.

#include <cstdint>
#include <random>
#include <vector>

#include "rrelu/model.hpp"

namespace rrelu {

inline constexpr double kSlopeBandLo = 0.7002075382097097;   // tan(35 deg)
inline constexpr double kSlopeBandHi = 1.4281480067421144;   // tan(55 deg)

// Fill a tensor with N(0, 2/fan_in) samples.
void kaiming_fill(Tensorf& w, std::size_t fan_in, std::mt19937_64& rng);

// One slope sample from the truncated mixture (rejection sampling).
float sample_truncated_gmm(std::mt19937_64& rng);

// Fresh network: Kaiming weights, zero biases, identity batch norm, mixture
// slopes.  Deterministic for a given seed.
void init_type1(Network& net, std::uint64_t seed);

// Adopt a trained ReLU donor of the same architecture: copy every weight,
// bias and batch-norm tensor, set all slopes to 1.  Throws
// CheckpointError(Incompatible) when shapes or layer structure differ.
void init_type2(Network& net, const Network& donor);

}  // namespace rrelu

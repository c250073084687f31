#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "milasc/gradcheck.hpp"

namespace milasc {

struct SuiteEntry {
    std::string layer;
    double max_rel_error = 0.0;
};

/// Finite-difference checks for every differentiable layer (conv2d, dilated
/// conv1d, batch norm in train mode, max pool, SD head, MD head, the max
/// aggregator at non-tie points, weighted BCE) on randomized inputs derived
/// from `seed`. `large` widens the probe shapes.
std::vector<SuiteEntry> layer_gradient_suite(std::uint64_t seed, bool large = false);

/// Whole-model check on a reduced configuration (channels 4/8/16, instance
/// dim 16, 40x40 input, batch 2) with a seeded coordinate subsample; covers
/// both heads without MTS at 40x40 and both with MTS at 40x80.
std::vector<SuiteEntry> model_gradient_suite(std::uint64_t seed, int coords_per_tensor = 48);

} // namespace milasc

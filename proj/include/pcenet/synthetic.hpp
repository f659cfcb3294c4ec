#pragma once

#include <cstdint>
#include <vector>

#include "pcenet/raster.hpp"
#include "pcenet/training.hpp"

namespace pcenet::synthetic {

/// Procedural fundus-like image: black surround, reddish retinal disc with a
/// bright optic disc, darker macula, and branching vessel-like curves.
/// Carries its FOV mask. Deterministic in (side, seed).
Image synthetic_fundus(int side, std::uint64_t seed);

/// count images with ids "synth_000", "synth_001", ...
std::vector<training::Sample> synthetic_corpus(int count, int side, std::uint64_t seed);

}  // namespace pcenet::synthetic

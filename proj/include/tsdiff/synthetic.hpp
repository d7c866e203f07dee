#pragma once

#include "tsdiff/profiles.hpp"

#include <cstdint>

namespace tsdiff {

/// Heat-pump-like daily load profiles in watts. Each day is drawn from one
/// of two regimes: a cold regime where a compressor cycles on and off (a
/// square wave over a small base load) and a mild regime with a smooth
/// two-peak sinusoidal demand. Day i uses the rng stream (seed, i).
ProfileSet synthesize_profiles(std::size_t n, Resolution res, std::uint64_t seed);

}  // namespace tsdiff

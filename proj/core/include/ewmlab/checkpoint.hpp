#pragma once

#include <filesystem>

#include "ewmlab/params.hpp"

namespace ewmlab {

inline constexpr int kCheckpointVersion = 1;

// Writes `<stem>.bin` (little-endian float64 values, in registry order) and
// `<stem>.manifest` (one "name shape offset count" line per parameter).
void save_checkpoint(const ParameterStore& store, const std::filesystem::path& stem);

// Loads values into an already-registered store. Names and shapes must match.
void load_checkpoint(ParameterStore& store, const std::filesystem::path& stem);

}  // namespace ewmlab

#pragma once

#include <filesystem>

#include "upmnet/trainer.hpp"

namespace upmnet {

// Checkpoint layout: `dir/header.json` plus one float64 UPMF file per named
// tensor (model parameters, anchor banks, optimizer buffers). The header holds
// the config, iteration counters, anchor slot table, and generator state.

void save_checkpoint(const std::filesystem::path& dir, TrainState& state);
TrainState load_checkpoint(const std::filesystem::path& dir);

}  // namespace upmnet

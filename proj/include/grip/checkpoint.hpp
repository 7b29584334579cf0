// Copyright 2026 The GRIP Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "grip/moe.hpp"

// GRIPMOE1 network checkpoint:
//   magic "GRIPMOE1"
//   u32 L, E, d, k, C            (little-endian)
//   per layer: theta (E·d), then per expert weight (d·d) and bias (d)
//   readout weight (C·d), readout bias (C)
// All reals are little-endian IEEE-754 binary64, row-major.

namespace grip {

std::vector<std::uint8_t> encode_checkpoint(const MoENetwork& net);
MoENetwork decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const std::filesystem::path& path, const MoENetwork& net);
MoENetwork load_checkpoint(const std::filesystem::path& path);

}  // namespace grip

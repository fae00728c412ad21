// Copyright 2026 The oocd Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "oocd/binary_io.hpp"
#include "oocd/models.hpp"

namespace oocd::detail {

void write_trees(BinaryWriter& out, const std::vector<Tree>& trees);
std::vector<Tree> read_trees(BinaryReader& in);

// Independent per-tree random stream derived from the learner seed.
std::uint64_t tree_seed(std::uint64_t seed, std::size_t tree_index);

}  // namespace oocd::detail

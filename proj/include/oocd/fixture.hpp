// Copyright 2026 The oocd Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>

namespace oocd {

// Self-contained mock corpus for offline runs. Vectors are planted for the
// mock encoders so every channel pair has a chosen cosine: drawn from
// [pristine_low, pristine_high] for pristine samples and from
// [falsified_low, falsified_high] for falsified ones.
struct FixtureOptions {
  std::size_t samples = 200;  // multiple of 10 keeps every split balanced
  std::uint64_t seed = 0;
  std::uint32_t image_size = 32;
  double pristine_low = 0.8;
  double pristine_high = 0.95;
  double falsified_low = -0.1;
  double falsified_high = 0.2;
};

struct FixtureInfo {
  std::filesystem::path config;       // config.json, paths relative to it
  std::filesystem::path annotations;  // annotations.jsonl
  std::filesystem::path planted;      // embedding store with planted vectors
  std::size_t samples = 0;
};

// Writes images/, annotations.jsonl, planted/ and config.json under dir.
// Splits are 60/20/20 with half of each split falsified. The output is a
// pure function of the options.
FixtureInfo write_fixture(const std::filesystem::path& dir, const FixtureOptions& options = {});

}  // namespace oocd

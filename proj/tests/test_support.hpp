// Copyright 2026 The oocd Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include "oocd/features.hpp"
#include "oocd/rng.hpp"

namespace oocd::testing {

// Fresh empty directory under the build tree (or the system temp dir).
inline std::filesystem::path scratch_dir(const std::string& name) {
  const char* env = std::getenv("OOCD_TEST_TMP");
  const std::filesystem::path root =
      env ? std::filesystem::path(env) : std::filesystem::temp_directory_path() / "oocd-tests";
  const auto dir = root / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

// Two Gaussian blobs with unit spread whose means sit `separation` apart
// along the diagonal. Half the rows per class; falsified rows at +.
inline std::vector<FeatureVector> gaussian_blobs(std::size_t n, std::size_t dims,
                                                 double separation,
                                                 std::uint64_t seed,
                                                 FeatureMode mode = FeatureMode::kSimilarity,
                                                 ChannelSet channels = {Channel::kClip, Channel::kSbert}) {
  Rng rng(seed);
  std::vector<FeatureVector> out;
  const double offset = separation / 2.0 / std::sqrt(static_cast<double>(dims));
  for (std::size_t i = 0; i < n; ++i) {
    const bool falsified = i % 2 == 1;
    FeatureVector f;
    f.sample_id = "s" + std::to_string(i);
    f.mode = mode;
    f.channels = channels;
    for (std::size_t d = 0; d < dims; ++d) {
      f.values.push_back((falsified ? offset : -offset) + rng.normal());
    }
    f.label = falsified ? Label::kFalsified : Label::kPristine;
    out.push_back(std::move(f));
  }
  return out;
}

}  // namespace oocd::testing

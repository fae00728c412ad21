// Copyright 2026 The oocd Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "oocd/corpus.hpp"

namespace oocd {

class EmbeddingStore;

// dot(u, v) / (|u| |v|), accumulated in double. Throws LengthMismatch or
// ZeroVector.
double cosine(std::span<const float> u, std::span<const float> v);
double cosine(std::span<const double> u, std::span<const double> v);

// Encoder ids that produce the three channels.
struct EncoderSet {
  std::string joint = "clip-vit-b32";             // (I, C)
  std::string text = "sbert-all-mpnet-base-v2";   // (C, C')
  std::string image = "vit-l-16";                 // (I, I')
};

struct SimilarityTriple {
  std::string sample_id;
  double clip_sim = 0.0;   // cos(I, C) under the joint encoder
  double sbert_sim = 0.0;  // cos(C, C') under the text encoder
  double vit_sim = 0.0;    // cos(I, I') under the image encoder

  std::array<double, 3> values() const { return {clip_sim, sbert_sim, vit_sim}; }
};

// Throws MissingRecord naming the first absent (sample, artifact, encoder).
SimilarityTriple similarity_triple(const EmbeddingStore& store,
                                   const std::string& sample_id,
                                   const EncoderSet& encoders);

enum class Aggregation { kAll, kMajority, kMean };

std::string_view to_string(Aggregation a) noexcept;
std::optional<Aggregation> parse_aggregation(std::string_view text) noexcept;

// Per-channel margins (sim - threshold) folded into one number that is >= 0
// exactly when the pair counts as pristine. Works for any channel count:
//   all      -> smallest margin
//   majority -> the (n/2 + 1)-th largest margin
//   mean     -> mean margin
double aggregate_margin(std::span<const double> sims,
                        std::span<const double> thresholds,
                        Aggregation aggregation);
double aggregate_margin(const std::array<double, 3>& sims,
                        const std::array<double, 3>& thresholds,
                        Aggregation aggregation);

// Pristine when the aggregated per-channel test (sim >= threshold) holds.
Label threshold_classify(const SimilarityTriple& triple,
                         const std::array<double, 3>& thresholds,
                         Aggregation aggregation);

// Fits thresholds on the 0.01 grid over [-1, 1] by maximizing accuracy:
// best shared threshold first, then coordinate sweeps per channel. Ties keep
// the earlier (lower) grid value.
std::vector<double> fit_thresholds(const std::vector<std::vector<double>>& rows,
                                   const std::vector<Label>& truth,
                                   Aggregation aggregation);
std::array<double, 3> fit_thresholds(const std::vector<SimilarityTriple>& triples,
                                     const std::vector<Label>& truth,
                                     Aggregation aggregation);

// CSV "sample_id,clip_sim,sbert_sim,vit_sim,label" with 6 decimals; label is
// the numeric encoding (falsified = 1).
std::string triples_csv(const std::vector<SimilarityTriple>& triples,
                        const std::vector<Label>& labels);

}  // namespace oocd

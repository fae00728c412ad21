// Copyright 2026 The oocd Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "oocd/corpus.hpp"
#include "oocd/similarity.hpp"

namespace oocd {

class EmbeddingStore;

enum class Channel : std::uint8_t { kClip = 1, kSbert = 2, kVit = 4 };

// Non-empty subset of {clip, sbert, vit}; always iterated in that order.
class ChannelSet {
 public:
  constexpr ChannelSet() = default;
  constexpr ChannelSet(std::initializer_list<Channel> channels) {
    for (Channel c : channels) bits_ |= static_cast<std::uint8_t>(c);
  }
  static ChannelSet all() { return {Channel::kClip, Channel::kSbert, Channel::kVit}; }

  constexpr bool has(Channel c) const noexcept {
    return (bits_ & static_cast<std::uint8_t>(c)) != 0;
  }
  constexpr bool empty() const noexcept { return bits_ == 0; }
  std::size_t size() const noexcept;
  std::uint8_t bits() const noexcept { return bits_; }

  // "clip", "clip+sbert", "clip+sbert+vit", ...
  std::string to_string() const;
  // Accepts "+"-joined names in any order; ConfigError when invalid.
  static ChannelSet parse(std::string_view text);

  bool operator==(const ChannelSet&) const = default;

 private:
  std::uint8_t bits_ = 0;
};

enum class FeatureMode : std::uint8_t { kSimilarity, kFeatureMap };

std::string_view to_string(FeatureMode m) noexcept;
std::optional<FeatureMode> parse_feature_mode(std::string_view text) noexcept;

struct FeatureVector {
  std::string sample_id;
  FeatureMode mode = FeatureMode::kSimilarity;
  ChannelSet channels;
  std::vector<double> values;
  std::optional<Label> label;  // absent at inference
};

// Similarity mode: one value per channel. Feature-map mode: both vectors of
// each channel's pair (clip 512+512, sbert 768+768, vit 1024+1024).
std::size_t expected_feature_length(FeatureMode mode, ChannelSet channels);

// Values ordered (clip, sbert, vit) restricted to the channel set. Labels are
// attached when given (same length as triples).
std::vector<FeatureVector> assemble_similarity_features(
    const std::vector<SimilarityTriple>& triples, ChannelSet channels,
    const std::vector<Label>* labels = nullptr);

// Concatenates I_joint, C_joint, C_text, C'_text, I_img, I'_img restricted to
// the channels. Throws MissingRecord, or DimensionMismatch when a stored
// vector has an unexpected length.
FeatureVector assemble_feature_map(const EmbeddingStore& store,
                                   const std::string& sample_id,
                                   ChannelSet channels,
                                   const EncoderSet& encoders);

// Dense views for the learners. Throws ShapeMismatch on ragged input and
// NonFiniteFeature on NaN/Inf.
Eigen::MatrixXd to_matrix(const std::vector<FeatureVector>& features);
// 0/1 targets (falsified = 1); throws ShapeMismatch for unlabeled rows.
Eigen::VectorXd to_targets(const std::vector<FeatureVector>& features);

// FNV-1a over ids, labels and value bits.
std::string fingerprint(const std::vector<FeatureVector>& features);

// "sample_id,<channel names...>,label" with 6 decimals.
std::string features_csv(const std::vector<FeatureVector>& features);

// Feature-map export into the embedding-store format: one partition named
// "features/<mode>/<channels>", record tag = label (255 when unlabeled).
void export_feature_map(const std::vector<FeatureVector>& features,
                        EmbeddingStore& store);

}  // namespace oocd

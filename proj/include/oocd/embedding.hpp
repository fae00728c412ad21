// Copyright 2026 The oocd Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "oocd/corpus.hpp"
#include "oocd/encoder.hpp"
#include "oocd/generation.hpp"
#include "oocd/store.hpp"

namespace oocd {

// (image-branch, text-branch) vectors from a joint encoder.
std::pair<std::vector<float>, std::vector<float>> embed_joint(
    const std::filesystem::path& image, const std::string& caption,
    Encoder& encoder);
std::vector<float> embed_text(const std::string& caption, Encoder& encoder);
std::vector<float> embed_image(const std::filesystem::path& image,
                               Encoder& encoder);

struct EncoderTrio {
  Encoder* joint = nullptr;  // (I, C)
  Encoder* text = nullptr;   // (C, C')
  Encoder* image = nullptr;  // (I, I')
};

struct EmbedFailure {
  std::string sample_id;
  std::string message;
};

struct EmbedResult {
  std::size_t records_written = 0;
  std::size_t records_skipped = 0;  // already present
  std::vector<EmbedFailure> failures;
};

// Writes six records per sample: (I, C) under the joint encoder, (C, C')
// under the text encoder, (I, I') under the image encoder. Records already
// in the store are skipped without calling the encoder. Throws
// MissingArtifact when a sample has no synthetic pair, and EncoderFailure
// when every sample failed.
EmbedResult embed_corpus(const std::vector<Sample>& samples,
                         const std::vector<SyntheticPair>& pairs,
                         const EncoderTrio& encoders, EmbeddingStore& store);

}  // namespace oocd

// Copyright 2026 The oocd Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "oocd/adapter_process.hpp"
#include "oocd/image.hpp"

namespace oocd {

class EmbeddingStore;

enum class Modality : std::uint8_t { kJoint, kText, kImage };

std::string_view to_string(Modality m) noexcept;
std::optional<Modality> parse_modality(std::string_view text) noexcept;

struct EncoderSpec {
  std::string encoder_id;
  Modality modality = Modality::kJoint;
  std::uint32_t dim = 0;
};

// Dims of the reference encoders: a joint image/text model (512), a sentence
// encoder (768) and a vision transformer (1024).
inline constexpr std::uint32_t kJointDim = 512;
inline constexpr std::uint32_t kTextDim = 768;
inline constexpr std::uint32_t kImageDim = 1024;

// Known reference encoders: "clip-vit-b32", "sbert-all-mpnet-base-v2",
// "vit-l-16". Returns nullopt for unknown ids.
std::optional<EncoderSpec> reference_encoder_spec(std::string_view encoder_id);

class Encoder {
 public:
  explicit Encoder(EncoderSpec spec);
  virtual ~Encoder() = default;

  const EncoderSpec& spec() const noexcept { return spec_; }

  // Both throw EncoderFailure when the modality is not supported or the input
  // is invalid, DimensionMismatch when the backend returns the wrong length.
  std::vector<float> encode_text(std::string_view text);
  std::vector<float> encode_image(const std::filesystem::path& image_path);

  bool accepts_text() const noexcept { return spec_.modality != Modality::kImage; }
  bool accepts_images() const noexcept { return spec_.modality != Modality::kText; }

  // Number of encode calls that reached the backend.
  std::uint64_t invocations() const noexcept { return invocations_.load(); }

 protected:
  virtual std::vector<float> do_encode_text(std::string_view text) = 0;
  virtual std::vector<float> do_encode_image(const std::filesystem::path& path) = 0;

 private:
  std::vector<float> checked(std::vector<float> v, std::string_view what) const;

  EncoderSpec spec_;
  std::atomic<std::uint64_t> invocations_{0};
};

// Deterministic stand-in: every input maps to a pseudorandom unit vector
// seeded by its content (text bytes, or decoded pixels for images). Planted
// vectors override that mapping so tests can fix pairwise similarities.
class MockEncoder : public Encoder {
 public:
  explicit MockEncoder(EncoderSpec spec);

  static std::string text_key(std::string_view text);
  static std::string image_key(const Image& image);

  void plant(const std::string& key, std::vector<float> vector);
  // Loads every record of the store partition named after this encoder,
  // using the record id as the content key.
  std::size_t plant_from(const EmbeddingStore& store);

  // The unplanted vector for a key.
  std::vector<float> hashed_vector(std::string_view key) const;

 protected:
  std::vector<float> do_encode_text(std::string_view text) override;
  std::vector<float> do_encode_image(const std::filesystem::path& path) override;

 private:
  std::vector<float> lookup(const std::string& key) const;

  mutable std::mutex mutex_;
  std::map<std::string, std::vector<float>> planted_;
};

// Encoder backed by an adapter process. Requests use kind "embed_text"
// (payload: the text) or "embed_image" (payload: the image path); the result
// is the vector as a JSON array of numbers.
class SubprocessEncoder : public Encoder {
 public:
  SubprocessEncoder(EncoderSpec spec, std::vector<std::string> command);

 protected:
  std::vector<float> do_encode_text(std::string_view text) override;
  std::vector<float> do_encode_image(const std::filesystem::path& path) override;

 private:
  std::vector<float> call(const std::string& kind, const std::string& payload);
  AdapterProcess process_;
};

}  // namespace oocd

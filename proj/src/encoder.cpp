// Copyright 2026 The oocd Authors.
// SPDX-License-Identifier: Apache-2.0

#include "oocd/encoder.hpp"

#include <cmath>

#include "oocd/error.hpp"
#include "oocd/hash.hpp"
#include "oocd/rng.hpp"
#include "oocd/store.hpp"

namespace oocd {

using nlohmann::json;

std::string_view to_string(Modality m) noexcept {
  switch (m) {
    case Modality::kJoint: return "joint";
    case Modality::kText: return "text";
    case Modality::kImage: return "image";
  }
  return "?";
}

std::optional<Modality> parse_modality(std::string_view text) noexcept {
  if (text == "joint") return Modality::kJoint;
  if (text == "text") return Modality::kText;
  if (text == "image") return Modality::kImage;
  return std::nullopt;
}

std::optional<EncoderSpec> reference_encoder_spec(std::string_view encoder_id) {
  if (encoder_id == "clip-vit-b32") {
    return EncoderSpec{std::string(encoder_id), Modality::kJoint, kJointDim};
  }
  if (encoder_id == "sbert-all-mpnet-base-v2") {
    return EncoderSpec{std::string(encoder_id), Modality::kText, kTextDim};
  }
  if (encoder_id == "vit-l-16") {
    return EncoderSpec{std::string(encoder_id), Modality::kImage, kImageDim};
  }
  return std::nullopt;
}

Encoder::Encoder(EncoderSpec spec) : spec_(std::move(spec)) {
  if (spec_.dim == 0) throw DimensionMismatch("encoder dim must be positive");
}

std::vector<float> Encoder::checked(std::vector<float> v,
                                    std::string_view what) const {
  if (v.size() != spec_.dim) {
    throw DimensionMismatch("encoder '" + spec_.encoder_id + "' returned " +
                            std::to_string(v.size()) + " values for " +
                            std::string(what) + ", expected " +
                            std::to_string(spec_.dim));
  }
  for (float f : v) {
    if (!std::isfinite(f)) {
      throw EncoderFailure("encoder '" + spec_.encoder_id +
                           "' produced a non-finite value for " + std::string(what));
    }
  }
  return v;
}

std::vector<float> Encoder::encode_text(std::string_view text) {
  if (!accepts_text()) {
    throw EncoderFailure("encoder '" + spec_.encoder_id + "' does not embed text");
  }
  if (text.empty()) {
    throw EncoderFailure("encoder '" + spec_.encoder_id + "': empty input");
  }
  ++invocations_;
  return checked(do_encode_text(text), "text");
}

std::vector<float> Encoder::encode_image(const std::filesystem::path& image_path) {
  if (!accepts_images()) {
    throw EncoderFailure("encoder '" + spec_.encoder_id + "' does not embed images");
  }
  ++invocations_;
  return checked(do_encode_image(image_path), image_path.string());
}

MockEncoder::MockEncoder(EncoderSpec spec) : Encoder(std::move(spec)) {}

std::string MockEncoder::text_key(std::string_view text) {
  return "t" + to_hex64(fnv1a64(text));
}

std::string MockEncoder::image_key(const Image& image) {
  return "i" + pixel_hash(image);
}

void MockEncoder::plant(const std::string& key, std::vector<float> vector) {
  if (vector.size() != spec().dim) {
    throw DimensionMismatch("planted vector for '" + key + "' has length " +
                            std::to_string(vector.size()) + ", expected " +
                            std::to_string(spec().dim));
  }
  std::lock_guard lock(mutex_);
  planted_[key] = std::move(vector);
}

std::size_t MockEncoder::plant_from(const EmbeddingStore& store) {
  std::size_t n = 0;
  store.for_each(spec().encoder_id,
                 [&](const std::string& id, std::uint8_t, std::span<const float> v) {
                   plant(id, std::vector<float>(v.begin(), v.end()));
                   ++n;
                 });
  return n;
}

std::vector<float> MockEncoder::hashed_vector(std::string_view key) const {
  std::uint64_t state = Fnv1a().field(spec().encoder_id).field(key).digest();
  std::vector<double> raw(spec().dim);
  double norm2 = 0.0;
  for (auto& x : raw) {
    const auto bits = static_cast<std::int64_t>(splitmix64(state) >> 11);
    x = static_cast<double>(bits - (std::int64_t{1} << 52)) * 0x1.0p-52;
    norm2 += x * x;
  }
  const double inv = 1.0 / std::sqrt(norm2);
  std::vector<float> out(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    out[i] = static_cast<float>(raw[i] * inv);
  }
  return out;
}

std::vector<float> MockEncoder::lookup(const std::string& key) const {
  {
    std::lock_guard lock(mutex_);
    auto it = planted_.find(key);
    if (it != planted_.end()) return it->second;
  }
  return hashed_vector(key);
}

std::vector<float> MockEncoder::do_encode_text(std::string_view text) {
  return lookup(text_key(text));
}

std::vector<float> MockEncoder::do_encode_image(const std::filesystem::path& path) {
  Image image;
  try {
    image = read_png(path);
  } catch (const IoError& e) {
    throw EncoderFailure("cannot decode image '" + path.string() + "': " + e.what());
  }
  return lookup(image_key(image));
}

SubprocessEncoder::SubprocessEncoder(EncoderSpec spec,
                                     std::vector<std::string> command)
    : Encoder(std::move(spec)), process_(std::move(command)) {}

std::vector<float> SubprocessEncoder::call(const std::string& kind,
                                           const std::string& payload) {
  json config = {{"encoder_id", spec().encoder_id}, {"dim", spec().dim}};
  json result;
  try {
    result = process_.request(kind, payload, std::move(config));
  } catch (const GenerationFailed& e) {
    throw EncoderFailure("encoder '" + spec().encoder_id + "': " + e.what());
  }
  if (!result.is_array()) {
    throw EncoderFailure("encoder '" + spec().encoder_id +
                         "' returned a non-array result");
  }
  std::vector<float> out;
  out.reserve(result.size());
  for (const auto& v : result) {
    if (!v.is_number()) {
      throw EncoderFailure("encoder '" + spec().encoder_id + "' returned a non-number");
    }
    out.push_back(v.get<float>());
  }
  return out;
}

std::vector<float> SubprocessEncoder::do_encode_text(std::string_view text) {
  return call("embed_text", std::string(text));
}

std::vector<float> SubprocessEncoder::do_encode_image(
    const std::filesystem::path& path) {
  return call("embed_image", path.string());
}

}  // namespace oocd

// Copyright 2026 The oocd Authors.
// SPDX-License-Identifier: Apache-2.0

#include "oocd/features.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>

#include "oocd/encoder.hpp"
#include "oocd/error.hpp"
#include "oocd/hash.hpp"
#include "oocd/store.hpp"

namespace oocd {

namespace {

constexpr Channel kOrder[] = {Channel::kClip, Channel::kSbert, Channel::kVit};

std::string_view channel_name(Channel c) {
  switch (c) {
    case Channel::kClip: return "clip";
    case Channel::kSbert: return "sbert";
    case Channel::kVit: return "vit";
  }
  return "?";
}

}  // namespace

std::size_t ChannelSet::size() const noexcept {
  return static_cast<std::size_t>(std::popcount(bits_));
}

std::string ChannelSet::to_string() const {
  std::string out;
  for (Channel c : kOrder) {
    if (!has(c)) continue;
    if (!out.empty()) out += "+";
    out += channel_name(c);
  }
  return out;
}

ChannelSet ChannelSet::parse(std::string_view text) {
  ChannelSet set;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('+', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view name = text.substr(start, end - start);
    while (!name.empty() && name.front() == ' ') name.remove_prefix(1);
    while (!name.empty() && name.back() == ' ') name.remove_suffix(1);
    bool matched = false;
    for (Channel c : kOrder) {
      if (name == channel_name(c)) {
        set.bits_ |= static_cast<std::uint8_t>(c);
        matched = true;
      }
    }
    if (!matched) throw ConfigError("unknown channel '" + std::string(name) + "'");
    start = end + 1;
  }
  if (set.empty()) throw ConfigError("empty channel set");
  return set;
}

std::string_view to_string(FeatureMode m) noexcept {
  return m == FeatureMode::kSimilarity ? "similarity" : "feature_map";
}

std::optional<FeatureMode> parse_feature_mode(std::string_view text) noexcept {
  if (text == "similarity") return FeatureMode::kSimilarity;
  if (text == "feature_map") return FeatureMode::kFeatureMap;
  return std::nullopt;
}

std::size_t expected_feature_length(FeatureMode mode, ChannelSet channels) {
  if (mode == FeatureMode::kSimilarity) return channels.size();
  std::size_t n = 0;
  if (channels.has(Channel::kClip)) n += 2 * kJointDim;
  if (channels.has(Channel::kSbert)) n += 2 * kTextDim;
  if (channels.has(Channel::kVit)) n += 2 * kImageDim;
  return n;
}

std::vector<FeatureVector> assemble_similarity_features(
    const std::vector<SimilarityTriple>& triples, ChannelSet channels,
    const std::vector<Label>* labels) {
  if (channels.empty()) throw ShapeMismatch("empty channel set");
  if (labels && labels->size() != triples.size()) {
    throw ShapeMismatch("labels and triples differ in length");
  }
  std::vector<FeatureVector> out;
  out.reserve(triples.size());
  for (std::size_t i = 0; i < triples.size(); ++i) {
    const auto& t = triples[i];
    FeatureVector f;
    f.sample_id = t.sample_id;
    f.mode = FeatureMode::kSimilarity;
    f.channels = channels;
    if (channels.has(Channel::kClip)) f.values.push_back(t.clip_sim);
    if (channels.has(Channel::kSbert)) f.values.push_back(t.sbert_sim);
    if (channels.has(Channel::kVit)) f.values.push_back(t.vit_sim);
    if (labels) f.label = (*labels)[i];
    out.push_back(std::move(f));
  }
  return out;
}

FeatureVector assemble_feature_map(const EmbeddingStore& store,
                                   const std::string& sample_id,
                                   ChannelSet channels,
                                   const EncoderSet& encoders) {
  if (channels.empty()) throw ShapeMismatch("empty channel set");
  FeatureVector f;
  f.sample_id = sample_id;
  f.mode = FeatureMode::kFeatureMap;
  f.channels = channels;
  f.values.reserve(expected_feature_length(FeatureMode::kFeatureMap, channels));

  auto append = [&](Artifact a, const std::string& enc, std::uint32_t dim) {
    auto v = store.get(sample_id, a, enc);
    if (!v) throw MissingRecord(sample_id, to_string(a), enc);
    if (v->size() != dim) {
      throw DimensionMismatch("feature map for '" + sample_id + "': encoder '" +
                              enc + "' vector has length " +
                              std::to_string(v->size()) + ", expected " +
                              std::to_string(dim));
    }
    f.values.insert(f.values.end(), v->begin(), v->end());
  };
  if (channels.has(Channel::kClip)) {
    append(Artifact::kImage, encoders.joint, kJointDim);
    append(Artifact::kCaption, encoders.joint, kJointDim);
  }
  if (channels.has(Channel::kSbert)) {
    append(Artifact::kCaption, encoders.text, kTextDim);
    append(Artifact::kGeneratedCaption, encoders.text, kTextDim);
  }
  if (channels.has(Channel::kVit)) {
    append(Artifact::kImage, encoders.image, kImageDim);
    append(Artifact::kGeneratedImage, encoders.image, kImageDim);
  }
  return f;
}

Eigen::MatrixXd to_matrix(const std::vector<FeatureVector>& features) {
  if (features.empty()) return Eigen::MatrixXd(0, 0);
  const std::size_t d = features.front().values.size();
  Eigen::MatrixXd x(static_cast<Eigen::Index>(features.size()),
                    static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < features.size(); ++i) {
    const auto& v = features[i].values;
    if (v.size() != d) {
      throw ShapeMismatch("feature vector '" + features[i].sample_id +
                          "' has length " + std::to_string(v.size()) +
                          ", expected " + std::to_string(d));
    }
    for (std::size_t j = 0; j < d; ++j) {
      if (!std::isfinite(v[j])) {
        throw NonFiniteFeature("non-finite feature " + std::to_string(j) +
                               " in '" + features[i].sample_id + "'");
      }
      x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v[j];
    }
  }
  return x;
}

Eigen::VectorXd to_targets(const std::vector<FeatureVector>& features) {
  Eigen::VectorXd y(static_cast<Eigen::Index>(features.size()));
  for (std::size_t i = 0; i < features.size(); ++i) {
    if (!features[i].label) {
      throw ShapeMismatch("feature vector '" + features[i].sample_id +
                          "' has no label");
    }
    y(static_cast<Eigen::Index>(i)) = to_int(*features[i].label);
  }
  return y;
}

std::string fingerprint(const std::vector<FeatureVector>& features) {
  Fnv1a h;
  h.update_u64(features.size());
  for (const auto& f : features) {
    h.field(f.sample_id);
    h.update_u64(f.label ? static_cast<std::uint64_t>(to_int(*f.label)) : 255);
    h.update_u64(f.values.size());
    for (double v : f.values) {
      std::uint64_t bits;
      std::memcpy(&bits, &v, 8);
      h.update_u64(bits);
    }
  }
  return h.hex();
}

std::string features_csv(const std::vector<FeatureVector>& features) {
  std::string out = "sample_id";
  if (!features.empty()) {
    const auto& f0 = features.front();
    if (f0.mode == FeatureMode::kSimilarity) {
      for (Channel c : kOrder) {
        if (f0.channels.has(c)) out += "," + std::string(channel_name(c));
      }
    } else {
      for (std::size_t j = 0; j < f0.values.size(); ++j) {
        out += ",f" + std::to_string(j);
      }
    }
  }
  out += ",label\n";
  char buf[64];
  for (const auto& f : features) {
    out += f.sample_id;
    for (double v : f.values) {
      std::snprintf(buf, sizeof(buf), ",%.6f", v);
      out += buf;
    }
    out += f.label ? "," + std::to_string(to_int(*f.label)) : std::string(",");
    out += "\n";
  }
  return out;
}

void export_feature_map(const std::vector<FeatureVector>& features,
                        EmbeddingStore& store) {
  if (features.empty()) return;
  const auto& f0 = features.front();
  const std::string partition = "features/" + std::string(to_string(f0.mode)) +
                                "/" + f0.channels.to_string();
  store.ensure_partition(partition, static_cast<std::uint32_t>(f0.values.size()));
  std::vector<float> buf;
  for (const auto& f : features) {
    buf.assign(f.values.begin(), f.values.end());
    const std::uint8_t tag =
        f.label ? static_cast<std::uint8_t>(to_int(*f.label)) : 255;
    store.put_raw(partition, f.sample_id, tag, buf);
  }
  store.flush();
}

}  // namespace oocd

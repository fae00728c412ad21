// Copyright 2026 The oocd Authors.
// SPDX-License-Identifier: Apache-2.0

#include "oocd/embedding.hpp"

#include <unordered_map>

#include "oocd/error.hpp"

namespace oocd {

namespace {

void require(const Encoder& e, Modality m, const char* op) {
  if (e.spec().modality != m) {
    throw EncoderFailure(std::string(op) + " needs a " + std::string(to_string(m)) +
                         " encoder, '" + e.spec().encoder_id + "' is " +
                         std::string(to_string(e.spec().modality)));
  }
}

}  // namespace

std::pair<std::vector<float>, std::vector<float>> embed_joint(
    const std::filesystem::path& image, const std::string& caption,
    Encoder& encoder) {
  require(encoder, Modality::kJoint, "embed_joint");
  return {encoder.encode_image(image), encoder.encode_text(caption)};
}

std::vector<float> embed_text(const std::string& caption, Encoder& encoder) {
  require(encoder, Modality::kText, "embed_text");
  return encoder.encode_text(caption);
}

std::vector<float> embed_image(const std::filesystem::path& image,
                               Encoder& encoder) {
  require(encoder, Modality::kImage, "embed_image");
  return encoder.encode_image(image);
}

EmbedResult embed_corpus(const std::vector<Sample>& samples,
                         const std::vector<SyntheticPair>& pairs,
                         const EncoderTrio& encoders, EmbeddingStore& store) {
  EmbedResult result;
  if (samples.empty()) return result;
  if (!encoders.joint || !encoders.text || !encoders.image) {
    throw EncoderFailure("embed_corpus needs joint, text and image encoders");
  }
  require(*encoders.joint, Modality::kJoint, "embed_corpus");
  require(*encoders.text, Modality::kText, "embed_corpus");
  require(*encoders.image, Modality::kImage, "embed_corpus");

  std::unordered_map<std::string, const SyntheticPair*> by_id;
  for (const auto& p : pairs) by_id.emplace(p.sample_id, &p);
  for (const auto& s : samples) {
    if (!by_id.count(s.id)) {
      throw MissingArtifact("no synthetic pair for sample '" + s.id + "'");
    }
  }

  for (Encoder* e : {encoders.joint, encoders.text, encoders.image}) {
    store.ensure_partition(e->spec().encoder_id, e->spec().dim);
  }

  for (const auto& s : samples) {
    const SyntheticPair& pair = *by_id.at(s.id);
    struct Job {
      Encoder* encoder;
      Artifact artifact;
    };
    const Job jobs[] = {{encoders.joint, Artifact::kImage},
                        {encoders.joint, Artifact::kCaption},
                        {encoders.text, Artifact::kCaption},
                        {encoders.text, Artifact::kGeneratedCaption},
                        {encoders.image, Artifact::kImage},
                        {encoders.image, Artifact::kGeneratedImage}};
    try {
      for (const auto& job : jobs) {
        const auto& enc_id = job.encoder->spec().encoder_id;
        if (store.contains(s.id, job.artifact, enc_id)) {
          ++result.records_skipped;
          continue;
        }
        std::vector<float> v;
        switch (job.artifact) {
          case Artifact::kImage: v = job.encoder->encode_image(s.image_path); break;
          case Artifact::kCaption: v = job.encoder->encode_text(s.caption); break;
          case Artifact::kGeneratedImage:
            v = job.encoder->encode_image(pair.generated_image_path);
            break;
          case Artifact::kGeneratedCaption:
            v = job.encoder->encode_text(pair.generated_caption);
            break;
        }
        if (store.put({s.id, job.artifact, enc_id, std::move(v)})) {
          ++result.records_written;
        }
      }
    } catch (const Error& e) {
      result.failures.push_back({s.id, e.what()});
    }
  }
  store.flush();
  if (result.failures.size() == samples.size()) {
    throw EncoderFailure("embedding failed for all " +
                         std::to_string(samples.size()) + " samples; first: " +
                         result.failures.front().message);
  }
  return result;
}

}  // namespace oocd

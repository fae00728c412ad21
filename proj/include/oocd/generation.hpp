// Copyright 2026 The oocd Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "oocd/adapter_process.hpp"
#include "oocd/corpus.hpp"
#include "oocd/image.hpp"

namespace oocd {

class Encoder;

struct GenerationConfig {
  std::uint32_t ddim_steps = 500;  // denoising steps of the image generator
  double guidance_scale = 7.5;     // unconditional guidance scale
  std::int64_t seed = 42;          // initial-noise seed
  std::uint32_t resolution = 512;  // generated images are resolution^2
  std::string backend_caption = "mock-caption";
  std::string backend_image = "mock-image";
  // Candidate captions requested per image; more than one triggers medoid
  // condensation under the text encoder.
  std::uint32_t caption_candidates = 1;
  std::uint32_t max_caption_tokens = 40;

  // Throws ConfigError on out-of-range fields.
  void validate() const;
  // 16 hex digits; changes whenever any field changes.
  std::string hash() const;

  nlohmann::json to_json() const;
  static GenerationConfig from_json(const nlohmann::json& j);
};

struct SyntheticPair {
  std::string sample_id;
  std::string generated_caption;                // C'
  std::filesystem::path generated_image_path;  // I'
  std::string config_hash;
};

// Image -> caption candidates. Calls are serialized unless the backend
// declares itself reentrant.
class CaptionBackend {
 public:
  virtual ~CaptionBackend() = default;
  virtual std::string id() const = 0;
  virtual bool reentrant() const { return false; }

  std::vector<std::string> candidates(const std::filesystem::path& image_path,
                                      const Image& image,
                                      const GenerationConfig& config);
  std::uint64_t calls() const noexcept { return calls_.load(); }

 protected:
  virtual std::vector<std::string> do_candidates(
      const std::filesystem::path& image_path, const Image& image,
      const GenerationConfig& config) = 0;

 private:
  std::mutex mutex_;
  std::atomic<std::uint64_t> calls_{0};
};

// Prompt -> resolution x resolution image.
class ImageBackend {
 public:
  virtual ~ImageBackend() = default;
  virtual std::string id() const = 0;
  virtual bool reentrant() const { return false; }

  Image generate(const std::string& prompt, const GenerationConfig& config);
  std::uint64_t calls() const noexcept { return calls_.load(); }

 protected:
  virtual Image do_generate(const std::string& prompt,
                            const GenerationConfig& config) = 0;

 private:
  std::mutex mutex_;
  std::atomic<std::uint64_t> calls_{0};
};

// Emits "mock-caption-<h>" where h is the pixel hash of the image; extra
// candidates get a "-<k>" suffix.
class MockCaptionBackend : public CaptionBackend {
 public:
  std::string id() const override { return "mock-caption"; }
  bool reentrant() const override { return true; }

 protected:
  std::vector<std::string> do_candidates(const std::filesystem::path&,
                                         const Image& image,
                                         const GenerationConfig& config) override;
};

// Procedural image whose pixels depend only on (prompt, seed, resolution):
// a 16x16 grid of flat colour blocks drawn from an integer hash stream.
class MockImageBackend : public ImageBackend {
 public:
  std::string id() const override { return "mock-image"; }
  bool reentrant() const override { return true; }

  static Image render(const std::string& prompt, std::int64_t seed,
                      std::uint32_t resolution);

 protected:
  Image do_generate(const std::string& prompt,
                    const GenerationConfig& config) override;
};

// Adapter-process backends. Caption requests: kind "caption", payload = image
// path, result = caption string or array of candidates. Image requests: kind
// "image", payload = prompt, result = path of a PNG written by the adapter.
class SubprocessCaptionBackend : public CaptionBackend {
 public:
  SubprocessCaptionBackend(std::string id, std::vector<std::string> command);
  std::string id() const override { return id_; }

 protected:
  std::vector<std::string> do_candidates(const std::filesystem::path& image_path,
                                         const Image& image,
                                         const GenerationConfig& config) override;

 private:
  std::string id_;
  AdapterProcess process_;
};

class SubprocessImageBackend : public ImageBackend {
 public:
  SubprocessImageBackend(std::string id, std::vector<std::string> command,
                         std::filesystem::path scratch_dir);
  std::string id() const override { return id_; }

 protected:
  Image do_generate(const std::string& prompt,
                    const GenerationConfig& config) override;

 private:
  std::string id_;
  AdapterProcess process_;
  std::filesystem::path scratch_dir_;
};

// Cache layout:
//   <root>/<config_hash>/config.json
//   <root>/<config_hash>/<sample_id>.caption.txt
//   <root>/<config_hash>/<sample_id>.image.png
//   <root>/<config_hash>/failures.jsonl
// Entries are published by hard-linking a finished temp file, so readers see
// complete files only and the first writer of a key wins.
class ArtifactCache {
 public:
  explicit ArtifactCache(std::filesystem::path root);

  const std::filesystem::path& root() const noexcept { return root_; }
  std::filesystem::path dir(const std::string& config_hash) const;
  std::filesystem::path caption_path(const std::string& config_hash,
                                     const std::string& sample_id) const;
  std::filesystem::path image_path(const std::string& config_hash,
                                   const std::string& sample_id) const;
  std::filesystem::path ledger_path(const std::string& config_hash) const;

  std::optional<std::string> load_caption(const std::string& config_hash,
                                          const std::string& sample_id) const;
  bool has_image(const std::string& config_hash,
                 const std::string& sample_id) const;

  // Return false when another writer got there first (content discarded).
  bool store_caption(const std::string& config_hash,
                     const std::string& sample_id, const std::string& caption);
  bool store_image(const std::string& config_hash, const std::string& sample_id,
                   const Image& image);

  void record_failure(const std::string& config_hash,
                      const nlohmann::json& entry);
  void write_config(const GenerationConfig& config);

  // Sample ids are escaped into safe file stems.
  static std::string file_stem(const std::string& sample_id);

 private:
  bool publish(const std::filesystem::path& final_path,
               const std::function<void(const std::filesystem::path&)>& write);

  std::filesystem::path root_;
  std::mutex ledger_mutex_;
};

// Text of the medoid candidate: the one with the largest summed cosine
// similarity to the others under the text encoder. Ties go to the earliest.
std::string condense_captions(const std::vector<std::string>& candidates,
                              Encoder& text_encoder);

// Produces C' for one image. Throws BackendUnavailable when condensation is
// needed but no text encoder is given, GenerationFailed when the backend
// fails or returns nothing usable.
std::string generate_caption(const std::filesystem::path& image_path,
                             CaptionBackend& backend,
                             const GenerationConfig& config,
                             Encoder* condense_encoder = nullptr);

// Produces I' for one caption: generates at config.resolution, resizes to
// (native_width, native_height) and stores it in the cache. A cached image is
// returned without calling the backend.
std::filesystem::path generate_image(const std::string& sample_id,
                                     const std::string& caption,
                                     ImageBackend& backend,
                                     const GenerationConfig& config,
                                     ArtifactCache& cache,
                                     std::uint32_t native_width,
                                     std::uint32_t native_height);

struct GenerationFailure {
  std::string sample_id;
  std::string kind;  // "caption" | "image"
  std::string message;
};

struct GenerationResult {
  std::vector<SyntheticPair> pairs;  // successes, in input order
  std::vector<GenerationFailure> failures;
  std::size_t cache_hits = 0;        // artifacts served from the cache
};

struct GenerationBackends {
  CaptionBackend* caption = nullptr;
  ImageBackend* image = nullptr;
  Encoder* condense_encoder = nullptr;  // only needed for >1 candidate
};

// Builds (C', I') for every sample. Failures land in the result and in the
// cache ledger; throws GenerationFailed only when every sample failed.
GenerationResult generate_pairs(const std::vector<Sample>& samples,
                                const GenerationConfig& config,
                                const GenerationBackends& backends,
                                ArtifactCache& cache, unsigned workers = 1);

}  // namespace oocd

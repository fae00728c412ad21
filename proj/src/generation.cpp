// Copyright 2026 The oocd Authors.
// SPDX-License-Identifier: Apache-2.0

#include "oocd/generation.hpp"

#include <unistd.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <thread>

#include "oocd/encoder.hpp"
#include "oocd/error.hpp"
#include "oocd/hash.hpp"
#include "oocd/rng.hpp"
#include "oocd/similarity.hpp"

namespace oocd {

namespace fs = std::filesystem;
using nlohmann::json;

void GenerationConfig::validate() const {
  if (ddim_steps < 1) throw ConfigError("generation.ddim_steps must be >= 1");
  if (!(guidance_scale > 0.0) || !std::isfinite(guidance_scale)) {
    throw ConfigError("generation.guidance_scale must be a positive number");
  }
  if (resolution == 0) throw ConfigError("generation.resolution must be > 0");
  if (caption_candidates == 0) {
    throw ConfigError("generation.caption_candidates must be >= 1");
  }
  if (max_caption_tokens == 0) {
    throw ConfigError("generation.max_caption_tokens must be >= 1");
  }
  if (backend_caption.empty() || backend_image.empty()) {
    throw ConfigError("generation backends must be named");
  }
}

std::string GenerationConfig::hash() const {
  std::uint64_t scale_bits;
  std::memcpy(&scale_bits, &guidance_scale, sizeof(scale_bits));
  Fnv1a h;
  h.field("GenerationConfig/1");
  h.update_u64(ddim_steps).update_u64(scale_bits);
  h.update_u64(static_cast<std::uint64_t>(seed)).update_u64(resolution);
  h.field(backend_caption).field(backend_image);
  h.update_u64(caption_candidates).update_u64(max_caption_tokens);
  return h.hex();
}

json GenerationConfig::to_json() const {
  return {{"ddim_steps", ddim_steps},
          {"guidance_scale", guidance_scale},
          {"seed", seed},
          {"resolution", resolution},
          {"backend_caption", backend_caption},
          {"backend_image", backend_image},
          {"caption_candidates", caption_candidates},
          {"max_caption_tokens", max_caption_tokens}};
}

GenerationConfig GenerationConfig::from_json(const json& j) {
  GenerationConfig c;
  try {
    c.ddim_steps = j.value("ddim_steps", c.ddim_steps);
    c.guidance_scale = j.value("guidance_scale", c.guidance_scale);
    c.seed = j.value("seed", c.seed);
    c.resolution = j.value("resolution", c.resolution);
    c.backend_caption = j.value("backend_caption", c.backend_caption);
    c.backend_image = j.value("backend_image", c.backend_image);
    c.caption_candidates = j.value("caption_candidates", c.caption_candidates);
    c.max_caption_tokens = j.value("max_caption_tokens", c.max_caption_tokens);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("generation section: ") + e.what());
  }
  c.validate();
  return c;
}

std::vector<std::string> CaptionBackend::candidates(
    const fs::path& image_path, const Image& image,
    const GenerationConfig& config) {
  ++calls_;
  if (reentrant()) return do_candidates(image_path, image, config);
  std::lock_guard lock(mutex_);
  return do_candidates(image_path, image, config);
}

Image ImageBackend::generate(const std::string& prompt,
                             const GenerationConfig& config) {
  ++calls_;
  if (reentrant()) return do_generate(prompt, config);
  std::lock_guard lock(mutex_);
  return do_generate(prompt, config);
}

std::vector<std::string> MockCaptionBackend::do_candidates(
    const fs::path&, const Image& image, const GenerationConfig& config) {
  const std::string base = "mock-caption-" + pixel_hash(image);
  std::vector<std::string> out{base};
  for (std::uint32_t k = 1; k < config.caption_candidates; ++k) {
    out.push_back(base + "-" + std::to_string(k));
  }
  return out;
}

Image MockImageBackend::render(const std::string& prompt, std::int64_t seed,
                               std::uint32_t resolution) {
  constexpr std::uint32_t kGrid = 16;
  std::uint64_t state =
      Fnv1a().field("mock-image").field(prompt).update_u64(
          static_cast<std::uint64_t>(seed)).digest();
  std::uint8_t colors[kGrid][kGrid][3];
  for (auto& row : colors) {
    for (auto& cell : row) {
      const std::uint64_t r = splitmix64(state);
      cell[0] = static_cast<std::uint8_t>(r);
      cell[1] = static_cast<std::uint8_t>(r >> 8);
      cell[2] = static_cast<std::uint8_t>(r >> 16);
    }
  }
  Image img(resolution, resolution);
  for (std::uint32_t y = 0; y < resolution; ++y) {
    const std::uint32_t gy = static_cast<std::uint32_t>(
        std::uint64_t{y} * kGrid / resolution);
    for (std::uint32_t x = 0; x < resolution; ++x) {
      const std::uint32_t gx = static_cast<std::uint32_t>(
          std::uint64_t{x} * kGrid / resolution);
      std::memcpy(img.at(x, y), colors[gy][gx], 3);
    }
  }
  return img;
}

Image MockImageBackend::do_generate(const std::string& prompt,
                                    const GenerationConfig& config) {
  return render(prompt, config.seed, config.resolution);
}

SubprocessCaptionBackend::SubprocessCaptionBackend(
    std::string id, std::vector<std::string> command)
    : id_(std::move(id)), process_(std::move(command)) {}

std::vector<std::string> SubprocessCaptionBackend::do_candidates(
    const fs::path& image_path, const Image&, const GenerationConfig& config) {
  json result = process_.request("caption", image_path.string(), config.to_json());
  std::vector<std::string> out;
  if (result.is_string()) {
    out.push_back(result.get<std::string>());
  } else if (result.is_array()) {
    for (const auto& c : result) {
      if (!c.is_string()) throw ProtocolError("caption candidate is not a string");
      out.push_back(c.get<std::string>());
    }
  } else {
    throw ProtocolError("caption result must be a string or array of strings");
  }
  return out;
}

SubprocessImageBackend::SubprocessImageBackend(std::string id,
                                               std::vector<std::string> command,
                                               fs::path scratch_dir)
    : id_(std::move(id)),
      process_(std::move(command)),
      scratch_dir_(std::move(scratch_dir)) {}

Image SubprocessImageBackend::do_generate(const std::string& prompt,
                                          const GenerationConfig& config) {
  fs::create_directories(scratch_dir_);
  json cfg = config.to_json();
  cfg["output_dir"] = scratch_dir_.string();
  json result = process_.request("image", prompt, std::move(cfg));
  if (!result.is_string()) throw ProtocolError("image result must be a file path");
  const fs::path produced = result.get<std::string>();
  Image img = read_png(produced);
  std::error_code ec;
  fs::remove(produced, ec);
  return img;
}

ArtifactCache::ArtifactCache(fs::path root) : root_(std::move(root)) {}

std::string ArtifactCache::file_stem(const std::string& sample_id) {
  static constexpr char kHex[] = "0123456789ABCDEF";
  std::string out;
  for (std::size_t i = 0; i < sample_id.size(); ++i) {
    const auto c = static_cast<unsigned char>(sample_id[i]);
    const bool safe = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
                      (c >= '0' && c <= '9') || c == '-' || c == '_' ||
                      (c == '.' && i > 0);
    if (safe) {
      out.push_back(static_cast<char>(c));
    } else {
      out.push_back('%');
      out.push_back(kHex[c >> 4]);
      out.push_back(kHex[c & 0xf]);
    }
  }
  return out;
}

fs::path ArtifactCache::dir(const std::string& config_hash) const {
  return root_ / config_hash;
}
fs::path ArtifactCache::caption_path(const std::string& config_hash,
                                     const std::string& sample_id) const {
  return dir(config_hash) / (file_stem(sample_id) + ".caption.txt");
}
fs::path ArtifactCache::image_path(const std::string& config_hash,
                                   const std::string& sample_id) const {
  return dir(config_hash) / (file_stem(sample_id) + ".image.png");
}
fs::path ArtifactCache::ledger_path(const std::string& config_hash) const {
  return dir(config_hash) / "failures.jsonl";
}

std::optional<std::string> ArtifactCache::load_caption(
    const std::string& config_hash, const std::string& sample_id) const {
  std::ifstream in(caption_path(config_hash, sample_id), std::ios::binary);
  if (!in) return std::nullopt;
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool ArtifactCache::has_image(const std::string& config_hash,
                              const std::string& sample_id) const {
  std::error_code ec;
  return fs::is_regular_file(image_path(config_hash, sample_id), ec);
}

bool ArtifactCache::publish(
    const fs::path& final_path,
    const std::function<void(const fs::path&)>& write) {
  fs::create_directories(final_path.parent_path());
  static std::atomic<std::uint64_t> counter{0};
  const fs::path tmp = final_path.string() + ".tmp-" +
                       std::to_string(::getpid()) + "-" +
                       std::to_string(counter++);
  write(tmp);
  std::error_code ec;
  // link() refuses to replace an existing entry: first writer wins.
  fs::create_hard_link(tmp, final_path, ec);
  fs::remove(tmp);
  if (!ec) return true;
  if (ec == std::errc::file_exists) return false;
  throw IoError("cannot publish '" + final_path.string() + "': " + ec.message());
}

bool ArtifactCache::store_caption(const std::string& config_hash,
                                  const std::string& sample_id,
                                  const std::string& caption) {
  return publish(caption_path(config_hash, sample_id), [&](const fs::path& p) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out << caption;
    if (!out) throw IoError("cannot write '" + p.string() + "'");
  });
}

bool ArtifactCache::store_image(const std::string& config_hash,
                                const std::string& sample_id,
                                const Image& image) {
  return publish(image_path(config_hash, sample_id),
                 [&](const fs::path& p) { write_png(image, p); });
}

void ArtifactCache::record_failure(const std::string& config_hash,
                                   const json& entry) {
  std::lock_guard lock(ledger_mutex_);
  fs::create_directories(dir(config_hash));
  std::ofstream out(ledger_path(config_hash), std::ios::binary | std::ios::app);
  out << entry.dump() << '\n';
}

void ArtifactCache::write_config(const GenerationConfig& config) {
  const fs::path path = dir(config.hash()) / "config.json";
  std::error_code ec;
  if (fs::exists(path, ec)) return;
  publish(path, [&](const fs::path& p) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out << config.to_json().dump(2) << '\n';
  });
}

std::string condense_captions(const std::vector<std::string>& candidates,
                              Encoder& text_encoder) {
  if (candidates.empty()) throw GenerationFailed("no caption candidates");
  if (candidates.size() == 1) return candidates.front();
  std::vector<std::vector<float>> vecs;
  vecs.reserve(candidates.size());
  for (const auto& c : candidates) vecs.push_back(text_encoder.encode_text(c));
  std::size_t best = 0;
  double best_score = -1e300;
  for (std::size_t i = 0; i < vecs.size(); ++i) {
    double score = 0.0;
    for (std::size_t j = 0; j < vecs.size(); ++j) {
      if (i != j) score += cosine(vecs[i], vecs[j]);
    }
    if (score > best_score) {
      best_score = score;
      best = i;
    }
  }
  return candidates[best];
}

namespace {

std::string truncate_tokens(const std::string& text, std::uint32_t max_tokens) {
  std::istringstream in(text);
  std::string token, out;
  std::uint32_t n = 0;
  while (n < max_tokens && in >> token) {
    if (!out.empty()) out.push_back(' ');
    out += token;
    ++n;
  }
  return out;
}

Image decode_for_generation(const fs::path& image_path,
                            const std::string& sample_id) {
  try {
    return read_png(image_path);
  } catch (const IoError& e) {
    throw GenerationFailed("sample '" + sample_id + "': " + e.what());
  }
}

std::string caption_from_image(const fs::path& image_path, const Image& image,
                               CaptionBackend& backend,
                               const GenerationConfig& config,
                               Encoder* condense_encoder) {
  std::vector<std::string> raw;
  try {
    raw = backend.candidates(image_path, image, config);
  } catch (const BackendUnavailable&) {
    throw;
  } catch (const std::exception& e) {
    throw GenerationFailed("caption backend '" + backend.id() + "': " + e.what());
  }
  std::vector<std::string> candidates;
  for (const auto& c : raw) {
    auto t = truncate_tokens(c, config.max_caption_tokens);
    if (!t.empty()) candidates.push_back(std::move(t));
  }
  if (candidates.empty()) {
    throw GenerationFailed("caption backend '" + backend.id() +
                           "' returned no usable caption for " +
                           image_path.string());
  }
  if (candidates.size() > 1 && condense_encoder == nullptr) {
    throw BackendUnavailable(
        "condensing multiple caption candidates requires a text encoder");
  }
  return candidates.size() == 1 ? candidates.front()
                                : condense_captions(candidates, *condense_encoder);
}

Image image_from_prompt(const std::string& caption, ImageBackend& backend,
                        const GenerationConfig& config) {
  if (caption.empty()) throw GenerationFailed("empty prompt");
  Image img;
  try {
    img = backend.generate(caption, config);
  } catch (const BackendUnavailable&) {
    throw;
  } catch (const std::exception& e) {
    throw GenerationFailed("image backend '" + backend.id() + "': " + e.what());
  }
  if (img.width != config.resolution || img.height != config.resolution) {
    throw GenerationFailed("image backend '" + backend.id() + "' produced " +
                           std::to_string(img.width) + "x" +
                           std::to_string(img.height) + ", expected " +
                           std::to_string(config.resolution) + "^2");
  }
  return img;
}

}  // namespace

std::string generate_caption(const fs::path& image_path,
                             CaptionBackend& backend,
                             const GenerationConfig& config,
                             Encoder* condense_encoder) {
  Image image = decode_for_generation(image_path, image_path.string());
  return caption_from_image(image_path, image, backend, config, condense_encoder);
}

fs::path generate_image(const std::string& sample_id, const std::string& caption,
                        ImageBackend& backend, const GenerationConfig& config,
                        ArtifactCache& cache, std::uint32_t native_width,
                        std::uint32_t native_height) {
  const std::string hash = config.hash();
  if (cache.has_image(hash, sample_id)) return cache.image_path(hash, sample_id);
  Image img = image_from_prompt(caption, backend, config);
  cache.store_image(hash, sample_id,
                    resize_nearest(img, native_width, native_height));
  return cache.image_path(hash, sample_id);
}

GenerationResult generate_pairs(const std::vector<Sample>& samples,
                                const GenerationConfig& config,
                                const GenerationBackends& backends,
                                ArtifactCache& cache, unsigned workers) {
  config.validate();
  GenerationResult result;
  if (samples.empty()) return result;
  if (!backends.caption || !backends.image) {
    throw BackendUnavailable("caption and image backends must be registered");
  }
  const std::string hash = config.hash();
  cache.write_config(config);

  struct Slot {
    std::optional<SyntheticPair> pair;
    std::vector<GenerationFailure> failures;
    std::size_t hits = 0;
  };
  std::vector<Slot> slots(samples.size());

  auto process = [&](std::size_t i) {
    const Sample& s = samples[i];
    Slot& slot = slots[i];
    std::optional<std::string> caption = cache.load_caption(hash, s.id);
    const bool image_cached = cache.has_image(hash, s.id);
    if (caption) ++slot.hits;
    if (image_cached) ++slot.hits;

    std::optional<Image> original;
    auto decoded = [&]() -> const Image& {
      if (!original) original = decode_for_generation(s.image_path, s.id);
      return *original;
    };
    auto fail = [&](const char* kind, const std::string& message) {
      slot.failures.push_back({s.id, kind, message});
      cache.record_failure(hash, {{"sample_id", s.id},
                                  {"kind", kind},
                                  {"error", message}});
    };

    if (!caption) {
      try {
        auto text = caption_from_image(s.image_path, decoded(), *backends.caption,
                                       config, backends.condense_encoder);
        cache.store_caption(hash, s.id, text);
        caption = cache.load_caption(hash, s.id);
      } catch (const Error& e) {
        fail("caption", e.what());
      }
    }
    if (!image_cached) {
      try {
        const Image& native = decoded();
        Image img = image_from_prompt(s.caption, *backends.image, config);
        cache.store_image(hash, s.id,
                          resize_nearest(img, native.width, native.height));
      } catch (const Error& e) {
        fail("image", e.what());
      }
    }
    if (slot.failures.empty() && caption) {
      slot.pair = SyntheticPair{s.id, *caption, cache.image_path(hash, s.id), hash};
    }
  };

  workers = std::max(1u, workers);
  if (workers == 1) {
    for (std::size_t i = 0; i < samples.size(); ++i) process(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < samples.size(); i = next++) process(i);
      });
    }
    for (auto& t : pool) t.join();
  }

  for (auto& slot : slots) {
    result.cache_hits += slot.hits;
    if (slot.pair) result.pairs.push_back(std::move(*slot.pair));
    for (auto& f : slot.failures) result.failures.push_back(std::move(f));
  }
  if (result.pairs.empty()) {
    throw GenerationFailed("generation failed for all " +
                           std::to_string(samples.size()) + " samples; first: " +
                           result.failures.front().message);
  }
  return result;
}

}  // namespace oocd

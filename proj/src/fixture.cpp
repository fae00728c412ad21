// Copyright 2026 The oocd Authors.
// SPDX-License-Identifier: Apache-2.0

#include "oocd/fixture.hpp"

#include <cmath>
#include <cstdio>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "oocd/binary_io.hpp"
#include "oocd/corpus.hpp"
#include "oocd/encoder.hpp"
#include "oocd/error.hpp"
#include "oocd/generation.hpp"
#include "oocd/image.hpp"
#include "oocd/rng.hpp"
#include "oocd/similarity.hpp"
#include "oocd/store.hpp"

namespace oocd {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kSubjects[] = {"mayor", "crowd", "river", "stadium", "protest",
                                     "harbor", "senator", "storm", "market", "school"};
constexpr const char* kActions[] = {"gathers near", "floods", "opens", "visits",
                                    "closes", "celebrates at", "inspects", "leaves"};

std::vector<double> unit_normal(Rng& rng, std::size_t dim) {
  std::vector<double> v(dim);
  double norm = 0.0;
  for (auto& x : v) {
    x = rng.normal();
    norm += x * x;
  }
  norm = std::sqrt(norm);
  for (auto& x : v) x /= norm;
  return v;
}

// (u, v) unit vectors with cos(u, v) = s.
std::pair<std::vector<float>, std::vector<float>> planted_pair(Rng& rng, std::size_t dim,
                                                               double s) {
  const auto u = unit_normal(rng, dim);
  auto w = unit_normal(rng, dim);
  double dot = 0.0;
  for (std::size_t i = 0; i < dim; ++i) dot += u[i] * w[i];
  double norm = 0.0;
  for (std::size_t i = 0; i < dim; ++i) {
    w[i] -= dot * u[i];
    norm += w[i] * w[i];
  }
  norm = std::sqrt(norm);
  const double c = std::sqrt(1.0 - s * s);
  std::vector<float> uf(dim), vf(dim);
  for (std::size_t i = 0; i < dim; ++i) {
    uf[i] = static_cast<float>(u[i]);
    vf[i] = static_cast<float>(s * u[i] + c * w[i] / norm);
  }
  return {uf, vf};
}

Image random_image(std::uint64_t seed, std::uint32_t size) {
  Rng rng(seed);
  Image img(size, size);
  for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng.uniform_index(256));
  return img;
}

}  // namespace

FixtureInfo write_fixture(const fs::path& dir, const FixtureOptions& options) {
  if (options.samples == 0) throw ConfigError("fixture needs at least one sample");
  const GenerationConfig gen;  // the config file leaves generation at its defaults
  const EncoderSet enc;
  fs::create_directories(dir / "images");
  fs::remove_all(dir / "planted");
  EmbeddingStore store = EmbeddingStore::open(dir / "planted");
  store.ensure_partition(enc.joint, kJointDim);
  store.ensure_partition(enc.text, kTextDim);
  store.ensure_partition(enc.image, kImageDim);

  Rng rng(options.seed ^ 0x6f6f63642d666978ULL);
  std::set<std::string> keys;
  auto claim = [&](const std::string& key) {
    if (!keys.insert(key).second) throw Error("FixtureCollision", "fixture content key collision " + key);
  };

  std::string annotations;
  for (std::size_t i = 0; i < options.samples; ++i) {
    Sample s;
    char id[32];
    std::snprintf(id, sizeof(id), "s%05zu", i);
    s.id = id;
    const std::size_t slot = i % 5;
    s.split = slot < 3 ? Split::kTrain : (slot == 3 ? Split::kVal : Split::kTest);
    s.label = (i / 5) % 2 == 0 ? Label::kPristine : Label::kFalsified;
    s.caption = std::string("The ") + kSubjects[i % 10] + " " + kActions[(i / 10) % 8] +
                " the old town, report " + std::to_string(i + 1);
    s.relative_image_path = "images/" + s.id + ".png";

    const Image original = random_image(options.seed * 1000003ULL + i, options.image_size);
    write_png(original, dir / s.relative_image_path);
    const Image generated =
        resize_nearest(MockImageBackend::render(s.caption, gen.seed, gen.resolution),
                       original.width, original.height);
    const std::string generated_caption = "mock-caption-" + pixel_hash(original);

    const std::string k_image = MockEncoder::image_key(original);
    const std::string k_caption = MockEncoder::text_key(s.caption);
    const std::string k_gen_caption = MockEncoder::text_key(generated_caption);
    const std::string k_gen_image = MockEncoder::image_key(generated);
    for (const auto& k : {k_image, k_caption, k_gen_caption, k_gen_image}) claim(k);

    const bool pristine = s.label == Label::kPristine;
    const double lo = pristine ? options.pristine_low : options.falsified_low;
    const double hi = pristine ? options.pristine_high : options.falsified_high;
    auto [ji, jc] = planted_pair(rng, kJointDim, rng.uniform(lo, hi));
    auto [tc, tg] = planted_pair(rng, kTextDim, rng.uniform(lo, hi));
    auto [ii, ig] = planted_pair(rng, kImageDim, rng.uniform(lo, hi));
    store.put_raw(enc.joint, k_image, 0, ji);
    store.put_raw(enc.joint, k_caption, 0, jc);
    store.put_raw(enc.text, k_caption, 0, tc);
    store.put_raw(enc.text, k_gen_caption, 0, tg);
    store.put_raw(enc.image, k_image, 0, ii);
    store.put_raw(enc.image, k_gen_image, 0, ig);

    annotations += annotation_line(s) + "\n";
  }
  store.flush();
  write_file_bytes(dir / "annotations.jsonl", annotations);

  const json planted = {{"plant_from", "planted"}};
  const json config = {
      {"run_dir", "run"},
      {"seed", 0},
      {"corpus", {{"name", "mock-fixture"}, {"annotations", "annotations.jsonl"},
                  {"image_root", "."}}},
      {"encoders", {{"joint", planted}, {"text", planted}, {"image", planted}}}};
  write_file_bytes(dir / "config.json", config.dump(2) + "\n");

  return {dir / "config.json", dir / "annotations.jsonl", dir / "planted", options.samples};
}

}  // namespace oocd

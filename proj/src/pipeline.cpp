// Copyright 2026 The oocd Authors.
// SPDX-License-Identifier: Apache-2.0

#include "oocd/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <thread>
#include <unordered_set>

#include "oocd/binary_io.hpp"
#include "oocd/embedding.hpp"
#include "oocd/encoder.hpp"
#include "oocd/error.hpp"
#include "oocd/generation.hpp"
#include "oocd/hash.hpp"
#include "oocd/metrics.hpp"
#include "oocd/similarity.hpp"
#include "oocd/store.hpp"

namespace oocd {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(Stage s) noexcept {
  switch (s) {
    case Stage::kPrepare: return "prepare";
    case Stage::kGenerate: return "generate";
    case Stage::kEmbed: return "embed";
    case Stage::kFeatures: return "features";
    case Stage::kTrain: return "train";
    case Stage::kEvaluate: return "evaluate";
    case Stage::kAll: return "all";
  }
  return "all";
}

std::optional<Stage> parse_stage(std::string_view text) noexcept {
  for (auto s : {Stage::kPrepare, Stage::kGenerate, Stage::kEmbed, Stage::kFeatures,
                 Stage::kTrain, Stage::kEvaluate, Stage::kAll}) {
    if (text == to_string(s)) return s;
  }
  return std::nullopt;
}

namespace {

constexpr Split kSplits[] = {Split::kTrain, Split::kVal, Split::kTest};

// Mirrors progress lines to <run>/logs/<stage>.log and the caller's stream.
class StageLog {
 public:
  StageLog(const fs::path& run_dir, Stage stage, std::ostream* echo)
      : prefix_("[" + std::string(to_string(stage)) + "] "), echo_(echo) {
    fs::create_directories(run_dir / "logs");
    file_.open(run_dir / "logs" / (std::string(to_string(stage)) + ".log"),
               std::ios::trunc);
  }

  void line(const std::string& text) {
    file_ << prefix_ << text << '\n';
    file_.flush();
    if (echo_) *echo_ << prefix_ << text << '\n' << std::flush;
  }

 private:
  std::string prefix_;
  std::ostream* echo_;
  std::ofstream file_;
};

std::string dump(const json& j) { return j.dump(2) + "\n"; }

json read_json_file(const fs::path& path) {
  try {
    return json::parse(read_file_bytes(path));
  } catch (const json::exception& e) {
    throw IoError("'" + path.string() + "' is not valid JSON: " + e.what());
  }
}

std::string percent(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f", v);
  return buf;
}

std::string fraction_text(std::size_t failed, std::size_t total) {
  return std::to_string(failed) + "/" + std::to_string(total);
}

std::unique_ptr<Encoder> make_encoder(const EncoderConfig& c, const PipelineConfig& config) {
  if (c.backend == "subprocess") {
    return std::make_unique<SubprocessEncoder>(c.spec, c.command);
  }
  auto mock = std::make_unique<MockEncoder>(c.spec);
  if (c.plant_from) {
    const fs::path dir = config.resolve(*c.plant_from);
    if (!fs::is_directory(dir)) {
      throw ConfigError("plant_from store '" + dir.string() + "' does not exist");
    }
    mock->plant_from(EmbeddingStore::open(dir));
  }
  return mock;
}

fs::path pairs_file(const fs::path& run) { return run / "generation" / "pairs.jsonl"; }
fs::path features_manifest(const fs::path& run) { return run / "features" / "manifest.json"; }

std::map<std::string, SyntheticPair> read_pairs(const fs::path& run) {
  const fs::path file = pairs_file(run);
  std::map<std::string, SyntheticPair> out;
  if (!fs::exists(file)) return out;
  std::istringstream in(read_file_bytes(file));
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const json j = json::parse(line);
    SyntheticPair p;
    p.sample_id = j.at("sample_id").get<std::string>();
    p.generated_caption = j.at("generated_caption").get<std::string>();
    fs::path img = j.at("generated_image").get<std::string>();
    p.generated_image_path = img.is_absolute() ? img : run / img;
    p.config_hash = j.at("config_hash").get<std::string>();
    out.emplace(p.sample_id, std::move(p));
  }
  return out;
}

std::string relative_to(const fs::path& path, const fs::path& base) {
  const fs::path rel = fs::absolute(path).lexically_normal().lexically_relative(
      fs::absolute(base).lexically_normal());
  if (rel.empty() || *rel.begin() == "..") return fs::absolute(path).string();
  return rel.generic_string();
}

std::string model_dir_name(const ModelPlan& p) { return "models/" + p.name; }

// Identifies a model's inputs: the resolved spec, its features and the
// projection target. Unchanged key means the stored model is reused.
std::string model_cache_key(const ModelPlan& plan, const std::string& train_fp,
                            const std::string& val_fp) {
  Fnv1a h;
  h.field("oocd-model-v1")
      .field(plan.spec.with_defaults(plan.mode).to_json().dump())
      .field(to_string(plan.mode))
      .field(plan.channels.to_string())
      .field(train_fp)
      .field(val_fp)
      .update_u64(static_cast<std::uint64_t>(plan.reduce_to.value_or(0)));
  return h.hex();
}

}  // namespace

Pipeline::Pipeline(PipelineConfig config, RunOptions options)
    : config_(std::move(config)), options_(std::move(options)) {
  if (options_.seed) config_.seed = *options_.seed;
  if (options_.limit) {
    if (*options_.limit == 0) throw ConfigError("--limit must be positive");
    config_.corpus.limit = *options_.limit;
  }
}

Pipeline::~Pipeline() = default;

void Pipeline::run(Stage stage) {
  switch (stage) {
    case Stage::kPrepare: prepare(); break;
    case Stage::kGenerate: generate(); break;
    case Stage::kEmbed: embed(); break;
    case Stage::kFeatures: features(); break;
    case Stage::kTrain: train(); break;
    case Stage::kEvaluate: evaluate(); break;
    case Stage::kAll:
      prepare();
      generate();
      embed();
      features();
      train();
      evaluate();
      break;
  }
}

void Pipeline::record_stage(Stage stage, const json& summary) const {
  const fs::path file = run_dir() / "manifest.json";
  json m = json::object();
  if (fs::exists(file)) {
    try {
      m = read_json_file(file);
    } catch (const IoError&) {
      m = json::object();
    }
  }
  m["format"] = "oocd-run";
  m["config"] = config_.to_json();
  m["config_fingerprint"] = config_.fingerprint();
  m["stages"][std::string(to_string(stage))] = summary;
  write_file_bytes(file, dump(m));
}

// ------------------------------------------------------------- prepare

void Pipeline::prepare() {
  const fs::path run = run_dir();
  StageLog log(run, Stage::kPrepare, options_.log);
  LoadOptions lo;
  lo.strict = config_.corpus.strict;
  lo.check_images = config_.corpus.check_images;
  const fs::path annotations = config_.resolve(config_.corpus.annotations);
  const fs::path image_root = config_.resolve(config_.corpus.image_root);
  if (!fs::exists(annotations)) {
    throw ConfigError("annotation file '" + annotations.string() + "' does not exist");
  }
  LoadResult loaded = load_annotations(annotations, image_root, lo);
  std::vector<Sample> samples = std::move(loaded.samples);
  const std::size_t loaded_count = samples.size();
  if (config_.corpus.limit && *config_.corpus.limit < samples.size()) {
    samples = subsample(samples, *config_.corpus.limit, config_.seed);
  }

  const fs::path dir = run / "corpus";
  fs::create_directories(dir);
  std::string text;
  for (const auto& s : samples) text += annotation_line(s) + "\n";
  write_file_bytes(dir / "annotations.jsonl", text);
  write_file_bytes(dir / "issues.txt", loaded.summary());

  const CorpusManifest m = summarize(samples, config_.corpus.name, image_root);
  json counts = json::object(), balance = json::object();
  for (auto sp : kSplits) {
    counts[std::string(to_string(sp))] = m.counts[static_cast<std::size_t>(sp)];
    balance[std::string(to_string(sp))] = m.class_balance[static_cast<std::size_t>(sp)];
  }
  const json manifest = {{"name", m.name},
                         {"root", m.root.generic_string()},
                         {"annotations", annotations.generic_string()},
                         {"loaded", loaded_count},
                         {"issues", loaded.issues.size()},
                         {"counts", counts},
                         {"class_balance", balance}};
  write_file_bytes(dir / "manifest.json", dump(manifest));

  log.line(std::to_string(samples.size()) + " samples (train " + std::to_string(m.counts[0]) +
           ", val " + std::to_string(m.counts[1]) + ", test " + std::to_string(m.counts[2]) +
           "), " + std::to_string(loaded.issues.size()) + " validation issues");
  for (const auto& issue : loaded.issues) {
    log.line("LINE " + std::to_string(issue.line) + ": " + issue.code + ": " + issue.detail);
  }
  record_stage(Stage::kPrepare, {{"samples", samples.size()},
                                 {"issues", loaded.issues.size()},
                                 {"outputs", {"corpus/annotations.jsonl", "corpus/manifest.json",
                                              "corpus/issues.txt"}}});
}

std::vector<Sample> Pipeline::prepared_samples() const {
  const fs::path file = run_dir() / "corpus" / "annotations.jsonl";
  if (!fs::exists(file)) {
    throw MissingArtifact("'" + file.string() + "' is missing; run the prepare stage first");
  }
  LoadOptions lo;
  lo.strict = true;
  lo.check_images = false;
  return load_annotations(file, config_.resolve(config_.corpus.image_root), lo).samples;
}

// ------------------------------------------------------------ generate

void Pipeline::generate() {
  const fs::path run = run_dir();
  std::vector<Sample> corpus = prepared_samples();
  StageLog log(run, Stage::kGenerate, options_.log);
  std::vector<Sample> samples =
      options_.split ? filter_split(corpus, *options_.split) : corpus;

  const auto& gen = config_.generation;
  std::unique_ptr<CaptionBackend> captioner;
  std::unique_ptr<ImageBackend> painter;
  if (gen.model.backend_caption == "mock-caption") {
    captioner = std::make_unique<MockCaptionBackend>();
  } else {
    captioner = std::make_unique<SubprocessCaptionBackend>(gen.model.backend_caption,
                                                           gen.caption_command);
  }
  const fs::path cache_root =
      gen.cache_dir ? config_.resolve(*gen.cache_dir) : run / "cache";
  if (gen.model.backend_image == "mock-image") {
    painter = std::make_unique<MockImageBackend>();
  } else {
    painter = std::make_unique<SubprocessImageBackend>(gen.model.backend_image,
                                                       gen.image_command,
                                                       cache_root / ".scratch");
  }
  std::unique_ptr<Encoder> condense;
  if (gen.model.caption_candidates > 1) condense = make_encoder(config_.encoders.text, config_);

  ArtifactCache cache(cache_root);
  GenerationResult result;
  try {
    result = generate_pairs(samples, gen.model,
                            {captioner.get(), painter.get(), condense.get()}, cache,
                            gen.workers);
  } catch (const GenerationFailed& e) {
    counters_.caption_calls += captioner->calls();
    counters_.image_calls += painter->calls();
    log.line(e.what());
    throw TooManyFailures(std::string("generation: ") + e.what());
  }
  counters_.caption_calls += captioner->calls();
  counters_.image_calls += painter->calls();
  counters_.generation_cache_hits += result.cache_hits;
  if (condense) counters_.encoder_invocations += condense->invocations();

  // Merge with pairs of samples outside this invocation (other splits).
  std::map<std::string, SyntheticPair> pairs = read_pairs(run);
  std::set<std::string> processed;
  for (const auto& s : samples) {
    processed.insert(s.id);
    pairs.erase(s.id);
  }
  for (const auto& p : result.pairs) pairs[p.sample_id] = p;

  const fs::path dir = run / "generation";
  fs::create_directories(dir);
  std::string lines;
  for (const auto& s : corpus) {
    auto it = pairs.find(s.id);
    if (it == pairs.end()) continue;
    const SyntheticPair& p = it->second;
    lines += json({{"sample_id", p.sample_id},
                   {"generated_caption", p.generated_caption},
                   {"generated_image", relative_to(p.generated_image_path, run)},
                   {"config_hash", p.config_hash}})
                 .dump() +
             "\n";
  }
  write_file_bytes(pairs_file(run), lines);
  std::string failures;
  for (const auto& f : result.failures) {
    failures += json({{"sample_id", f.sample_id}, {"kind", f.kind}, {"error", f.message}})
                    .dump() +
                "\n";
  }
  write_file_bytes(dir / "failures.jsonl", failures);

  const std::size_t failed = samples.size() - result.pairs.size();
  log.line(std::to_string(result.pairs.size()) + " pairs, " +
           std::to_string(result.cache_hits) + " cache hits, " +
           std::to_string(captioner->calls()) + " caption calls, " +
           std::to_string(painter->calls()) + " image calls, " +
           std::to_string(failed) + " failed samples (config " + gen.model.hash() + ")");
  for (const auto& f : result.failures) {
    log.line("failure " + f.sample_id + " " + f.kind + ": " + f.message);
  }
  record_stage(Stage::kGenerate, {{"pairs", pairs.size()},
                                  {"failed_samples", failed},
                                  {"config_hash", gen.model.hash()},
                                  {"outputs", {"generation/pairs.jsonl",
                                               "generation/failures.jsonl"}}});
  if (!samples.empty() &&
      static_cast<double>(failed) > gen.max_failure_fraction * static_cast<double>(samples.size())) {
    throw TooManyFailures("generation failed for " + fraction_text(failed, samples.size()) +
                          " samples, above the allowed fraction " +
                          std::to_string(gen.max_failure_fraction));
  }
}

// --------------------------------------------------------------- embed

EmbeddingStore& Pipeline::embeddings(bool must_exist) const {
  if (!store_) {
    const fs::path dir = run_dir() / "embeddings";
    if (must_exist && !fs::exists(dir / "manifest.json")) {
      throw MissingArtifact("embedding store '" + dir.string() +
                            "' is missing; run the embed stage first");
    }
    store_ = std::make_unique<EmbeddingStore>(EmbeddingStore::open(dir));
  }
  return *store_;
}

void Pipeline::embed() {
  const fs::path run = run_dir();
  std::vector<Sample> corpus = prepared_samples();
  if (!fs::exists(pairs_file(run))) {
    throw MissingArtifact("'" + pairs_file(run).string() +
                          "' is missing; run the generate stage first");
  }
  StageLog log(run, Stage::kEmbed, options_.log);
  const auto pairs_by_id = read_pairs(run);
  std::vector<Sample> samples;
  std::vector<SyntheticPair> pairs;
  std::size_t without_pair = 0;
  for (const auto& s : corpus) {
    if (options_.split && s.split != *options_.split) continue;
    auto it = pairs_by_id.find(s.id);
    if (it == pairs_by_id.end()) {
      ++without_pair;
      continue;
    }
    samples.push_back(s);
    pairs.push_back(it->second);
  }

  auto joint = make_encoder(config_.encoders.joint, config_);
  auto text = make_encoder(config_.encoders.text, config_);
  auto image = make_encoder(config_.encoders.image, config_);
  EmbeddingStore& store = embeddings(false);
  EmbedResult result;
  try {
    result = embed_corpus(samples, pairs, {joint.get(), text.get(), image.get()}, store);
  } catch (const EncoderFailure& e) {
    counters_.encoder_invocations +=
        joint->invocations() + text->invocations() + image->invocations();
    log.line(e.what());
    throw TooManyFailures(std::string("embedding: ") + e.what());
  }
  const std::uint64_t calls = joint->invocations() + text->invocations() + image->invocations();
  counters_.encoder_invocations += calls;
  counters_.embedding_records_skipped += result.records_skipped;

  std::string failures;
  for (const auto& f : result.failures) {
    failures += json({{"sample_id", f.sample_id}, {"error", f.message}}).dump() + "\n";
  }
  fs::create_directories(run / "embeddings");
  write_file_bytes(run / "embeddings" / "failures.jsonl", failures);

  log.line(std::to_string(result.records_written) + " records written, " +
           std::to_string(result.records_skipped) + " already present, " +
           std::to_string(calls) + " encoder calls, " +
           std::to_string(result.failures.size()) + " failed samples, " +
           std::to_string(without_pair) + " samples without a synthetic pair");
  for (const auto& f : result.failures) log.line("failure " + f.sample_id + ": " + f.message);
  record_stage(Stage::kEmbed, {{"records", store.size()},
                               {"failed_samples", result.failures.size()},
                               {"samples_without_pair", without_pair},
                               {"outputs", {"embeddings/manifest.json",
                                            "embeddings/failures.jsonl"}}});
  const double limit = config_.generation.max_failure_fraction;
  if (!samples.empty() && static_cast<double>(result.failures.size()) >
                              limit * static_cast<double>(samples.size())) {
    throw TooManyFailures("embedding failed for " +
                          fraction_text(result.failures.size(), samples.size()) +
                          " samples, above the allowed fraction " + std::to_string(limit));
  }
}

// ------------------------------------------------------------ features

std::vector<std::string> Pipeline::usable_ids() const {
  const fs::path file = features_manifest(run_dir());
  if (!fs::exists(file)) {
    throw MissingArtifact("'" + file.string() + "' is missing; run the features stage first");
  }
  return read_json_file(file).at("usable").get<std::vector<std::string>>();
}

std::vector<FeatureVector> Pipeline::feature_rows(FeatureMode mode, ChannelSet channels,
                                                  Split split) const {
  const auto ids = usable_ids();
  const std::unordered_set<std::string> usable(ids.begin(), ids.end());
  const EmbeddingStore& store = embeddings(true);
  const EncoderSet enc = config_.encoders.ids();
  std::vector<FeatureVector> out;
  std::vector<SimilarityTriple> triples;
  std::vector<Label> labels;
  for (const auto& s : prepared_samples()) {
    if (s.split != split || !usable.count(s.id)) continue;
    if (mode == FeatureMode::kSimilarity) {
      triples.push_back(similarity_triple(store, s.id, enc));
      labels.push_back(s.label);
    } else {
      FeatureVector f = assemble_feature_map(store, s.id, channels, enc);
      f.label = s.label;
      out.push_back(std::move(f));
    }
  }
  if (mode == FeatureMode::kSimilarity) {
    return assemble_similarity_features(triples, channels, &labels);
  }
  return out;
}

void Pipeline::features() {
  const fs::path run = run_dir();
  const std::vector<Sample> corpus = prepared_samples();
  EmbeddingStore& store = embeddings(true);
  StageLog log(run, Stage::kFeatures, options_.log);
  const EncoderSet enc = config_.encoders.ids();

  std::vector<std::string> usable;
  std::vector<SimilarityTriple> triples;
  std::vector<Label> labels;
  for (const auto& s : corpus) {
    bool complete = true;
    for (auto [artifact, id] : {std::pair{Artifact::kImage, enc.joint},
                                {Artifact::kCaption, enc.joint},
                                {Artifact::kCaption, enc.text},
                                {Artifact::kGeneratedCaption, enc.text},
                                {Artifact::kImage, enc.image},
                                {Artifact::kGeneratedImage, enc.image}}) {
      complete = complete && store.contains(s.id, artifact, id);
    }
    if (!complete) continue;
    usable.push_back(s.id);
    triples.push_back(similarity_triple(store, s.id, enc));
    labels.push_back(s.label);
  }

  const fs::path dir = run / "features";
  fs::create_directories(dir);
  // Rows are recomputed through feature_rows, which reads the usable list.
  write_file_bytes(features_manifest(run), dump({{"usable", usable}}));
  write_file_bytes(dir / "similarity_triples.csv", triples_csv(triples, labels));

  json similarity = json::object(), feature_map = json::object();
  for (const auto& g : config_.features.similarity_groups) {
    const fs::path gdir = dir / "similarity" / g.to_string();
    fs::create_directories(gdir);
    for (auto sp : kSplits) {
      const auto rows = feature_rows(FeatureMode::kSimilarity, g, sp);
      write_file_bytes(gdir / (std::string(to_string(sp)) + ".csv"), features_csv(rows));
      similarity[g.to_string()][std::string(to_string(sp))] = {
          {"rows", rows.size()}, {"fingerprint", fingerprint(rows)}};
    }
  }

  std::vector<ChannelSet> map_groups = config_.features.feature_map_groups;
  for (const auto& g : config_.features.reduced_groups) {
    if (std::find(map_groups.begin(), map_groups.end(), g) == map_groups.end()) {
      map_groups.push_back(g);
    }
  }
  const fs::path maps_dir = dir / "feature_maps";
  fs::remove_all(maps_dir);
  {
    EmbeddingStore maps = EmbeddingStore::open(maps_dir);
    for (const auto& g : map_groups) {
      for (auto sp : kSplits) {
        const auto rows = feature_rows(FeatureMode::kFeatureMap, g, sp);
        export_feature_map(rows, maps);
        feature_map[g.to_string()][std::string(to_string(sp))] = {
            {"rows", rows.size()}, {"fingerprint", fingerprint(rows)}};
      }
    }
    maps.flush();
  }

  write_file_bytes(features_manifest(run), dump({{"usable", usable},
                                                 {"dropped", corpus.size() - usable.size()},
                                                 {"similarity", similarity},
                                                 {"feature_map", feature_map}}));
  log.line(std::to_string(usable.size()) + " usable samples, " +
           std::to_string(corpus.size() - usable.size()) + " without all six embeddings");
  record_stage(Stage::kFeatures,
               {{"usable", usable.size()},
                {"outputs", {"features/manifest.json", "features/similarity_triples.csv",
                             "features/similarity", "features/feature_maps"}}});
}

// --------------------------------------------------------------- train

std::vector<ModelPlan> Pipeline::model_plan() const {
  std::vector<ModelPlan> plan;
  const auto& cls = config_.classifiers;
  auto add = [&](ClassifierKind k, FeatureMode mode, ChannelSet g,
                 std::optional<Eigen::Index> reduce) {
    std::string name = std::string(to_string(mode)) + "-" + g.to_string();
    if (reduce) name += "-pca" + std::to_string(*reduce);
    name += "-" + std::string(to_string(k));
    plan.push_back({name, config_.classifier_spec(k), mode, g, reduce});
  };
  for (const auto& g : config_.features.similarity_groups) {
    for (auto k : cls.kinds) add(k, FeatureMode::kSimilarity, g, std::nullopt);
    if (cls.threshold_baseline) {
      add(ClassifierKind::kThreshold, FeatureMode::kSimilarity, g, std::nullopt);
    }
  }
  for (const auto& g : config_.features.feature_map_groups) {
    for (auto k : cls.kinds) add(k, FeatureMode::kFeatureMap, g, std::nullopt);
  }
  for (const auto& g : config_.features.reduced_groups) {
    for (auto k : cls.kinds) add(k, FeatureMode::kFeatureMap, g, config_.features.reduce_to);
  }
  return plan;
}

void Pipeline::train() {
  const fs::path run = run_dir();
  const fs::path manifest_file = features_manifest(run);
  if (!fs::exists(manifest_file)) {
    throw MissingArtifact("'" + manifest_file.string() +
                          "' is missing; run the features stage first");
  }
  const json fmanifest = read_json_file(manifest_file);
  StageLog log(run, Stage::kTrain, options_.log);

  // Rows per (mode, group, split), checked against the features stage.
  std::map<std::string, std::vector<FeatureVector>> rows_cache;
  auto rows_for = [&](FeatureMode mode, ChannelSet g, Split sp) -> const std::vector<FeatureVector>& {
    const std::string key = std::string(to_string(mode)) + "/" + g.to_string() + "/" +
                            std::string(to_string(sp));
    auto it = rows_cache.find(key);
    if (it != rows_cache.end()) return it->second;
    auto rows = feature_rows(mode, g, sp);
    const json* entry = nullptr;
    const std::string section(to_string(mode));
    if (fmanifest.contains(section) && fmanifest[section].contains(g.to_string())) {
      entry = &fmanifest[section][g.to_string()][std::string(to_string(sp))];
    }
    if (!entry) {
      throw MissingArtifact("features for " + key + " are missing; rerun the features stage");
    }
    if (entry->at("fingerprint").get<std::string>() != fingerprint(rows)) {
      throw MissingArtifact("features for " + key +
                            " are stale relative to the embedding store; rerun the features stage");
    }
    return rows_cache.emplace(key, std::move(rows)).first->second;
  };

  // Reuse decisions and feature rows are settled up front; only the fits
  // run concurrently. Saving and logging follow plan order.
  struct Job {
    const ModelPlan* plan;
    const std::vector<FeatureVector>* train_rows;
    const std::vector<FeatureVector>* val_rows;
    std::string key;
    fs::path dir;
    std::optional<TrainedModel> model;
    std::exception_ptr error;
  };
  const auto plans = model_plan();
  std::vector<Job> jobs;
  std::vector<bool> reused;
  json index = json::array();
  for (const ModelPlan& plan : plans) {
    const auto& tr = rows_for(plan.mode, plan.channels, Split::kTrain);
    const auto& va = rows_for(plan.mode, plan.channels, Split::kVal);
    const std::string key = model_cache_key(plan, fingerprint(tr), fingerprint(va));
    const fs::path dir = run / model_dir_name(plan);
    index.push_back({{"name", plan.name}, {"dir", model_dir_name(plan)}, {"cache_key", key}});

    bool up_to_date = false;
    if (fs::exists(dir / "manifest.json") && fs::exists(dir / "params.bin") &&
        fs::exists(dir / "spec.json")) {
      try {
        up_to_date = read_json_file(dir / "manifest.json").value("cache_key", "") == key;
      } catch (const IoError&) {
      }
    }
    reused.push_back(up_to_date);
    if (!up_to_date) jobs.push_back({&plan, &tr, &va, key, dir, std::nullopt, nullptr});
  }

  unsigned workers = config_.classifiers.workers;
  if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
  workers = std::min<unsigned>(workers, static_cast<unsigned>(std::max<std::size_t>(jobs.size(), 1)));
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      Job& job = jobs[i];
      try {
        TrainOptions topts;
        topts.reduce_to = job.plan->reduce_to;
        job.model = oocd::train(job.plan->spec, *job.train_rows, *job.val_rows, topts);
      } catch (...) {
        job.error = std::current_exception();
      }
    }
  };
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < workers; ++t) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }

  std::size_t next_job = 0;
  for (std::size_t p = 0; p < plans.size(); ++p) {
    const ModelPlan& plan = plans[p];
    if (reused[p]) {
      ++counters_.models_reused;
      log.line(plan.name + ": up to date");
      continue;
    }
    Job& job = jobs[next_job++];
    if (job.error) std::rethrow_exception(job.error);
    TrainedModel& model = *job.model;
    model.manifest["cache_key"] = job.key;
    model.manifest["name"] = plan.name;
    fs::create_directories(job.dir);
    fs::remove(job.dir / "manifest.json");  // a model without a manifest is never reused
    save_model(model, job.dir);
    ++counters_.models_trained;

    std::string line = plan.name + ": trained";
    const json& val = model.manifest["validation"];
    if (val.contains("accuracy") && val["accuracy"].is_number()) {
      line += ", val acc " + percent(val["accuracy"].get<double>());
    }
    if (val.contains("auc") && val["auc"].is_number()) {
      line += ", val auc " + percent(val["auc"].get<double>());
    }
    log.line(line);
    if (model.manifest["reduction"].is_object()) {
      for (const auto& w : model.manifest["reduction"]["warnings"]) {
        log.line(plan.name + ": warning: " + w.get<std::string>());
      }
    }
  }
  fs::create_directories(run / "models");
  write_file_bytes(run / "models" / "index.json", dump(index));
  log.line(std::to_string(counters_.models_trained) + " trained, " +
           std::to_string(counters_.models_reused) + " reused");
  record_stage(Stage::kTrain, {{"models", index.size()}, {"outputs", {"models/index.json"}}});
}

// ------------------------------------------------------------ evaluate

std::vector<EvaluationReport> Pipeline::evaluate() {
  const fs::path run = run_dir();
  const auto plans = model_plan();
  // Dependency check before any work, naming the first missing model.
  for (const auto& plan : plans) {
    const fs::path dir = run / model_dir_name(plan);
    if (!fs::exists(dir / "spec.json") || !fs::exists(dir / "params.bin")) {
      throw MissingArtifact("model '" + model_dir_name(plan) + "' is missing under '" +
                            run.string() + "'; run the train stage first");
    }
  }
  StageLog log(run, Stage::kEvaluate, options_.log);
  std::vector<Split> splits = config_.evaluation.splits;
  if (options_.split) splits = {*options_.split};

  std::vector<TrainedModel> models;
  models.reserve(plans.size());
  for (const auto& plan : plans) models.push_back(load_model(run / model_dir_name(plan)));

  std::vector<EvaluationReport> reports;
  json written = json::array();
  fs::create_directories(run / "reports");
  for (Split sp : splits) {
    EvaluationReport report;
    report.run_id = config_.corpus.name + "-" + config_.fingerprint();
    report.split = sp;
    report.config_fingerprint = config_.fingerprint();
    std::map<std::string, std::vector<FeatureVector>> rows_cache;
    for (std::size_t i = 0; i < plans.size(); ++i) {
      const ModelPlan& plan = plans[i];
      const std::string key = std::string(to_string(plan.mode)) + "/" + plan.channels.to_string();
      auto it = rows_cache.find(key);
      if (it == rows_cache.end()) {
        it = rows_cache.emplace(key, feature_rows(plan.mode, plan.channels, sp)).first;
      }
      const auto& rows = it->second;
      if (rows.empty()) break;
      report.samples = rows.size();
      const auto preds = predict(models[i], rows);
      std::vector<Label> pred_labels, truth;
      std::vector<double> scores;
      for (std::size_t r = 0; r < rows.size(); ++r) {
        pred_labels.push_back(preds[r].label);
        scores.push_back(preds[r].score);
        truth.push_back(*rows[r].label);
      }
      ReportRow row;
      row.kind = plan.spec.kind;
      row.mode = plan.mode;
      row.channels = plan.channels;
      if (models[i].reduction) row.reduced_to = models[i].reduction->output_dim();
      row.accuracy = accuracy(pred_labels, truth);
      const bool both = std::count(truth.begin(), truth.end(), Label::kFalsified) > 0 &&
                        std::count(truth.begin(), truth.end(), Label::kPristine) > 0;
      if (both) row.auc = auc(scores, truth);
      row.model = model_dir_name(plan);
      report.rows.push_back(row);
    }
    if (report.rows.empty()) {
      log.line(std::string(to_string(sp)) + ": no usable samples, skipped");
      continue;
    }
    for (auto f : config_.evaluation.formats) {
      const std::string name =
          "reports/" + std::string(to_string(sp)) + "." + std::string(file_extension(f));
      write_file_bytes(run / name, render_report(report, f));
      written.push_back(name);
    }
    log.line(std::string(to_string(sp)) + ": " + std::to_string(report.rows.size()) +
             " rows over " + std::to_string(report.samples) + " samples");
    reports.push_back(std::move(report));
  }
  if (reports.empty()) throw EmptyInput("no split had usable samples to evaluate");
  record_stage(Stage::kEvaluate, {{"outputs", written}});
  return reports;
}

// ---------------------------------------------------------------- errors

int exit_code_for(const std::exception& e) noexcept {
  if (dynamic_cast<const ConfigError*>(&e)) return 2;
  if (dynamic_cast<const MissingArtifact*>(&e)) return 3;
  if (dynamic_cast<const TooManyFailures*>(&e)) return 4;
  return 1;
}

json error_json(const std::exception& e) {
  const auto* err = dynamic_cast<const Error*>(&e);
  return {{"error", err ? err->code() : std::string("InternalError")},
          {"exit_code", exit_code_for(e)},
          {"message", e.what()}};
}

}  // namespace oocd

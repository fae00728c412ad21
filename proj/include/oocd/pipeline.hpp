// Copyright 2026 The oocd Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <exception>
#include <filesystem>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "oocd/classifier.hpp"
#include "oocd/config.hpp"
#include "oocd/corpus.hpp"
#include "oocd/features.hpp"
#include "oocd/report.hpp"

namespace oocd {

class EmbeddingStore;

enum class Stage : std::uint8_t { kPrepare, kGenerate, kEmbed, kFeatures, kTrain, kEvaluate, kAll };

std::string_view to_string(Stage s) noexcept;
std::optional<Stage> parse_stage(std::string_view text) noexcept;

struct RunOptions {
  std::optional<Split> split;          // restricts generate, embed and evaluate
  std::optional<std::size_t> limit;    // overrides corpus.limit
  std::optional<std::uint64_t> seed;   // overrides the global seed
  std::ostream* log = nullptr;         // progress lines, also kept in <run>/logs
};

// Work done by backends during this Pipeline's lifetime.
struct PipelineCounters {
  std::uint64_t caption_calls = 0;
  std::uint64_t image_calls = 0;
  std::uint64_t encoder_invocations = 0;
  std::uint64_t generation_cache_hits = 0;
  std::uint64_t embedding_records_skipped = 0;
  std::uint64_t models_trained = 0;
  std::uint64_t models_reused = 0;
};

// One model the train stage produces and the evaluate stage reads.
struct ModelPlan {
  std::string name;  // directory under <run>/models
  ClassifierSpec spec;
  FeatureMode mode = FeatureMode::kSimilarity;
  ChannelSet channels;
  std::optional<Eigen::Index> reduce_to;
};

// Run directory layout:
//   corpus/      annotations.jsonl, manifest.json, issues.txt
//   cache/       generated artifacts (unless generation.cache_dir is set)
//   generation/  pairs.jsonl, failures.jsonl
//   embeddings/  embedding store
//   features/    similarity_triples.csv, similarity/<group>/<split>.csv,
//                feature_maps/ (embedding-store format), manifest.json
//   models/      one directory per ModelPlan
//   reports/     <split>.md|csv|json
//   logs/        <stage>.log
//   manifest.json
//
// Every stage is idempotent: cached artifacts, present embeddings and models
// trained on identical inputs are reused without calling a backend.
class Pipeline {
 public:
  explicit Pipeline(PipelineConfig config, RunOptions options = {});
  ~Pipeline();
  Pipeline(const Pipeline&) = delete;
  Pipeline& operator=(const Pipeline&) = delete;

  const PipelineConfig& config() const noexcept { return config_; }
  const PipelineCounters& counters() const noexcept { return counters_; }
  std::filesystem::path run_dir() const { return config_.run_path(); }

  // Runs one stage, or every stage in order for Stage::kAll. Throws
  // MissingArtifact when an earlier stage's output is absent and
  // TooManyFailures when a stage's failure fraction exceeds the limit.
  void run(Stage stage);

  void prepare();
  void generate();
  void embed();
  void features();
  void train();
  std::vector<EvaluationReport> evaluate();

  std::vector<ModelPlan> model_plan() const;

  // Feature rows of one split, recomputed from the embedding store for the
  // samples the features stage found usable. Labels attached.
  std::vector<FeatureVector> feature_rows(FeatureMode mode, ChannelSet channels,
                                          Split split) const;

 private:
  std::vector<Sample> prepared_samples() const;
  // The run's embedding store, opened on first use.
  EmbeddingStore& embeddings(bool must_exist) const;
  std::vector<std::string> usable_ids() const;
  void record_stage(Stage stage, const nlohmann::json& summary) const;

  PipelineConfig config_;
  RunOptions options_;
  PipelineCounters counters_;
  mutable std::unique_ptr<EmbeddingStore> store_;
};

// Exit status for the CLI: 2 config error, 3 missing dependency artifact,
// 4 too many per-sample failures, 1 anything else.
int exit_code_for(const std::exception& e) noexcept;
// {"error": code, "exit_code": n, "message": text}
nlohmann::json error_json(const std::exception& e);

}  // namespace oocd

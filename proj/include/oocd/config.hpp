// Copyright 2026 The oocd Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "oocd/classifier.hpp"
#include "oocd/corpus.hpp"
#include "oocd/encoder.hpp"
#include "oocd/features.hpp"
#include "oocd/generation.hpp"
#include "oocd/report.hpp"
#include "oocd/similarity.hpp"

namespace oocd {

struct CorpusConfig {
  std::string name = "corpus";
  std::string annotations = "annotations.jsonl";
  std::string image_root = ".";
  bool strict = false;
  bool check_images = true;
  std::optional<std::size_t> limit;  // stratified subsample size
};

struct GenerationStageConfig {
  GenerationConfig model;
  std::vector<std::string> caption_command;  // adapter for non-mock captioners
  std::vector<std::string> image_command;    // adapter for non-mock generators
  std::optional<std::string> cache_dir;      // default <run_dir>/cache
  unsigned workers = 1;
  // Stage exits with status 4 when more than this fraction of samples fail.
  double max_failure_fraction = 0.05;
};

struct EncoderConfig {
  std::string id;
  std::string backend = "mock";  // "mock" | "subprocess"
  std::vector<std::string> command;
  std::optional<std::string> plant_from;  // mock only: store dir of planted vectors
  EncoderSpec spec;                       // resolved modality and dim
};

struct EncodersConfig {
  EncoderConfig joint, text, image;
  EncoderSet ids() const { return {joint.id, text.id, image.id}; }
};

struct FeaturesConfig {
  std::vector<ChannelSet> similarity_groups;
  std::vector<ChannelSet> feature_map_groups;
  std::vector<ChannelSet> reduced_groups;  // feature-map groups also run projected
  Eigen::Index reduce_to = 256;
};

struct ClassifiersConfig {
  std::vector<ClassifierKind> kinds;
  // Per-kind overrides keyed by kind name.
  nlohmann::json hyperparameters = nlohmann::json::object();
  bool threshold_baseline = true;
  // Models fitted concurrently in the train stage; 0 uses every core.
  unsigned workers = 0;
};

struct EvaluationConfig {
  std::vector<Split> splits = {Split::kVal, Split::kTest};
  std::vector<ReportFormat> formats = {ReportFormat::kMarkdown, ReportFormat::kCsv,
                                       ReportFormat::kJson};
};

struct PipelineConfig {
  std::string run_dir = "run";
  std::uint64_t seed = 0;
  CorpusConfig corpus;
  GenerationStageConfig generation;
  EncodersConfig encoders;
  FeaturesConfig features;
  ClassifiersConfig classifiers;
  EvaluationConfig evaluation;
  // Directory relative paths are resolved against (the config file's).
  std::filesystem::path base_dir;

  // Throws ConfigError on unknown keys, wrong types or invalid values.
  static PipelineConfig from_json(const nlohmann::json& j,
                                  const std::filesystem::path& base_dir);
  static PipelineConfig load(const std::filesystem::path& file);

  // Every setting, defaults included.
  nlohmann::json to_json() const;
  // 16 hex digits over the materialized config.
  std::string fingerprint() const;

  std::filesystem::path resolve(const std::string& path) const;
  std::filesystem::path run_path() const { return resolve(run_dir); }

  ClassifierSpec classifier_spec(ClassifierKind kind) const;
};

}  // namespace oocd

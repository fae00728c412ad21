// Copyright 2026 The oocd Authors.
// SPDX-License-Identifier: Apache-2.0

// oocd: runs the detection pipeline stages from a JSON config.

#include <array>
#include <iostream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "oocd/config.hpp"
#include "oocd/corpus.hpp"
#include "oocd/error.hpp"
#include "oocd/fixture.hpp"
#include "oocd/pipeline.hpp"
#include "oocd/report.hpp"

namespace {

constexpr const char* kDescription =
    "Generation-assisted out-of-context image-caption detection.\n\n"
    "Stages: prepare, generate, embed, features, train, evaluate, all.\n"
    "Scores are the probability that a pair is falsified; a pair is labelled\n"
    "falsified when its score is >= 0.5, so a score of exactly 0.5 counts as\n"
    "falsified.\n\n"
    "Exit codes: 0 success, 2 config error, 3 missing dependency artifact,\n"
    "4 per-sample failures above generation.max_failure_fraction, 1 other errors.\n"
    "Errors are printed to stderr as one JSON object.";

struct StageArgs {
  std::string config;
  std::string split;
  std::optional<std::size_t> limit;
  std::optional<std::uint64_t> seed;
  std::string format = "md";
};

int fail(const std::exception& e) {
  std::cerr << oocd::error_json(e).dump() << std::endl;
  return oocd::exit_code_for(e);
}

int run_stage(oocd::Stage stage, const StageArgs& args) {
  oocd::RunOptions options;
  options.log = &std::cerr;
  options.limit = args.limit;
  options.seed = args.seed;
  if (!args.split.empty()) {
    options.split = oocd::parse_split(args.split);
    if (!options.split) throw oocd::ConfigError("--split must be train, val or test");
  }
  const auto format = oocd::parse_report_format(args.format);
  if (!format) throw oocd::ConfigError("--format must be md, csv or json");

  oocd::Pipeline pipeline(oocd::PipelineConfig::load(args.config), options);
  if (stage == oocd::Stage::kEvaluate || stage == oocd::Stage::kAll) {
    if (stage == oocd::Stage::kAll) {
      pipeline.run(oocd::Stage::kPrepare);
      pipeline.run(oocd::Stage::kGenerate);
      pipeline.run(oocd::Stage::kEmbed);
      pipeline.run(oocd::Stage::kFeatures);
      pipeline.run(oocd::Stage::kTrain);
    }
    for (const auto& report : pipeline.evaluate()) {
      std::cout << oocd::render_report(report, *format);
    }
  } else {
    pipeline.run(stage);
  }
  const auto& c = pipeline.counters();
  std::cerr << "[counters] caption_calls=" << c.caption_calls
            << " image_calls=" << c.image_calls
            << " encoder_invocations=" << c.encoder_invocations
            << " models_trained=" << c.models_trained
            << " models_reused=" << c.models_reused << std::endl;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{kDescription, "oocd"};
  app.require_subcommand(1);

  StageArgs args;
  std::vector<std::pair<oocd::Stage, CLI::App*>> stages;
  for (auto stage : {oocd::Stage::kPrepare, oocd::Stage::kGenerate, oocd::Stage::kEmbed,
                     oocd::Stage::kFeatures, oocd::Stage::kTrain, oocd::Stage::kEvaluate,
                     oocd::Stage::kAll}) {
    const std::string name(oocd::to_string(stage));
    auto* sub = app.add_subcommand(name, stage == oocd::Stage::kAll
                                             ? "run every stage in order"
                                             : "run the " + name + " stage");
    sub->add_option("--config", args.config, "pipeline config (JSON)")->required();
    sub->add_option("--split", args.split,
                    "restrict generate/embed/evaluate to one split (train|val|test)");
    sub->add_option("--limit", args.limit, "stratified subsample size, overrides corpus.limit");
    sub->add_option("--seed", args.seed, "global seed, overrides the config");
    sub->add_option("--format", args.format,
                    "report format printed to stdout by evaluate and all (md|csv|json)");
    stages.emplace_back(stage, sub);
  }

  oocd::FixtureOptions fixture;
  std::string fixture_dir;
  auto* fix = app.add_subcommand("fixture", "write the offline mock corpus with planted vectors");
  fix->add_option("dir", fixture_dir, "output directory")->required();
  fix->add_option("--samples", fixture.samples, "number of samples (multiple of 10)");
  fix->add_option("--seed", fixture.seed, "fixture seed");

  std::array<std::string, 3> split_files;
  std::string visual_news, image_root, out_file;
  auto* conv = app.add_subcommand(
      "convert-newsclippings", "convert the three-file NewsCLIPpings layout to annotations.jsonl");
  conv->add_option("--train", split_files[0], "train split JSON")->required();
  conv->add_option("--val", split_files[1], "val split JSON")->required();
  conv->add_option("--test", split_files[2], "test split JSON")->required();
  conv->add_option("--visual-news", visual_news, "VisualNews data.json")->required();
  conv->add_option("--image-root", image_root, "directory image paths are relative to")
      ->required();
  conv->add_option("--out", out_file, "output annotations.jsonl")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    for (const auto& [stage, sub] : stages) {
      if (sub->parsed()) return run_stage(stage, args);
    }
    if (fix->parsed()) {
      std::cout << oocd::write_fixture(fixture_dir, fixture).config.string() << std::endl;
    } else if (conv->parsed()) {
      const auto samples = oocd::convert_newsclippings(
          {split_files[0], split_files[1], split_files[2]}, visual_news, image_root);
      oocd::write_annotations(samples, out_file);
      std::cerr << "wrote " << samples.size() << " samples to " << out_file << std::endl;
    }
  } catch (const std::exception& e) {
    return fail(e);
  }
  return 0;
}

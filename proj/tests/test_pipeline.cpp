// Copyright 2026 The oocd Authors.
// SPDX-License-Identifier: Apache-2.0

#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <sstream>

#include "doctest.h"
#include "oocd/binary_io.hpp"
#include "oocd/config.hpp"
#include "oocd/error.hpp"
#include "oocd/fixture.hpp"
#include "oocd/pipeline.hpp"
#include "test_support.hpp"

using namespace oocd;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Small fixture with a reduced model grid so the suite stays quick.
PipelineConfig small_config(const fs::path& dir, std::size_t samples = 40) {
  FixtureOptions opt;
  opt.samples = samples;
  const auto info = write_fixture(dir, opt);
  json j = json::parse(read_file_bytes(info.config));
  j["classifiers"] = {{"kinds", {"svm", "mlp"}}};
  j["features"] = {{"similarity_groups", {"clip+sbert+vit"}},
                   {"feature_map_groups", {"clip"}},
                   {"reduced_groups", {"clip"}},
                   {"reduce_to", 4}};
  write_file_bytes(info.config, j.dump(2));
  return PipelineConfig::load(info.config);
}

struct Outcome {
  int status = -1;
  std::string out;
};

Outcome run_cli(const std::string& args) {
  Outcome o;
  const std::string cmd = std::string(OOCD_CLI) + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof(buf), pipe)) > 0) o.out.append(buf, n);
  const int raw = pclose(pipe);
  o.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  return o;
}

}  // namespace

TEST_CASE("stages parse and print") {
  CHECK(parse_stage("all") == Stage::kAll);
  CHECK(parse_stage("features") == Stage::kFeatures);
  CHECK(to_string(Stage::kEvaluate) == "evaluate");
  CHECK_FALSE(parse_stage("deploy").has_value());
}

TEST_CASE("error mapping to exit codes and JSON") {
  CHECK(exit_code_for(ConfigError("x")) == 2);
  CHECK(exit_code_for(MissingArtifact("x")) == 3);
  CHECK(exit_code_for(TooManyFailures("x")) == 4);
  CHECK(exit_code_for(std::runtime_error("x")) == 1);
  const json j = error_json(MissingArtifact("models/a is missing"));
  CHECK(j["exit_code"] == 3);
  CHECK(j["error"] == "MissingArtifact");
  CHECK(j["message"].get<std::string>().find("models/a") != std::string::npos);
}

TEST_CASE("evaluate before train names the missing model") {
  const auto dir = testing::scratch_dir("pipeline_order");
  Pipeline p(small_config(dir));
  p.run(Stage::kPrepare);
  try {
    p.run(Stage::kEvaluate);
    FAIL("expected MissingArtifact");
  } catch (const MissingArtifact& e) {
    CHECK(std::string(e.what()).find("models/similarity-clip+sbert+vit-svm") != std::string::npos);
    CHECK(exit_code_for(e) == 3);
  }
  CHECK_THROWS_AS(p.run(Stage::kEmbed), MissingArtifact);
}

TEST_CASE("full run, then a warm rerun that does no work") {
  const auto dir = testing::scratch_dir("pipeline_full");
  const auto config = small_config(dir);
  std::vector<EvaluationReport> reports;
  std::size_t trained = 0;
  {
    Pipeline p(config);
    p.run(Stage::kAll);
    const auto& c = p.counters();
    CHECK(c.caption_calls == 40);
    CHECK(c.image_calls == 40);
    CHECK(c.encoder_invocations == 240);
    // svm, mlp and threshold on one similarity group; svm, mlp on clip and clip-pca4.
    trained = c.models_trained;
    CHECK(trained == 7);
    reports = p.evaluate();
  }
  const fs::path run = config.run_path();
  for (const char* f :
       {"manifest.json", "corpus/annotations.jsonl", "generation/pairs.jsonl",
        "features/manifest.json", "features/similarity_triples.csv", "models/index.json",
        "reports/test.md", "reports/test.csv", "reports/test.json", "reports/val.md",
        "logs/train.log"}) {
    CHECK_MESSAGE(fs::exists(run / f), f);
  }
  REQUIRE(reports.size() == 2);
  for (const auto& row : reports[1].rows) {
    if (row.mode != FeatureMode::kSimilarity) continue;
    CHECK(row.accuracy >= 95.0);
    if (row.auc) CHECK(*row.auc >= 99.0);
  }
  const json manifest = json::parse(read_file_bytes(run / "manifest.json"));
  CHECK(manifest["config"] == config.to_json());
  CHECK(manifest["config_fingerprint"] == config.fingerprint());

  const std::string features_before = read_file_bytes(run / "features/similarity_triples.csv");
  const std::string report_before = read_file_bytes(run / "reports/test.md");

  Pipeline again(config);
  again.run(Stage::kAll);
  const auto& c = again.counters();
  CHECK(c.caption_calls == 0);
  CHECK(c.image_calls == 0);
  CHECK(c.encoder_invocations == 0);
  CHECK(c.models_trained == 0);
  CHECK(c.models_reused == trained);
  CHECK(read_file_bytes(run / "features/similarity_triples.csv") == features_before);
  CHECK(read_file_bytes(run / "reports/test.md") == report_before);
  CHECK(read_file_bytes(run / "logs/train.log").find("up to date") != std::string::npos);
}

TEST_CASE("per-sample failures above the threshold stop the stage") {
  const auto dir = testing::scratch_dir("pipeline_failures");
  auto config = small_config(dir);
  config.generation.max_failure_fraction = 0.0;
  Pipeline p(config);
  p.run(Stage::kPrepare);
  fs::remove(dir / "images" / "s00003.png");
  try {
    p.run(Stage::kGenerate);
    FAIL("expected TooManyFailures");
  } catch (const TooManyFailures& e) {
    CHECK(exit_code_for(e) == 4);
  }
  // Outputs for the samples that succeeded are kept.
  const std::string failures = read_file_bytes(config.run_path() / "generation/failures.jsonl");
  CHECK(failures.find("s00003") != std::string::npos);
  CHECK(fs::exists(config.run_path() / "generation/pairs.jsonl"));

  config.generation.max_failure_fraction = 0.05;
  Pipeline tolerant(config);
  CHECK_NOTHROW(tolerant.run(Stage::kGenerate));
  CHECK(tolerant.counters().caption_calls == 0);
}

TEST_CASE("limit subsamples the corpus before generation") {
  const auto dir = testing::scratch_dir("pipeline_limit");
  RunOptions opt;
  opt.limit = 20;
  Pipeline p(small_config(dir), opt);
  p.run(Stage::kPrepare);
  const std::string ann = read_file_bytes(p.run_dir() / "corpus/annotations.jsonl");
  CHECK(std::count(ann.begin(), ann.end(), '\n') == 20);
}

#ifdef OOCD_CLI
TEST_CASE("command line exit codes and error JSON") {
  const auto dir = testing::scratch_dir("pipeline_cli");
  small_config(dir);
  const std::string config = (dir / "config.json").string();

  auto o = run_cli("evaluate --config " + config);
  CHECK(o.status == 3);
  CHECK(o.out.find("\"exit_code\":3") != std::string::npos);

  write_file_bytes(dir / "bad.json", R"({"sed": 1})");
  o = run_cli("prepare --config " + (dir / "bad.json").string());
  CHECK(o.status == 2);
  CHECK(o.out.find("ConfigError") != std::string::npos);

  o = run_cli("prepare --config " + config + " --split holdout");
  CHECK(o.status == 2);

  o = run_cli("prepare --config " + config + " --limit 10");
  CHECK(o.status == 0);
  o = run_cli("features --config " + config);
  CHECK(o.status == 3);
}
#endif

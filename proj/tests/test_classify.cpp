// Copyright 2026 The oocd Authors.
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <limits>

#include "doctest.h"
#include "oocd/classifier.hpp"
#include "oocd/error.hpp"
#include "oocd/metrics.hpp"
#include "oocd/models.hpp"
#include "test_support.hpp"

using namespace oocd;
using oocd::testing::gaussian_blobs;

namespace {

std::vector<ClassifierKind> all_kinds() {
  std::vector<ClassifierKind> k(kLearnedKinds.begin(), kLearnedKinds.end());
  k.push_back(ClassifierKind::kThreshold);
  return k;
}

double accuracy_of(const TrainedModel& m, const std::vector<FeatureVector>& rows) {
  const auto preds = predict(m, rows);
  std::vector<Label> p, t;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    p.push_back(preds[i].label);
    t.push_back(*rows[i].label);
  }
  return accuracy(p, t);
}

// Largest |analytic - numeric| / max(|analytic|, |numeric|), over entries
// whose magnitude clears a floor where relative error stops meaning much.
double worst_relative_error(FlatNet& net, const Eigen::MatrixXd& x,
                            const Eigen::VectorXd& y) {
  Eigen::VectorXd analytic;
  net.loss_and_gradient(x, y, &analytic, nullptr);
  Eigen::VectorXd& theta = net.parameters();
  double worst = 0.0;
  const double h = 1e-5;
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    const double saved = theta(i);
    theta(i) = saved + h;
    const double up = net.loss_and_gradient(x, y, nullptr, nullptr);
    theta(i) = saved - h;
    const double down = net.loss_and_gradient(x, y, nullptr, nullptr);
    theta(i) = saved;
    const double numeric = (up - down) / (2 * h);
    const double scale = std::max(std::abs(analytic(i)), std::abs(numeric));
    if (scale < 1e-7) continue;
    worst = std::max(worst, std::abs(analytic(i) - numeric) / scale);
  }
  return worst;
}

}  // namespace

TEST_CASE("classifier kind names round-trip") {
  for (auto k : all_kinds()) {
    CHECK(parse_classifier_kind(to_string(k)) == k);
  }
  CHECK_FALSE(parse_classifier_kind("xgboost").has_value());
}

TEST_CASE("with_defaults fills every hyperparameter and keeps explicit ones") {
  ClassifierSpec s;
  s.kind = ClassifierKind::kMlp;
  s.hyperparameters = {{"dropout", 0.1}};
  const auto sim = s.with_defaults(FeatureMode::kSimilarity);
  CHECK(sim.hyperparameters["dropout"] == 0.1);
  CHECK(sim.hyperparameters["hidden"] == nlohmann::json::array({64, 32}));
  CHECK(sim.hyperparameters["patience"] == 10);
  const auto map = s.with_defaults(FeatureMode::kFeatureMap);
  CHECK(map.hyperparameters["hidden"] == nlohmann::json::array({512, 128}));

  ClassifierSpec gbt;
  gbt.kind = ClassifierKind::kGradientBoostedTrees;
  const auto g = gbt.with_defaults(FeatureMode::kSimilarity).hyperparameters;
  CHECK(g["n_trees"] == 400);
  CHECK(g["max_depth"] == 6);
  CHECK(g["learning_rate"] == 0.1);

  s.hyperparameters = {{"hiden", nlohmann::json::array({8})}};
  CHECK_THROWS_AS(s.with_defaults(FeatureMode::kSimilarity), ConfigError);
}

TEST_CASE("every kind separates 6-sigma blobs") {
  const auto train_rows = gaussian_blobs(200, 2, 6.0, 1);
  const auto val_rows = gaussian_blobs(100, 2, 6.0, 2);
  for (auto k : kLearnedKinds) {
    CAPTURE(to_string(k));
    ClassifierSpec s;
    s.kind = k;
    s.seed = 7;
    const auto m = train(s, train_rows, val_rows);
    CHECK(accuracy_of(m, val_rows) >= 95.0);
  }
}

TEST_CASE("threshold baseline separates planted similarities") {
  std::vector<FeatureVector> rows;
  Rng rng(3);
  for (int i = 0; i < 100; ++i) {
    const bool falsified = i % 2;
    FeatureVector f;
    f.sample_id = std::to_string(i);
    f.channels = ChannelSet::all();
    for (int c = 0; c < 3; ++c) {
      f.values.push_back(falsified ? rng.uniform(-0.1, 0.2) : rng.uniform(0.8, 0.95));
    }
    f.label = falsified ? Label::kFalsified : Label::kPristine;
    rows.push_back(f);
  }
  ClassifierSpec s;
  s.kind = ClassifierKind::kThreshold;
  const auto m = train(s, rows, {});
  CHECK(accuracy_of(m, rows) == 100.0);
}

TEST_CASE("threshold baseline score never rises with clip similarity") {
  std::vector<FeatureVector> rows = gaussian_blobs(60, 3, 1.0, 4, FeatureMode::kSimilarity,
                                                   ChannelSet::all());
  for (auto& r : rows) {
    for (auto& v : r.values) v = std::tanh(v / 2);
  }
  for (auto agg : {"all", "majority", "mean"}) {
    ClassifierSpec s;
    s.kind = ClassifierKind::kThreshold;
    s.hyperparameters = {{"aggregation", agg}};
    const auto m = train(s, rows, {});
    Rng rng(11);
    for (int trial = 0; trial < 20; ++trial) {
      const double sbert = rng.uniform(-1, 1), vit = rng.uniform(-1, 1);
      double prev = std::numeric_limits<double>::infinity();
      for (int k = 0; k <= 200; ++k) {
        FeatureVector f{"x", FeatureMode::kSimilarity, ChannelSet::all(),
                        {-1.0 + k / 100.0, sbert, vit}, std::nullopt};
        const double score = predict(m, {f})[0].score;
        CHECK(score <= prev);
        prev = score;
      }
    }
  }
}

TEST_CASE("score exactly 0.5 is labeled falsified") {
  CHECK(label_for_score(0.5) == Label::kFalsified);
  CHECK(label_for_score(std::nextafter(0.5, 0.0)) == Label::kPristine);
}

TEST_CASE("identical features give identical scores") {
  const auto rows = gaussian_blobs(80, 2, 3.0, 5);
  std::vector<FeatureVector> same(5, rows[0]);
  for (auto k : kLearnedKinds) {
    CAPTURE(to_string(k));
    ClassifierSpec s;
    s.kind = k;
    if (k == ClassifierKind::kMlp || k == ClassifierKind::kTabularTransformer) {
      s.hyperparameters = {{"max_epochs", 5}};
    }
    const auto m = train(s, rows, rows);
    const auto p = predict(m, same);
    for (const auto& q : p) {
      CHECK(q.score == p[0].score);
      CHECK(std::isfinite(q.score));
      CHECK(q.score >= 0.0);
      CHECK(q.score <= 1.0);
    }
  }
}

TEST_CASE("same spec, seed and data give identical predictions") {
  const auto tr = gaussian_blobs(120, 2, 2.0, 8);
  const auto va = gaussian_blobs(60, 2, 2.0, 9);
  for (auto k : kLearnedKinds) {
    CAPTURE(to_string(k));
    ClassifierSpec s;
    s.kind = k;
    s.seed = 99;
    const auto a = predict(train(s, tr, va), va);
    const auto b = predict(train(s, tr, va), va);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].score == b[i].score);
  }
}

TEST_CASE("save and load reproduce in-memory scores") {
  const auto tr = gaussian_blobs(100, 2, 2.0, 12);
  const auto va = gaussian_blobs(50, 2, 2.0, 13);
  for (auto k : all_kinds()) {
    CAPTURE(to_string(k));
    ClassifierSpec s;
    s.kind = k;
    s.seed = 3;
    if (k == ClassifierKind::kMlp || k == ClassifierKind::kTabularTransformer) {
      s.hyperparameters = {{"max_epochs", 10}};
    }
    auto rows_tr = tr, rows_va = va;
    if (k == ClassifierKind::kThreshold) {
      for (auto* set : {&rows_tr, &rows_va}) {
        for (auto& r : *set) {
          for (auto& v : r.values) v = std::tanh(v);
        }
      }
    }
    const auto m = train(s, rows_tr, rows_va);
    const auto dir = oocd::testing::scratch_dir("model-" + std::string(to_string(k)));
    save_model(m, dir);
    const auto loaded = load_model(dir);
    const auto a = predict(m, rows_va);
    const auto b = predict(loaded, rows_va);
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(std::abs(a[i].score - b[i].score) <= 1e-9);
    }
    CHECK(loaded.manifest == m.manifest);
  }
}

TEST_CASE("save and load with a fitted projection") {
  const auto tr = gaussian_blobs(60, 1024, 6.0, 21, FeatureMode::kFeatureMap,
                                 {Channel::kClip});
  const auto va = gaussian_blobs(30, 1024, 6.0, 22, FeatureMode::kFeatureMap,
                                 {Channel::kClip});
  ClassifierSpec s;
  s.kind = ClassifierKind::kSvm;
  TrainOptions opt;
  opt.reduce_to = 16;
  const auto m = train(s, tr, va, opt);
  REQUIRE(m.reduction.has_value());
  CHECK(m.reduction->output_dim() == 16);
  const auto dir = oocd::testing::scratch_dir("model-projected");
  save_model(m, dir);
  CHECK(std::filesystem::exists(dir / "projection.bin"));
  const auto loaded = load_model(dir);
  const auto a = predict(m, va);
  const auto b = predict(loaded, va);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(std::abs(a[i].score - b[i].score) <= 1e-9);
  }
  CHECK(m.manifest["train"]["fingerprint"] == fingerprint(tr));
  CHECK(m.manifest["fitted_on"] == "train");
}

TEST_CASE("training rejects single-class and non-finite data") {
  auto rows = gaussian_blobs(20, 2, 6.0, 1);
  ClassifierSpec s;
  s.kind = ClassifierKind::kRandomForest;
  auto one_class = rows;
  for (auto& r : one_class) r.label = Label::kPristine;
  CHECK_THROWS_AS(train(s, one_class, {}), SingleClassData);
  auto bad = rows;
  bad[3].values[1] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(train(s, bad, {}), NonFiniteFeature);
}

TEST_CASE("predict rejects mismatched feature shapes") {
  const auto rows = gaussian_blobs(40, 2, 6.0, 1);
  ClassifierSpec s;
  s.kind = ClassifierKind::kRandomForest;
  const auto m = train(s, rows, {});
  auto three = gaussian_blobs(4, 3, 6.0, 2, FeatureMode::kSimilarity, ChannelSet::all());
  CHECK_THROWS_AS(predict(m, three), ShapeMismatch);
  auto other = gaussian_blobs(4, 2, 6.0, 2, FeatureMode::kSimilarity,
                              {Channel::kClip, Channel::kVit});
  CHECK_THROWS_AS(predict(m, other), ShapeMismatch);
}

TEST_CASE("MLP analytic gradient matches central differences") {
  MlpParams p;
  p.hidden = {8, 4};
  MlpLearner net(p);
  Rng rng(17);
  net.initialize(3, rng);
  Eigen::MatrixXd x(4, 3);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
  Eigen::VectorXd y(4);
  y << 1, 0, 1, 0;
  CHECK(worst_relative_error(net, x, y) <= 1e-4);
}

TEST_CASE("transformer analytic gradient matches central differences") {
  for (int width : {1, 2}) {
    CAPTURE(width);
    TransformerParams p;
    p.d_token = 8;
    p.n_heads = 2;
    p.ffn_hidden = 6;
    p.slice_width = width;
    TransformerLearner net(p);
    Rng rng(5);
    net.initialize(3, rng);
    Eigen::MatrixXd x(3, 3);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
    Eigen::VectorXd y(3);
    y << 1, 0, 1;
    CHECK(worst_relative_error(net, x, y) <= 1e-4);
  }
}

TEST_CASE("Platt fit puts probability above one half for positive margins") {
  Eigen::VectorXd dec(6), t(6);
  dec << -2, -1.5, -1, 1, 1.5, 2;
  t << 0, 0, 0, 1, 1, 1;
  const auto [a, b] = fit_platt(dec, t);
  CHECK(a < 0);
  CHECK(1.0 / (1.0 + std::exp(a * 2 + b)) > 0.5);
  CHECK(1.0 / (1.0 + std::exp(a * -2 + b)) < 0.5);
}

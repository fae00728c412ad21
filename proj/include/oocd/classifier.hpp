// Copyright 2026 The oocd Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "json.hpp"
#include "oocd/binary_io.hpp"
#include "oocd/features.hpp"
#include "oocd/pca.hpp"

namespace oocd {

enum class ClassifierKind : std::uint8_t {
  kSvm,
  kRandomForest,
  kGradientBoostedTrees,
  kMlp,
  kTabularTransformer,
  kThreshold,  // interpretable per-channel threshold baseline
};

inline constexpr std::array<ClassifierKind, 5> kLearnedKinds = {
    ClassifierKind::kSvm, ClassifierKind::kRandomForest,
    ClassifierKind::kGradientBoostedTrees, ClassifierKind::kMlp,
    ClassifierKind::kTabularTransformer};

std::string_view to_string(ClassifierKind k) noexcept;
// Display name used in report tables ("SVM", "Random Forest", ...).
std::string_view display_name(ClassifierKind k) noexcept;
std::optional<ClassifierKind> parse_classifier_kind(std::string_view text) noexcept;

struct ClassifierSpec {
  ClassifierKind kind = ClassifierKind::kMlp;
  nlohmann::json hyperparameters = nlohmann::json::object();
  std::uint64_t seed = 0;

  // Copy with every hyperparameter the learner reads filled in, so the
  // manifest records exactly what ran. Explicit values are kept.
  ClassifierSpec with_defaults(FeatureMode mode) const;

  nlohmann::json to_json() const;
  static ClassifierSpec from_json(const nlohmann::json& j);
};

// One learning algorithm. Inputs arrive already reduced and standardized
// (if the learner asks for standardization); targets are 0/1.
class Learner {
 public:
  virtual ~Learner() = default;
  virtual ClassifierKind kind() const noexcept = 0;
  virtual bool wants_standardized_inputs() const noexcept { return true; }

  // x_val/y_val may be empty. Learners that early-stop or calibrate use them.
  virtual void fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                   const Eigen::MatrixXd& x_val, const Eigen::VectorXd& y_val) = 0;
  // Estimated probability of falsified, one per row, in [0, 1].
  virtual Eigen::VectorXd predict_proba(const Eigen::MatrixXd& x) const = 0;

  virtual void save(BinaryWriter& out) const = 0;
  virtual void load(BinaryReader& in) = 0;

  // Learner-specific facts for the manifest (iterations, epochs, ...).
  virtual nlohmann::json fit_summary() const { return nlohmann::json::object(); }
};

// spec must already carry defaults (see with_defaults).
std::unique_ptr<Learner> make_learner(const ClassifierSpec& spec,
                                      FeatureMode mode);

// Per-column z-scoring fitted on training rows; constant columns get unit
// scale.
struct Standardizer {
  Eigen::VectorXd mean;
  Eigen::VectorXd scale;

  static Standardizer fit(const Eigen::MatrixXd& x);
  Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const;
  bool empty() const noexcept { return mean.size() == 0; }
};

struct Prediction {
  Label label = Label::kPristine;
  double score = 0.0;  // probability of falsified
};

// Ties at exactly 0.5 resolve to falsified.
inline Label label_for_score(double score) noexcept {
  return score >= 0.5 ? Label::kFalsified : Label::kPristine;
}

class TrainedModel {
 public:
  ClassifierSpec spec;
  FeatureMode mode = FeatureMode::kSimilarity;
  ChannelSet channels;
  std::size_t input_dim = 0;
  std::optional<PcaProjection> reduction;
  Standardizer standardizer;
  std::unique_ptr<Learner> learner;
  // spec, data fingerprints, fit summary and validation metrics
  nlohmann::json manifest = nlohmann::json::object();

  // Raw (unreduced) features -> falsified scores. Throws ShapeMismatch when
  // the width differs from input_dim.
  Eigen::VectorXd scores(const Eigen::MatrixXd& raw) const;
};

struct TrainOptions {
  // Fit a principal-component projection to this many dims on the training
  // rows before learning.
  std::optional<Eigen::Index> reduce_to;
};

// Throws SingleClassData when training labels hold one class,
// NonFiniteFeature on NaN/Inf, ShapeMismatch on mixed modes or channels.
TrainedModel train(const ClassifierSpec& spec,
                   const std::vector<FeatureVector>& train_set,
                   const std::vector<FeatureVector>& val_set,
                   const TrainOptions& options = {});

// Throws ShapeMismatch when features do not match the model's mode,
// channels or length.
std::vector<Prediction> predict(const TrainedModel& model,
                                const std::vector<FeatureVector>& features);

// Model directory: spec.json, params.bin, manifest.json, and projection.bin
// when a reduction was fitted.
void save_model(const TrainedModel& model, const std::filesystem::path& dir);
TrainedModel load_model(const std::filesystem::path& dir);

}  // namespace oocd

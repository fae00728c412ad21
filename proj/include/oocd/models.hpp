// Copyright 2026 The oocd Authors.
// SPDX-License-Identifier: Apache-2.0

// Concrete learners behind make_learner(). Exposed so tests can reach the
// networks' loss/gradient functions directly.

#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "oocd/classifier.hpp"
#include "oocd/rng.hpp"
#include "oocd/similarity.hpp"

namespace oocd {

// ---------------------------------------------------------------- SVM

struct SvmParams {
  double c = 1.0;
  double gamma = 0.0;  // <= 0: 1 / (dims * variance of the training inputs)
  double tol = 1e-3;
  std::int64_t max_iter = 10'000'000;
  double cache_mb = 256.0;
};

// C-SVC with an RBF kernel, solved by SMO with second-order working-set
// selection. Probabilities come from a sigmoid fitted to decision values on
// the validation rows (training rows when validation holds one class).
class SvmLearner final : public Learner {
 public:
  explicit SvmLearner(SvmParams params) : params_(params) {}
  ClassifierKind kind() const noexcept override { return ClassifierKind::kSvm; }
  void fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
           const Eigen::MatrixXd& x_val, const Eigen::VectorXd& y_val) override;
  Eigen::VectorXd predict_proba(const Eigen::MatrixXd& x) const override;
  Eigen::VectorXd decision_function(const Eigen::MatrixXd& x) const;
  void save(BinaryWriter& out) const override;
  void load(BinaryReader& in) override;
  nlohmann::json fit_summary() const override { return summary_; }

 private:
  SvmParams params_;
  double gamma_ = 0.0;
  Eigen::MatrixXd support_;      // support vectors, one per row
  Eigen::VectorXd coef_;         // y_i * alpha_i
  double rho_ = 0.0;
  double platt_a_ = 0.0, platt_b_ = 0.0;
  nlohmann::json summary_;
};

// Fits P(y=1 | f) = 1 / (1 + exp(a f + b)) by Newton's method with
// regularized targets. Returns {a, b}.
std::pair<double, double> fit_platt(const Eigen::VectorXd& decisions,
                                    const Eigen::VectorXd& targets);

// ------------------------------------------------------------ trees

struct TreeNode {
  std::int32_t feature = -1;  // -1 marks a leaf
  double threshold = 0.0;     // go left when x[feature] < threshold
  std::int32_t left = -1;
  std::int32_t right = -1;
  double value = 0.0;         // leaf output
};
using Tree = std::vector<TreeNode>;

double evaluate_tree(const Tree& tree, const double* row, Eigen::Index stride);

struct ForestParams {
  int n_trees = 100;
  int max_depth = 0;  // 0: unlimited
  int min_samples_leaf = 1;
  int max_features = 0;  // 0: floor(sqrt(dims)), at least 1
  bool bootstrap = true;
  std::uint64_t seed = 0;
};

// Gini-split CART trees on bootstrap samples; the score is the mean leaf
// frequency of falsified across trees.
class ForestLearner final : public Learner {
 public:
  explicit ForestLearner(ForestParams params) : params_(params) {}
  ClassifierKind kind() const noexcept override {
    return ClassifierKind::kRandomForest;
  }
  bool wants_standardized_inputs() const noexcept override { return false; }
  void fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
           const Eigen::MatrixXd& x_val, const Eigen::VectorXd& y_val) override;
  Eigen::VectorXd predict_proba(const Eigen::MatrixXd& x) const override;
  void save(BinaryWriter& out) const override;
  void load(BinaryReader& in) override;
  nlohmann::json fit_summary() const override;

 private:
  ForestParams params_;
  std::vector<Tree> trees_;
};

struct BoostingParams {
  int n_trees = 400;
  int max_depth = 6;
  double learning_rate = 0.1;
  double lambda = 1.0;  // L2 penalty on leaf weights
  double gamma = 0.0;   // minimum split gain
  double min_child_weight = 1.0;
  std::uint64_t seed = 0;
};

// Second-order gradient boosting on the logistic loss with exact greedy,
// level-wise tree growth.
class BoostingLearner final : public Learner {
 public:
  explicit BoostingLearner(BoostingParams params) : params_(params) {}
  ClassifierKind kind() const noexcept override {
    return ClassifierKind::kGradientBoostedTrees;
  }
  bool wants_standardized_inputs() const noexcept override { return false; }
  void fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
           const Eigen::MatrixXd& x_val, const Eigen::VectorXd& y_val) override;
  Eigen::VectorXd predict_proba(const Eigen::MatrixXd& x) const override;
  Eigen::VectorXd margins(const Eigen::MatrixXd& x) const;
  void save(BinaryWriter& out) const override;
  void load(BinaryReader& in) override;
  nlohmann::json fit_summary() const override;

 private:
  BoostingParams params_;
  std::vector<Tree> trees_;
};

// ------------------------------------------------------ neural nets

// Shared Adam/early-stopping settings.
struct NetTraining {
  double learning_rate = 1e-3;
  int batch_size = 32;
  int max_epochs = 200;
  int patience = 10;
  std::uint64_t seed = 0;
};

// Parameters held in one flat vector; layers view into it.
class FlatNet : public Learner {
 public:
  explicit FlatNet(NetTraining training) : training_(training) {}

  // Allocates and initializes parameters for the input width.
  virtual void initialize(Eigen::Index input_dim, Rng& rng) = 0;
  // Mean binary cross-entropy of the batch; writes d(loss)/d(params) when
  // grad is non-null. Dropout is applied only when dropout_rng is non-null.
  virtual double loss_and_gradient(const Eigen::MatrixXd& x,
                                   const Eigen::VectorXd& y,
                                   Eigen::VectorXd* grad,
                                   Rng* dropout_rng) const = 0;
  // Pre-sigmoid outputs, inference mode.
  virtual Eigen::VectorXd logits(const Eigen::MatrixXd& x) const = 0;

  Eigen::VectorXd& parameters() noexcept { return theta_; }
  const Eigen::VectorXd& parameters() const noexcept { return theta_; }

  // Adam with early stopping: after each epoch the validation AUC is
  // computed; an epoch improves when AUC rises, or holds while validation
  // loss falls. The best epoch's parameters are kept. Without a two-class
  // validation set training loss is monitored instead.
  void fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
           const Eigen::MatrixXd& x_val, const Eigen::VectorXd& y_val) override;
  Eigen::VectorXd predict_proba(const Eigen::MatrixXd& x) const override;
  nlohmann::json fit_summary() const override { return summary_; }

 protected:
  void save_parameters(BinaryWriter& out) const;
  void load_parameters(BinaryReader& in);

  NetTraining training_;
  Eigen::VectorXd theta_;
  Eigen::Index input_dim_ = 0;
  nlohmann::json summary_;
};

struct MlpParams {
  std::vector<int> hidden = {64, 32};
  double dropout = 0.2;
  NetTraining training;
};

// Fully connected ReLU network with dropout after each hidden layer and a
// single logit output.
class MlpLearner final : public FlatNet {
 public:
  explicit MlpLearner(MlpParams params)
      : FlatNet(params.training), params_(std::move(params)) {}
  ClassifierKind kind() const noexcept override { return ClassifierKind::kMlp; }

  void initialize(Eigen::Index input_dim, Rng& rng) override;
  double loss_and_gradient(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                           Eigen::VectorXd* grad,
                           Rng* dropout_rng) const override;
  Eigen::VectorXd logits(const Eigen::MatrixXd& x) const override;
  void save(BinaryWriter& out) const override;
  void load(BinaryReader& in) override;

 private:
  struct Layer {
    Eigen::Index w_offset, b_offset, in, out;
  };
  void build_layout(Eigen::Index input_dim);

  MlpParams params_;
  std::vector<Layer> layers_;  // hidden layers then the output layer
};

struct TransformerParams {
  int d_token = 64;
  int n_layers = 2;
  int n_heads = 4;
  int ffn_hidden = 128;
  int slice_width = 1;  // inputs per token; the last slice is zero-padded
  NetTraining training;
};

// Feature-tokenizer transformer: each slice of the input becomes a token
// through its own affine map, a learned classification token is prepended,
// pre-norm encoder layers follow, and the classification token's final
// state goes through norm, ReLU and a linear head.
class TransformerLearner final : public FlatNet {
 public:
  explicit TransformerLearner(TransformerParams params)
      : FlatNet(params.training), params_(params) {}
  ClassifierKind kind() const noexcept override {
    return ClassifierKind::kTabularTransformer;
  }

  void initialize(Eigen::Index input_dim, Rng& rng) override;
  double loss_and_gradient(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                           Eigen::VectorXd* grad,
                           Rng* dropout_rng) const override;
  Eigen::VectorXd logits(const Eigen::MatrixXd& x) const override;
  void save(BinaryWriter& out) const override;
  void load(BinaryReader& in) override;

  Eigen::Index token_count() const noexcept { return n_tokens_; }

 private:
  struct Block {
    Eigen::Index offset, rows, cols;
  };
  struct EncoderLayer {
    Block ln1_g, ln1_b, wq, bq, wk, bk, wv, bv, wo, bo;
    Block ln2_g, ln2_b, w1, b1, w2, b2;
  };
  void build_layout(Eigen::Index input_dim);
  double sample_forward_backward(const Eigen::VectorXd& x, double y,
                                 double weight, Eigen::VectorXd* grad,
                                 double* logit) const;

  TransformerParams params_;
  Eigen::Index n_tokens_ = 0;
  Block tok_w_{}, tok_b_{}, cls_{};
  std::vector<EncoderLayer> layers_;
  Block out_ln_g_{}, out_ln_b_{}, head_w_{}, head_b_{};
};

// ------------------------------------------------------ threshold

// Per-channel similarity thresholds on the 0.01 grid, fitted on the
// validation rows (training rows when validation lacks a class). The score
// falls monotonically with the aggregated margin and crosses 0.5 exactly
// where the threshold rule flips.
class ThresholdLearner final : public Learner {
 public:
  explicit ThresholdLearner(Aggregation aggregation) : aggregation_(aggregation) {}
  ClassifierKind kind() const noexcept override {
    return ClassifierKind::kThreshold;
  }
  bool wants_standardized_inputs() const noexcept override { return false; }
  void fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
           const Eigen::MatrixXd& x_val, const Eigen::VectorXd& y_val) override;
  Eigen::VectorXd predict_proba(const Eigen::MatrixXd& x) const override;
  void save(BinaryWriter& out) const override;
  void load(BinaryReader& in) override;
  nlohmann::json fit_summary() const override;

  const std::vector<double>& thresholds() const noexcept { return thresholds_; }

 private:
  Aggregation aggregation_;
  std::vector<double> thresholds_;
  std::string fitted_on_ = "train";
};

}  // namespace oocd

// Copyright 2026 The oocd Authors.
// SPDX-License-Identifier: Apache-2.0

#include "oocd/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "oocd/error.hpp"
#include "oocd/metrics.hpp"
#include "oocd/models.hpp"

namespace oocd {

using nlohmann::json;

std::string_view to_string(ClassifierKind k) noexcept {
  switch (k) {
    case ClassifierKind::kSvm: return "svm";
    case ClassifierKind::kRandomForest: return "random_forest";
    case ClassifierKind::kGradientBoostedTrees: return "gradient_boosted_trees";
    case ClassifierKind::kMlp: return "mlp";
    case ClassifierKind::kTabularTransformer: return "tabular_transformer";
    case ClassifierKind::kThreshold: return "threshold";
  }
  return "unknown";
}

std::string_view display_name(ClassifierKind k) noexcept {
  switch (k) {
    case ClassifierKind::kSvm: return "SVM";
    case ClassifierKind::kRandomForest: return "Random Forest";
    case ClassifierKind::kGradientBoostedTrees: return "Gradient Boosted Trees";
    case ClassifierKind::kMlp: return "MLP";
    case ClassifierKind::kTabularTransformer: return "Transformer";
    case ClassifierKind::kThreshold: return "Threshold baseline";
  }
  return "unknown";
}

std::optional<ClassifierKind> parse_classifier_kind(std::string_view text) noexcept {
  for (auto k : {ClassifierKind::kSvm, ClassifierKind::kRandomForest,
                 ClassifierKind::kGradientBoostedTrees, ClassifierKind::kMlp,
                 ClassifierKind::kTabularTransformer, ClassifierKind::kThreshold}) {
    if (to_string(k) == text) return k;
  }
  return std::nullopt;
}

namespace {

json default_hyperparameters(ClassifierKind kind, FeatureMode mode) {
  const bool map = mode == FeatureMode::kFeatureMap;
  switch (kind) {
    case ClassifierKind::kSvm:
      return {{"C", 1.0}, {"gamma", "scale"}, {"tol", 1e-3},
              {"max_iter", 10'000'000}, {"cache_mb", 256.0}};
    case ClassifierKind::kRandomForest:
      return {{"n_trees", 100}, {"max_depth", 0}, {"min_samples_leaf", 1},
              {"max_features", "sqrt"}, {"bootstrap", true}};
    case ClassifierKind::kGradientBoostedTrees:
      return {{"n_trees", 400}, {"max_depth", 6}, {"learning_rate", 0.1},
              {"lambda", 1.0}, {"gamma", 0.0}, {"min_child_weight", 1.0}};
    case ClassifierKind::kMlp:
      return {{"hidden", map ? json::array({512, 128}) : json::array({64, 32})},
              {"dropout", 0.2}, {"learning_rate", 1e-3}, {"batch_size", 32},
              {"max_epochs", 200}, {"patience", 10}};
    case ClassifierKind::kTabularTransformer:
      return {{"d_token", 64}, {"n_layers", 2}, {"n_heads", 4},
              {"ffn_hidden", 128}, {"slice_width", map ? 64 : 1},
              {"learning_rate", 1e-3}, {"batch_size", 32},
              {"max_epochs", 100}, {"patience", 10}};
    case ClassifierKind::kThreshold:
      return {{"aggregation", "majority"}};
  }
  return json::object();
}

template <typename T>
T hp(const json& h, const char* key) {
  try {
    return h.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("hyperparameter '") + key + "': " + e.what());
  }
}

NetTraining net_training(const json& h, std::uint64_t seed) {
  NetTraining t;
  t.learning_rate = hp<double>(h, "learning_rate");
  t.batch_size = hp<int>(h, "batch_size");
  t.max_epochs = hp<int>(h, "max_epochs");
  t.patience = hp<int>(h, "patience");
  t.seed = seed;
  return t;
}

void check_shape(const std::vector<FeatureVector>& rows, FeatureMode mode,
                 ChannelSet channels, std::size_t length, const char* what) {
  for (const auto& f : rows) {
    if (f.mode != mode || f.channels != channels || f.values.size() != length) {
      throw ShapeMismatch(std::string(what) + " row '" + f.sample_id + "' is " +
                          std::string(to_string(f.mode)) + "/" +
                          f.channels.to_string() + " length " +
                          std::to_string(f.values.size()) + "; expected " +
                          std::string(to_string(mode)) + "/" +
                          channels.to_string() + " length " +
                          std::to_string(length));
    }
  }
}

json split_summary(const std::vector<FeatureVector>& rows, const Eigen::VectorXd& y) {
  return {{"rows", rows.size()},
          {"falsified", static_cast<std::int64_t>((y.array() > 0.5).count())},
          {"fingerprint", fingerprint(rows)}};
}

}  // namespace

ClassifierSpec ClassifierSpec::with_defaults(FeatureMode mode) const {
  ClassifierSpec out = *this;
  if (!hyperparameters.is_object()) throw ConfigError("hyperparameters must be an object");
  json filled = default_hyperparameters(kind, mode);
  for (const auto& [key, value] : hyperparameters.items()) {
    if (!filled.contains(key)) {
      std::string allowed;
      for (const auto& [k, v] : filled.items()) allowed += (allowed.empty() ? "" : ", ") + k;
      throw ConfigError("unknown hyperparameter '" + key + "' for " +
                        std::string(to_string(kind)) + " (allowed: " + allowed + ")");
    }
    filled[key] = value;
  }
  out.hyperparameters = std::move(filled);
  return out;
}

json ClassifierSpec::to_json() const {
  return {{"kind", std::string(to_string(kind))},
          {"hyperparameters", hyperparameters},
          {"seed", seed}};
}

ClassifierSpec ClassifierSpec::from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("classifier spec must be an object");
  ClassifierSpec s;
  const std::string kind = j.value("kind", std::string());
  const auto k = parse_classifier_kind(kind);
  if (!k) throw ConfigError("unknown classifier kind '" + kind + "'");
  s.kind = *k;
  if (j.contains("hyperparameters")) s.hyperparameters = j.at("hyperparameters");
  if (j.contains("seed")) {
    if (!j.at("seed").is_number_unsigned() && !j.at("seed").is_number_integer()) {
      throw ConfigError("classifier seed must be a non-negative integer");
    }
    s.seed = j.at("seed").get<std::uint64_t>();
  }
  return s;
}

std::unique_ptr<Learner> make_learner(const ClassifierSpec& spec, FeatureMode mode) {
  const json& h = spec.hyperparameters;
  switch (spec.kind) {
    case ClassifierKind::kSvm: {
      SvmParams p;
      p.c = hp<double>(h, "C");
      const json& g = h.at("gamma");
      if (g.is_string()) {
        if (g.get<std::string>() != "scale") throw ConfigError("svm gamma must be a number or \"scale\"");
        p.gamma = 0.0;
      } else {
        p.gamma = hp<double>(h, "gamma");
        if (!(p.gamma > 0)) throw ConfigError("svm gamma must be positive");
      }
      p.tol = hp<double>(h, "tol");
      p.max_iter = hp<std::int64_t>(h, "max_iter");
      p.cache_mb = hp<double>(h, "cache_mb");
      return std::make_unique<SvmLearner>(p);
    }
    case ClassifierKind::kRandomForest: {
      ForestParams p;
      p.n_trees = hp<int>(h, "n_trees");
      p.max_depth = hp<int>(h, "max_depth");
      p.min_samples_leaf = hp<int>(h, "min_samples_leaf");
      const json& mf = h.at("max_features");
      if (mf.is_string()) {
        if (mf.get<std::string>() != "sqrt") throw ConfigError("max_features must be an integer or \"sqrt\"");
        p.max_features = 0;
      } else {
        p.max_features = hp<int>(h, "max_features");
      }
      p.bootstrap = hp<bool>(h, "bootstrap");
      p.seed = spec.seed;
      if (p.n_trees < 1 || p.min_samples_leaf < 1 || p.max_depth < 0) {
        throw ConfigError("random_forest sizes must be positive");
      }
      return std::make_unique<ForestLearner>(p);
    }
    case ClassifierKind::kGradientBoostedTrees: {
      BoostingParams p;
      p.n_trees = hp<int>(h, "n_trees");
      p.max_depth = hp<int>(h, "max_depth");
      p.learning_rate = hp<double>(h, "learning_rate");
      p.lambda = hp<double>(h, "lambda");
      p.gamma = hp<double>(h, "gamma");
      p.min_child_weight = hp<double>(h, "min_child_weight");
      p.seed = spec.seed;
      if (p.n_trees < 1 || p.max_depth < 1 || !(p.learning_rate > 0) || p.lambda < 0) {
        throw ConfigError("gradient_boosted_trees sizes and rates must be positive");
      }
      return std::make_unique<BoostingLearner>(p);
    }
    case ClassifierKind::kMlp: {
      MlpParams p;
      p.hidden = hp<std::vector<int>>(h, "hidden");
      p.dropout = hp<double>(h, "dropout");
      if (p.dropout < 0 || p.dropout >= 1) throw ConfigError("mlp dropout must be in [0, 1)");
      p.training = net_training(h, spec.seed);
      return std::make_unique<MlpLearner>(p);
    }
    case ClassifierKind::kTabularTransformer: {
      TransformerParams p;
      p.d_token = hp<int>(h, "d_token");
      p.n_layers = hp<int>(h, "n_layers");
      p.n_heads = hp<int>(h, "n_heads");
      p.ffn_hidden = hp<int>(h, "ffn_hidden");
      p.slice_width = hp<int>(h, "slice_width");
      p.training = net_training(h, spec.seed);
      return std::make_unique<TransformerLearner>(p);
    }
    case ClassifierKind::kThreshold: {
      if (mode != FeatureMode::kSimilarity) {
        throw ConfigError("the threshold baseline needs similarity-mode features");
      }
      const auto a = parse_aggregation(hp<std::string>(h, "aggregation"));
      if (!a) throw ConfigError("aggregation must be all, majority or mean");
      return std::make_unique<ThresholdLearner>(*a);
    }
  }
  throw ConfigError("unknown classifier kind");
}

Standardizer Standardizer::fit(const Eigen::MatrixXd& x) {
  Standardizer s;
  s.mean = x.colwise().mean().transpose();
  s.scale.resize(x.cols());
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    const double var = (x.col(c).array() - s.mean(c)).square().mean();
    s.scale(c) = var > 1e-24 ? std::sqrt(var) : 1.0;
  }
  return s;
}

Eigen::MatrixXd Standardizer::apply(const Eigen::MatrixXd& x) const {
  return (x.rowwise() - mean.transpose()).array().rowwise() / scale.transpose().array();
}

Eigen::VectorXd TrainedModel::scores(const Eigen::MatrixXd& raw) const {
  if (static_cast<std::size_t>(raw.cols()) != input_dim) {
    throw ShapeMismatch("model expects " + std::to_string(input_dim) +
                        " features, got " + std::to_string(raw.cols()));
  }
  Eigen::MatrixXd x = reduction ? reduction->transform(raw) : raw;
  if (!standardizer.empty()) x = standardizer.apply(x);
  Eigen::VectorXd s = learner->predict_proba(x);
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (!std::isfinite(s(i))) throw NonFiniteFeature("model produced a non-finite score");
    s(i) = std::clamp(s(i), 0.0, 1.0);
  }
  return s;
}

TrainedModel train(const ClassifierSpec& spec,
                   const std::vector<FeatureVector>& train_set,
                   const std::vector<FeatureVector>& val_set,
                   const TrainOptions& options) {
  if (train_set.empty()) throw EmptyInput("no training rows");
  TrainedModel model;
  model.mode = train_set.front().mode;
  model.channels = train_set.front().channels;
  model.input_dim = expected_feature_length(model.mode, model.channels);
  check_shape(train_set, model.mode, model.channels, model.input_dim, "training");
  check_shape(val_set, model.mode, model.channels, model.input_dim, "validation");
  model.spec = spec.with_defaults(model.mode);

  Eigen::MatrixXd x = to_matrix(train_set);
  const Eigen::VectorXd y = to_targets(train_set);
  const auto positives = (y.array() > 0.5).count();
  if (positives == 0 || positives == y.size()) {
    throw SingleClassData("training labels hold a single class (" +
                          std::to_string(positives) + " falsified of " +
                          std::to_string(y.size()) + ")");
  }
  Eigen::MatrixXd x_val = val_set.empty() ? Eigen::MatrixXd(0, x.cols()) : to_matrix(val_set);
  const Eigen::VectorXd y_val = val_set.empty() ? Eigen::VectorXd() : to_targets(val_set);

  json reduction_info = nullptr;
  if (options.reduce_to) {
    PcaFit fit = reduce_dimensions(x, *options.reduce_to);
    x = std::move(fit.transformed);
    if (x_val.rows() > 0) x_val = fit.projection.transform(x_val);
    reduction_info = {{"target_dim", *options.reduce_to},
                      {"output_dim", fit.projection.output_dim()},
                      {"warnings", fit.warnings}};
    model.reduction = std::move(fit.projection);
  }

  model.learner = make_learner(model.spec, model.mode);
  if (model.learner->wants_standardized_inputs()) {
    model.standardizer = Standardizer::fit(x);
    x = model.standardizer.apply(x);
    if (x_val.rows() > 0) x_val = model.standardizer.apply(x_val);
  }
  model.learner->fit(x, y, x_val, y_val);

  json val_info = split_summary(val_set, y_val);
  if (!val_set.empty()) {
    const auto preds = predict(model, val_set);
    std::vector<Label> pl, truth;
    std::vector<double> sc;
    for (std::size_t i = 0; i < preds.size(); ++i) {
      pl.push_back(preds[i].label);
      sc.push_back(preds[i].score);
      truth.push_back(*val_set[i].label);
    }
    val_info["accuracy"] = accuracy(pl, truth);
    const auto vp = (y_val.array() > 0.5).count();
    if (vp > 0 && vp < y_val.size()) val_info["auc"] = auc(sc, truth);
  }

  model.manifest = {{"spec", model.spec.to_json()},
                    {"mode", std::string(to_string(model.mode))},
                    {"channels", model.channels.to_string()},
                    {"input_dim", model.input_dim},
                    {"reduction", reduction_info},
                    {"fitted_on", "train"},
                    {"train", split_summary(train_set, y)},
                    {"validation", val_info},
                    {"fit", model.learner->fit_summary()}};
  return model;
}

std::vector<Prediction> predict(const TrainedModel& model,
                                const std::vector<FeatureVector>& features) {
  if (features.empty()) return {};
  check_shape(features, model.mode, model.channels, model.input_dim, "input");
  const Eigen::VectorXd s = model.scores(to_matrix(features));
  std::vector<Prediction> out(features.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i].score = s(static_cast<Eigen::Index>(i));
    out[i].label = label_for_score(out[i].score);
  }
  return out;
}

namespace {

constexpr char kParamsMagic[4] = {'O', 'O', 'C', 'P'};
constexpr std::uint32_t kParamsVersion = 1;

std::string dump(const json& j) { return j.dump(2) + "\n"; }

json read_json(const std::filesystem::path& p) {
  try {
    return json::parse(read_file_bytes(p));
  } catch (const json::exception& e) {
    throw ModelFormatError("'" + p.string() + "': " + e.what());
  }
}

}  // namespace

void save_model(const TrainedModel& model, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const json spec = {{"format", "oocd-model"},
                     {"version", kParamsVersion},
                     {"spec", model.spec.to_json()},
                     {"mode", std::string(to_string(model.mode))},
                     {"channels", model.channels.to_string()},
                     {"input_dim", model.input_dim}};
  write_file_bytes(dir / "spec.json", dump(spec));

  BinaryWriter out;
  for (char c : kParamsMagic) out.u8(static_cast<std::uint8_t>(c));
  out.u32(kParamsVersion);
  out.u8(static_cast<std::uint8_t>(model.spec.kind));
  out.u8(model.standardizer.empty() ? 0 : 1);
  if (!model.standardizer.empty()) {
    out.vector(model.standardizer.mean);
    out.vector(model.standardizer.scale);
  }
  model.learner->save(out);
  write_file_bytes(dir / "params.bin", out.bytes());

  const auto proj = dir / "projection.bin";
  if (model.reduction) {
    save_projection(*model.reduction, proj);
  } else {
    std::filesystem::remove(proj);
  }
  write_file_bytes(dir / "manifest.json", dump(model.manifest));
}

TrainedModel load_model(const std::filesystem::path& dir) {
  if (!std::filesystem::exists(dir / "spec.json") ||
      !std::filesystem::exists(dir / "params.bin")) {
    throw MissingArtifact("no model at '" + dir.string() + "'");
  }
  const json spec = read_json(dir / "spec.json");
  TrainedModel model;
  try {
    if (spec.at("format") != "oocd-model" || spec.at("version") != kParamsVersion) {
      throw ModelFormatError("unsupported model format in '" + dir.string() + "'");
    }
    model.spec = ClassifierSpec::from_json(spec.at("spec"));
    const auto mode = parse_feature_mode(spec.at("mode").get<std::string>());
    if (!mode) throw ModelFormatError("unknown feature mode");
    model.mode = *mode;
    model.channels = ChannelSet::parse(spec.at("channels").get<std::string>());
    model.input_dim = spec.at("input_dim").get<std::size_t>();
  } catch (const json::exception& e) {
    throw ModelFormatError("'" + (dir / "spec.json").string() + "': " + e.what());
  }
  if (model.input_dim != expected_feature_length(model.mode, model.channels)) {
    throw ModelFormatError("input_dim does not match mode and channels");
  }

  BinaryReader in(read_file_bytes(dir / "params.bin"));
  for (char c : kParamsMagic) {
    if (in.u8() != static_cast<std::uint8_t>(c)) throw ModelFormatError("params.bin: bad magic");
  }
  if (in.u32() != kParamsVersion) throw ModelFormatError("params.bin: unsupported version");
  if (in.u8() != static_cast<std::uint8_t>(model.spec.kind)) {
    throw ModelFormatError("params.bin: classifier kind differs from spec.json");
  }
  if (in.u8() != 0) {
    model.standardizer.mean = in.vector();
    model.standardizer.scale = in.vector();
  }
  model.learner = make_learner(model.spec, model.mode);
  model.learner->load(in);
  if (!in.at_end()) throw ModelFormatError("params.bin: trailing bytes");

  if (std::filesystem::exists(dir / "projection.bin")) {
    model.reduction = load_projection(dir / "projection.bin");
    if (static_cast<std::size_t>(model.reduction->input_dim()) != model.input_dim) {
      throw ModelFormatError("projection.bin input dim differs from the model");
    }
  }
  if (std::filesystem::exists(dir / "manifest.json")) {
    model.manifest = read_json(dir / "manifest.json");
  }
  return model;
}

}  // namespace oocd

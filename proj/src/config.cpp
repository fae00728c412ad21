// Copyright 2026 The oocd Authors.
// SPDX-License-Identifier: Apache-2.0

#include "oocd/config.hpp"

#include <set>

#include "oocd/binary_io.hpp"
#include "oocd/error.hpp"
#include "oocd/hash.hpp"

namespace oocd {

using nlohmann::json;

namespace {

// Typed, strict access to one config object: every key read is recorded and
// finish() rejects the rest.
class Section {
 public:
  Section(const json& j, std::string name) : name_(std::move(name)) {
    if (j.is_null()) {
      j_ = json::object();
    } else if (!j.is_object()) {
      throw ConfigError("'" + name_ + "' must be an object");
    } else {
      j_ = j;
    }
  }

  template <typename T>
  T get(const std::string& key, T fallback) {
    seen_.insert(key);
    if (!j_.contains(key) || j_.at(key).is_null()) return fallback;
    try {
      return j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError("'" + name_ + "." + key + "' has the wrong type");
    }
  }

  const json* raw(const std::string& key) {
    seen_.insert(key);
    if (!j_.contains(key) || j_.at(key).is_null()) return nullptr;
    return &j_.at(key);
  }

  Section sub(const std::string& key) {
    seen_.insert(key);
    return Section(j_.contains(key) ? j_.at(key) : json(nullptr), name_ + "." + key);
  }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.count(k)) throw ConfigError("unknown key '" + name_ + "." + k + "'");
    }
  }

  const std::string& name() const { return name_; }

 private:
  json j_;
  std::string name_;
  std::set<std::string> seen_;
};

std::vector<ChannelSet> parse_groups(Section& s, const std::string& key,
                                     std::vector<std::string> fallback) {
  std::vector<ChannelSet> out;
  for (const auto& g : s.get<std::vector<std::string>>(key, fallback)) {
    out.push_back(ChannelSet::parse(g));
  }
  return out;
}

json groups_json(const std::vector<ChannelSet>& groups) {
  json a = json::array();
  for (const auto& g : groups) a.push_back(g.to_string());
  return a;
}

EncoderConfig parse_encoder(Section s, const std::string& default_id,
                            Modality default_modality) {
  EncoderConfig e;
  e.id = s.get<std::string>("id", default_id);
  e.backend = s.get<std::string>("backend", "mock");
  if (e.backend != "mock" && e.backend != "subprocess") {
    throw ConfigError("'" + s.name() + ".backend' must be mock or subprocess");
  }
  e.command = s.get<std::vector<std::string>>("command", {});
  if (e.backend == "subprocess" && e.command.empty()) {
    throw ConfigError("'" + s.name() + ".command' is required for subprocess encoders");
  }
  if (const json* p = s.raw("plant_from")) {
    if (!p->is_string()) throw ConfigError("'" + s.name() + ".plant_from' must be a path");
    e.plant_from = p->get<std::string>();
  }
  const auto ref = reference_encoder_spec(e.id);
  e.spec = ref.value_or(EncoderSpec{e.id, default_modality, 0});
  e.spec.encoder_id = e.id;
  e.spec.dim = s.get<std::uint32_t>("dim", e.spec.dim);
  if (const json* m = s.raw("modality")) {
    const auto parsed = m->is_string() ? parse_modality(m->get<std::string>()) : std::nullopt;
    if (!parsed) throw ConfigError("'" + s.name() + ".modality' must be joint, text or image");
    e.spec.modality = *parsed;
  }
  if (e.spec.dim == 0) {
    throw ConfigError("'" + s.name() + ".dim' is required for encoder '" + e.id + "'");
  }
  if (e.spec.modality != default_modality) {
    throw ConfigError("'" + s.name() + "' needs a " +
                      std::string(to_string(default_modality)) + " encoder");
  }
  s.finish();
  return e;
}

json encoder_json(const EncoderConfig& e) {
  return {{"id", e.id},
          {"backend", e.backend},
          {"command", e.command},
          {"plant_from", e.plant_from ? json(*e.plant_from) : json(nullptr)},
          {"modality", std::string(to_string(e.spec.modality))},
          {"dim", e.spec.dim}};
}

}  // namespace

PipelineConfig PipelineConfig::from_json(const json& j,
                                         const std::filesystem::path& base_dir) {
  PipelineConfig c;
  c.base_dir = base_dir;
  Section root(j, "config");
  c.run_dir = root.get<std::string>("run_dir", c.run_dir);
  c.seed = root.get<std::uint64_t>("seed", c.seed);

  {
    Section s = root.sub("corpus");
    c.corpus.name = s.get<std::string>("name", c.corpus.name);
    c.corpus.annotations = s.get<std::string>("annotations", c.corpus.annotations);
    c.corpus.image_root = s.get<std::string>("image_root", c.corpus.image_root);
    c.corpus.strict = s.get<bool>("strict", c.corpus.strict);
    c.corpus.check_images = s.get<bool>("check_images", c.corpus.check_images);
    if (const json* lim = s.raw("limit")) {
      if (!lim->is_number_unsigned() || lim->get<std::size_t>() == 0) {
        throw ConfigError("'corpus.limit' must be a positive integer");
      }
      c.corpus.limit = lim->get<std::size_t>();
    }
    s.finish();
  }
  {
    Section s = root.sub("generation");
    json model = json::object();
    for (const char* key : {"ddim_steps", "guidance_scale", "seed", "resolution",
                            "backend_caption", "backend_image", "caption_candidates",
                            "max_caption_tokens"}) {
      if (const json* v = s.raw(key)) model[key] = *v;
    }
    try {
      c.generation.model = GenerationConfig::from_json(model);
    } catch (const json::exception& e) {
      throw ConfigError(std::string("generation: ") + e.what());
    }
    c.generation.model.validate();
    c.generation.caption_command = s.get<std::vector<std::string>>("caption_command", {});
    c.generation.image_command = s.get<std::vector<std::string>>("image_command", {});
    if (const json* d = s.raw("cache_dir")) {
      if (!d->is_string()) throw ConfigError("'generation.cache_dir' must be a path");
      c.generation.cache_dir = d->get<std::string>();
    }
    c.generation.workers = s.get<unsigned>("workers", c.generation.workers);
    c.generation.max_failure_fraction =
        s.get<double>("max_failure_fraction", c.generation.max_failure_fraction);
    if (c.generation.max_failure_fraction < 0 || c.generation.max_failure_fraction > 1) {
      throw ConfigError("'generation.max_failure_fraction' must be in [0, 1]");
    }
    if (c.generation.model.backend_caption != "mock-caption" &&
        c.generation.caption_command.empty()) {
      throw ConfigError("captioner '" + c.generation.model.backend_caption +
                        "' needs generation.caption_command");
    }
    if (c.generation.model.backend_image != "mock-image" &&
        c.generation.image_command.empty()) {
      throw ConfigError("image generator '" + c.generation.model.backend_image +
                        "' needs generation.image_command");
    }
    s.finish();
  }
  {
    Section s = root.sub("encoders");
    c.encoders.joint = parse_encoder(s.sub("joint"), "clip-vit-b32", Modality::kJoint);
    c.encoders.text = parse_encoder(s.sub("text"), "sbert-all-mpnet-base-v2", Modality::kText);
    c.encoders.image = parse_encoder(s.sub("image"), "vit-l-16", Modality::kImage);
    s.finish();
    if (c.encoders.joint.spec.dim != kJointDim || c.encoders.text.spec.dim != kTextDim ||
        c.encoders.image.spec.dim != kImageDim) {
      throw ConfigError("encoder dims must be joint 512, text 768, image 1024");
    }
  }
  {
    Section s = root.sub("features");
    c.features.similarity_groups =
        parse_groups(s, "similarity_groups", {"clip+sbert", "clip+vit", "clip+sbert+vit"});
    c.features.feature_map_groups =
        parse_groups(s, "feature_map_groups", {"clip", "clip+sbert", "clip+sbert+vit"});
    c.features.reduced_groups = parse_groups(s, "reduced_groups", {"clip+sbert+vit"});
    c.features.reduce_to = s.get<Eigen::Index>("reduce_to", c.features.reduce_to);
    if (c.features.reduce_to < 1) throw ConfigError("'features.reduce_to' must be >= 1");
    s.finish();
  }
  {
    Section s = root.sub("classifiers");
    std::vector<std::string> defaults;
    for (auto k : kLearnedKinds) defaults.emplace_back(to_string(k));
    for (const auto& name : s.get<std::vector<std::string>>("kinds", defaults)) {
      const auto k = parse_classifier_kind(name);
      if (!k || *k == ClassifierKind::kThreshold) {
        throw ConfigError("unknown classifier kind '" + name + "'");
      }
      c.classifiers.kinds.push_back(*k);
    }
    if (const json* h = s.raw("hyperparameters")) {
      if (!h->is_object()) throw ConfigError("'classifiers.hyperparameters' must be an object");
      for (const auto& [name, v] : h->items()) {
        if (!parse_classifier_kind(name)) {
          throw ConfigError("hyperparameters for unknown kind '" + name + "'");
        }
      }
      c.classifiers.hyperparameters = *h;
    }
    c.classifiers.threshold_baseline =
        s.get<bool>("threshold_baseline", c.classifiers.threshold_baseline);
    c.classifiers.workers = s.get<unsigned>("workers", c.classifiers.workers);
    (void)s.raw("resolved_hyperparameters");  // written by to_json, derived
    s.finish();
    // Validate overrides now rather than at train time.
    for (auto k : c.classifiers.kinds) {
      (void)c.classifier_spec(k).with_defaults(FeatureMode::kSimilarity);
    }
    if (c.classifiers.threshold_baseline) {
      (void)c.classifier_spec(ClassifierKind::kThreshold).with_defaults(FeatureMode::kSimilarity);
    }
  }
  {
    Section s = root.sub("evaluation");
    if (const json* splits = s.raw("splits")) {
      c.evaluation.splits.clear();
      if (!splits->is_array()) throw ConfigError("'evaluation.splits' must be an array");
      for (const auto& v : *splits) {
        const auto sp = v.is_string() ? parse_split(v.get<std::string>()) : std::nullopt;
        if (!sp) throw ConfigError("unknown split in 'evaluation.splits'");
        c.evaluation.splits.push_back(*sp);
      }
    }
    if (const json* formats = s.raw("formats")) {
      c.evaluation.formats.clear();
      if (!formats->is_array()) throw ConfigError("'evaluation.formats' must be an array");
      for (const auto& v : *formats) {
        const auto f = v.is_string() ? parse_report_format(v.get<std::string>()) : std::nullopt;
        if (!f) throw ConfigError("unknown report format in 'evaluation.formats'");
        c.evaluation.formats.push_back(*f);
      }
    }
    s.finish();
  }
  root.finish();
  return c;
}

PipelineConfig PipelineConfig::load(const std::filesystem::path& file) {
  std::string text;
  try {
    text = read_file_bytes(file);
  } catch (const IoError& e) {
    throw ConfigError(e.what());
  }
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError("'" + file.string() + "' is not valid JSON: " + e.what());
  }
  return from_json(j, file.parent_path());
}

json PipelineConfig::to_json() const {
  json gen = generation.model.to_json();
  gen["caption_command"] = generation.caption_command;
  gen["image_command"] = generation.image_command;
  gen["cache_dir"] = generation.cache_dir ? json(*generation.cache_dir) : json(nullptr);
  gen["workers"] = generation.workers;
  gen["max_failure_fraction"] = generation.max_failure_fraction;

  json kinds = json::array();
  for (auto k : classifiers.kinds) kinds.push_back(std::string(to_string(k)));
  json resolved = json::object();
  for (auto k : classifiers.kinds) {
    resolved[std::string(to_string(k))] = {
        {"similarity", classifier_spec(k).with_defaults(FeatureMode::kSimilarity).hyperparameters},
        {"feature_map", classifier_spec(k).with_defaults(FeatureMode::kFeatureMap).hyperparameters}};
  }
  if (classifiers.threshold_baseline) {
    resolved["threshold"] = {
        {"similarity",
         classifier_spec(ClassifierKind::kThreshold).with_defaults(FeatureMode::kSimilarity).hyperparameters}};
  }
  json splits = json::array();
  for (auto s : evaluation.splits) splits.push_back(std::string(to_string(s)));
  json formats = json::array();
  for (auto f : evaluation.formats) formats.push_back(std::string(to_string(f)));

  return {{"run_dir", run_dir},
          {"seed", seed},
          {"corpus",
           {{"name", corpus.name},
            {"annotations", corpus.annotations},
            {"image_root", corpus.image_root},
            {"strict", corpus.strict},
            {"check_images", corpus.check_images},
            {"limit", corpus.limit ? json(*corpus.limit) : json(nullptr)}}},
          {"generation", gen},
          {"encoders",
           {{"joint", encoder_json(encoders.joint)},
            {"text", encoder_json(encoders.text)},
            {"image", encoder_json(encoders.image)}}},
          {"features",
           {{"similarity_groups", groups_json(features.similarity_groups)},
            {"feature_map_groups", groups_json(features.feature_map_groups)},
            {"reduced_groups", groups_json(features.reduced_groups)},
            {"reduce_to", features.reduce_to}}},
          {"classifiers",
           {{"kinds", kinds},
            {"hyperparameters", classifiers.hyperparameters},
            {"resolved_hyperparameters", resolved},
            {"threshold_baseline", classifiers.threshold_baseline},
            {"workers", classifiers.workers}}},
          {"evaluation", {{"splits", splits}, {"formats", formats}}}};
}

std::string PipelineConfig::fingerprint() const {
  return to_hex64(fnv1a64(to_json().dump()));
}

std::filesystem::path PipelineConfig::resolve(const std::string& path) const {
  const std::filesystem::path p(path);
  return p.is_absolute() ? p : base_dir / p;
}

ClassifierSpec PipelineConfig::classifier_spec(ClassifierKind kind) const {
  ClassifierSpec s;
  s.kind = kind;
  s.seed = seed;
  const std::string name(to_string(kind));
  if (classifiers.hyperparameters.contains(name)) {
    s.hyperparameters = classifiers.hyperparameters.at(name);
  }
  return s;
}

}  // namespace oocd

// Copyright 2026 The oocd Authors.
// SPDX-License-Identifier: Apache-2.0

#include "oocd/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "json.hpp"
#include "oocd/error.hpp"
#include "oocd/rng.hpp"

namespace oocd {

using nlohmann::json;

std::string_view to_string(Label l) noexcept {
  return l == Label::kFalsified ? "falsified" : "pristine";
}

std::string_view to_string(Split s) noexcept {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "?";
}

std::optional<Split> parse_split(std::string_view text) noexcept {
  if (text == "train") return Split::kTrain;
  if (text == "val") return Split::kVal;
  if (text == "test") return Split::kTest;
  return std::nullopt;
}

std::string LoadResult::summary() const {
  std::ostringstream out;
  for (const auto& issue : issues) {
    out << "LINE " << issue.line << ": " << issue.code << ": " << issue.detail
        << '\n';
  }
  return out.str();
}

namespace {

bool is_blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) {
    return c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '\f' ||
           c == '\v';
  });
}

const std::string kKnownKeys[] = {"id", "image_path", "caption", "falsified",
                                  "split"};

// Parses one row; returns an error detail instead of throwing so the caller
// can apply the strict/lenient policy.
std::optional<std::string> parse_row(const std::string& line,
                                     const std::filesystem::path& image_root,
                                     Sample& out) {
  json row;
  try {
    row = json::parse(line);
  } catch (const json::parse_error& e) {
    return std::string("malformed JSON: ") + e.what();
  }
  if (!row.is_object()) return "row is not a JSON object";

  auto string_field = [&](const char* key,
                          std::string& dest) -> std::optional<std::string> {
    auto it = row.find(key);
    if (it == row.end()) return std::string("missing field '") + key + "'";
    if (!it->is_string()) return std::string("field '") + key + "' is not a string";
    dest = it->get<std::string>();
    return std::nullopt;
  };

  if (auto err = string_field("id", out.id)) return err;
  if (out.id.empty()) return "empty id";
  if (auto err = string_field("image_path", out.relative_image_path)) return err;
  if (out.relative_image_path.empty()) return "empty image_path";
  if (auto err = string_field("caption", out.caption)) return err;
  if (is_blank(out.caption)) return "caption is empty after trimming whitespace";

  auto fal = row.find("falsified");
  if (fal == row.end()) return "missing field 'falsified'";
  if (!fal->is_boolean()) return "field 'falsified' is not a boolean";
  out.label = fal->get<bool>() ? Label::kFalsified : Label::kPristine;

  std::string split_text;
  if (auto err = string_field("split", split_text)) return err;
  auto split = parse_split(split_text);
  if (!split) return "invalid split '" + split_text + "'";
  out.split = *split;

  json extra = json::object();
  for (auto it = row.begin(); it != row.end(); ++it) {
    if (std::find(std::begin(kKnownKeys), std::end(kKnownKeys), it.key()) ==
        std::end(kKnownKeys)) {
      extra[it.key()] = it.value();
    }
  }
  out.extra_json = extra.dump();
  out.image_path = image_root / out.relative_image_path;
  return std::nullopt;
}

bool readable_file(const std::filesystem::path& p) {
  std::error_code ec;
  if (!std::filesystem::is_regular_file(p, ec)) return false;
  std::ifstream in(p, std::ios::binary);
  return static_cast<bool>(in);
}

}  // namespace

LoadResult load_annotations(const std::filesystem::path& path,
                            const std::filesystem::path& image_root,
                            const LoadOptions& options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open annotation file '" + path.string() + "'");

  LoadResult result;
  std::unordered_set<std::string> seen_ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (is_blank(line)) continue;

    Sample sample;
    auto err = parse_row(line, image_root, sample);
    if (!err && !seen_ids.insert(sample.id).second) {
      err = "duplicate id '" + sample.id + "'";
    }
    if (err) {
      if (options.strict) throw ParseError(line_no, *err);
      result.issues.push_back({line_no, "ParseError", *err});
      continue;
    }
    if (options.check_images && !readable_file(sample.image_path)) {
      std::string detail = "image '" + sample.image_path.string() +
                           "' does not resolve to a readable file";
      if (options.strict) {
        throw MissingImage("line " + std::to_string(line_no) + ": " + detail);
      }
      result.issues.push_back({line_no, "MissingImage", detail});
      continue;
    }
    result.samples.push_back(std::move(sample));
  }
  return result;
}

std::string annotation_line(const Sample& sample) {
  json row = json::parse(sample.extra_json);
  row["id"] = sample.id;
  row["image_path"] = sample.relative_image_path;
  row["caption"] = sample.caption;
  row["falsified"] = sample.label == Label::kFalsified;
  row["split"] = std::string(to_string(sample.split));
  return row.dump();
}

void write_annotations(const std::vector<Sample>& samples,
                       const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  for (const auto& s : samples) out << annotation_line(s) << '\n';
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

CorpusManifest summarize(const std::vector<Sample>& samples, std::string name,
                         std::filesystem::path root) {
  CorpusManifest m;
  m.name = std::move(name);
  m.root = std::move(root);
  std::array<std::size_t, kNumSplits> falsified{};
  for (const auto& s : samples) {
    const auto k = static_cast<std::size_t>(s.split);
    ++m.counts[k];
    if (s.label == Label::kFalsified) ++falsified[k];
  }
  for (std::size_t k = 0; k < kNumSplits; ++k) {
    m.class_balance[k] =
        m.counts[k] == 0 ? 0.0
                         : static_cast<double>(falsified[k]) /
                               static_cast<double>(m.counts[k]);
  }
  return m;
}

std::vector<Sample> subsample(const std::vector<Sample>& samples, std::size_t n,
                              std::uint64_t seed) {
  if (n > samples.size()) {
    throw InsufficientSamples("requested " + std::to_string(n) +
                              " samples but only " +
                              std::to_string(samples.size()) + " available");
  }
  std::vector<std::size_t> by_class[2];
  for (std::size_t i = 0; i < samples.size(); ++i) {
    by_class[to_int(samples[i].label)].push_back(i);
  }
  const std::size_t total = samples.size();
  // Proportional quota with round-half-up in integer arithmetic.
  std::size_t quota_f =
      total == 0 ? 0 : (2 * n * by_class[1].size() + total) / (2 * total);
  quota_f = std::min(quota_f, by_class[1].size());
  std::size_t quota_p = n - quota_f;
  if (quota_p > by_class[0].size()) {
    quota_p = by_class[0].size();
    quota_f = n - quota_p;
  }

  Rng rng(seed);
  std::vector<std::size_t> chosen;
  chosen.reserve(n);
  const std::size_t quotas[2] = {quota_p, quota_f};
  for (int c = 0; c < 2; ++c) {
    auto pool = by_class[c];
    rng.shuffle(pool);
    chosen.insert(chosen.end(), pool.begin(),
                  pool.begin() + static_cast<std::ptrdiff_t>(quotas[c]));
  }
  std::sort(chosen.begin(), chosen.end());

  std::vector<Sample> out;
  out.reserve(n);
  for (std::size_t i : chosen) out.push_back(samples[i]);
  return out;
}

std::vector<Sample> filter_split(const std::vector<Sample>& samples,
                                 Split split) {
  std::vector<Sample> out;
  for (const auto& s : samples) {
    if (s.split == split) out.push_back(s);
  }
  return out;
}

namespace {

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(0, path.string() + ": " + e.what());
  }
}

std::string id_text(const json& v) {
  return v.is_string() ? v.get<std::string>() : v.dump();
}

}  // namespace

std::vector<Sample> convert_newsclippings(
    const std::array<std::filesystem::path, kNumSplits>& split_files,
    const std::filesystem::path& visual_news_data,
    const std::filesystem::path& image_root) {
  struct NewsItem {
    std::string caption;
    std::string image_path;
  };
  std::unordered_map<std::string, NewsItem> items;
  const json data = read_json_file(visual_news_data);
  if (!data.is_array()) {
    throw ParseError(0, visual_news_data.string() + ": expected a JSON array");
  }
  for (const auto& entry : data) {
    if (!entry.contains("id")) continue;
    items[id_text(entry["id"])] = {entry.value("caption", std::string()),
                                   entry.value("image_path", std::string())};
  }

  std::vector<Sample> out;
  std::unordered_map<std::string, int> id_uses;
  for (std::size_t k = 0; k < kNumSplits; ++k) {
    const json doc = read_json_file(split_files[k]);
    const auto& rows = doc.contains("annotations") ? doc["annotations"] : doc;
    std::size_t row_no = 0;
    for (const auto& row : rows) {
      ++row_no;
      const std::string caption_id = id_text(row.at("id"));
      const std::string image_id = id_text(row.at("image_id"));
      auto cap = items.find(caption_id);
      auto img = items.find(image_id);
      if (cap == items.end() || img == items.end()) {
        throw ParseError(row_no, split_files[k].string() +
                                     ": unknown VisualNews id " +
                                     (cap == items.end() ? caption_id : image_id));
      }
      Sample s;
      s.id = caption_id + "_" + image_id;
      if (int uses = id_uses[s.id]++; uses > 0) s.id += "_" + std::to_string(uses);
      s.caption = cap->second.caption;
      s.relative_image_path = img->second.image_path;
      s.image_path = image_root / s.relative_image_path;
      s.label = row.value("falsified", false) ? Label::kFalsified
                                              : Label::kPristine;
      s.split = static_cast<Split>(k);
      json extra = json::object();
      for (const char* key : {"similarity_score", "source_dataset"}) {
        if (row.contains(key)) extra[key] = row[key];
      }
      s.extra_json = extra.dump();
      out.push_back(std::move(s));
    }
  }
  return out;
}

}  // namespace oocd

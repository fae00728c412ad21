// Copyright 2026 The oocd Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace oocd {

// Ground truth. The numeric encoding is fixed system-wide so that every score
// is "probability of falsified".
enum class Label : std::uint8_t { kPristine = 0, kFalsified = 1 };

inline constexpr int to_int(Label l) noexcept { return static_cast<int>(l); }
inline constexpr Label label_from_int(int v) noexcept {
  return v != 0 ? Label::kFalsified : Label::kPristine;
}
std::string_view to_string(Label l) noexcept;

enum class Split : std::uint8_t { kTrain = 0, kVal = 1, kTest = 2 };
inline constexpr std::size_t kNumSplits = 3;

std::string_view to_string(Split s) noexcept;
std::optional<Split> parse_split(std::string_view text) noexcept;

struct Sample {
  std::string id;
  // Resolved path (image_root joined with the annotation's relative path).
  std::filesystem::path image_path;
  // Path exactly as written in the annotation file.
  std::string relative_image_path;
  std::string caption;
  Label label = Label::kPristine;
  Split split = Split::kTrain;
  // Unrecognized keys of the source row, as a compact JSON object.
  std::string extra_json = "{}";

  bool operator==(const Sample&) const = default;
};

struct ValidationIssue {
  std::size_t line = 0;  // 1-based line in the annotation file
  std::string code;      // "ParseError" | "MissingImage"
  std::string detail;
};

struct LoadOptions {
  bool strict = false;       // throw on the first defect instead of reporting
  bool check_images = true;  // require image_path to resolve to a readable file
};

struct LoadResult {
  std::vector<Sample> samples;
  std::vector<ValidationIssue> issues;

  // One line per defect: "LINE <n>: <code>: <detail>".
  std::string summary() const;
};

// Reads newline-delimited JSON annotations. Defective rows are rejected and
// reported in LoadResult::issues; in strict mode the first defect throws
// ParseError or MissingImage instead.
LoadResult load_annotations(const std::filesystem::path& path,
                            const std::filesystem::path& image_root,
                            const LoadOptions& options = {});

// Writes samples in the annotation format, with image paths relative to the
// original root, preserving unknown keys.
void write_annotations(const std::vector<Sample>& samples,
                       const std::filesystem::path& path);
std::string annotation_line(const Sample& sample);

struct CorpusManifest {
  std::string name;
  std::filesystem::path root;
  std::array<std::size_t, kNumSplits> counts{};
  // Falsified fraction per split; 0 for an empty split.
  std::array<double, kNumSplits> class_balance{};

  std::size_t total() const noexcept {
    return counts[0] + counts[1] + counts[2];
  }
};

CorpusManifest summarize(const std::vector<Sample>& samples,
                         std::string name = {},
                         std::filesystem::path root = {});

// Stratified draw of n samples. Per-class quotas follow the input class
// proportions (rounded), so balance is preserved to within one sample per
// class. Selected samples keep their input order. Throws InsufficientSamples
// when n exceeds the input size.
std::vector<Sample> subsample(const std::vector<Sample>& samples, std::size_t n,
                              std::uint64_t seed);

std::vector<Sample> filter_split(const std::vector<Sample>& samples, Split split);

// Converts the NewsCLIPpings layout (three split files with
// {"annotations": [{id, image_id, falsified, ...}]} plus the VisualNews
// data.json listing {id, caption, image_path}) into samples.
std::vector<Sample> convert_newsclippings(
    const std::array<std::filesystem::path, kNumSplits>& split_files,
    const std::filesystem::path& visual_news_data,
    const std::filesystem::path& image_root);

}  // namespace oocd

// Copyright 2026 The oocd Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "oocd/classifier.hpp"
#include "oocd/corpus.hpp"
#include "oocd/features.hpp"

namespace oocd {

struct ReportRow {
  ClassifierKind kind = ClassifierKind::kMlp;
  FeatureMode mode = FeatureMode::kSimilarity;
  ChannelSet channels;
  std::optional<Eigen::Index> reduced_to;  // feature maps after projection
  double accuracy = 0.0;                   // percent, full precision
  std::optional<double> auc;               // percent; absent for one-class splits
  std::string model;                       // model directory, relative to the run
};

// Published accuracies of earlier systems on the same corpus, shown for
// orientation only; nothing here is recomputed.
struct ReferenceRow {
  std::string method;
  int year = 0;
  double accuracy = 0.0;
};
const std::vector<ReferenceRow>& published_reference_rows();

struct EvaluationReport {
  std::string run_id;
  Split split = Split::kTest;
  std::string config_fingerprint;
  std::size_t samples = 0;
  std::vector<ReportRow> rows;
};

enum class ReportFormat : std::uint8_t { kMarkdown, kCsv, kJson };
std::string_view to_string(ReportFormat f) noexcept;
std::string_view file_extension(ReportFormat f) noexcept;
std::optional<ReportFormat> parse_report_format(std::string_view text) noexcept;

// Markdown: one table per feature mode, classifiers as rows and channel
// groups as column groups (ACC and AUC per group for similarity features,
// ACC per group for feature maps), then the published reference rows.
// CSV: a header and one line per result row, with the markdown's rounded
// numbers. JSON: full-precision values plus the reference rows.
// Throws EmptyInput when the report has no rows.
std::string render_report(const EvaluationReport& report, ReportFormat format);

}  // namespace oocd

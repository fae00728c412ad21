// Copyright 2026 The oocd Authors.
// SPDX-License-Identifier: Apache-2.0

#include "oocd/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <tuple>

#include "oocd/error.hpp"

namespace oocd {

using nlohmann::json;

const std::vector<ReferenceRow>& published_reference_rows() {
  static const std::vector<ReferenceRow> rows = {
      {"Luo et al.", 2021, 65.9},
      {"Huang et al.", 2022, 65.2},
      {"Abdelnabi et al.", 2022, 66.1},
      {"Zhang et al.", 2023, 62.8},
      {"Generation-assisted similarity (original publication)", 2023, 68.0},
  };
  return rows;
}

std::string_view to_string(ReportFormat f) noexcept {
  switch (f) {
    case ReportFormat::kMarkdown: return "md";
    case ReportFormat::kCsv: return "csv";
    case ReportFormat::kJson: return "json";
  }
  return "md";
}

std::string_view file_extension(ReportFormat f) noexcept { return to_string(f); }

std::optional<ReportFormat> parse_report_format(std::string_view text) noexcept {
  if (text == "md" || text == "markdown") return ReportFormat::kMarkdown;
  if (text == "csv") return ReportFormat::kCsv;
  if (text == "json") return ReportFormat::kJson;
  return std::nullopt;
}

namespace {

std::string channel_title(ChannelSet c) {
  std::string out;
  auto add = [&](Channel ch, const char* name) {
    if (!c.has(ch)) return;
    if (!out.empty()) out += "+";
    out += name;
  };
  add(Channel::kClip, "CLIP");
  add(Channel::kSbert, "SBERT");
  add(Channel::kVit, "ViT");
  return out;
}

// Column group: channels plus optional projection size.
struct Group {
  ChannelSet channels;
  std::optional<Eigen::Index> reduced_to;

  auto key() const {
    return std::make_tuple(reduced_to.has_value(), channels.size(), channels.bits(),
                           reduced_to.value_or(0));
  }
  bool operator<(const Group& o) const { return key() < o.key(); }
  bool operator==(const Group& o) const { return key() == o.key(); }

  std::string title() const {
    std::string t = channel_title(channels);
    if (reduced_to) t += " (PCA " + std::to_string(*reduced_to) + ")";
    return t;
  }
};

std::string whole(double percent) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.0f", std::round(percent));
  return buf;
}

std::string one_decimal(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f", v);
  return buf;
}

std::vector<ReportRow> ordered(const std::vector<ReportRow>& rows) {
  std::vector<ReportRow> out = rows;
  std::stable_sort(out.begin(), out.end(), [](const ReportRow& a, const ReportRow& b) {
    const Group ga{a.channels, a.reduced_to}, gb{b.channels, b.reduced_to};
    return std::make_tuple(a.mode, a.kind, ga.key()) <
           std::make_tuple(b.mode, b.kind, gb.key());
  });
  return out;
}

void markdown_table(std::string& out, const std::vector<ReportRow>& rows,
                    FeatureMode mode) {
  std::vector<Group> groups;
  std::vector<ClassifierKind> kinds;
  std::map<std::pair<ClassifierKind, std::tuple<bool, std::size_t, std::uint8_t, Eigen::Index>>,
           const ReportRow*>
      cell;
  for (const auto& r : rows) {
    if (r.mode != mode) continue;
    const Group g{r.channels, r.reduced_to};
    if (std::find(groups.begin(), groups.end(), g) == groups.end()) groups.push_back(g);
    if (std::find(kinds.begin(), kinds.end(), r.kind) == kinds.end()) kinds.push_back(r.kind);
    cell[{r.kind, g.key()}] = &r;
  }
  if (groups.empty()) return;
  std::sort(groups.begin(), groups.end());
  std::sort(kinds.begin(), kinds.end());
  const bool with_auc = mode == FeatureMode::kSimilarity;

  out += mode == FeatureMode::kSimilarity ? "## Similarity features\n\n"
                                          : "## Feature maps\n\n";
  out += "| Model |";
  std::string rule = "|---|";
  for (const auto& g : groups) {
    out += " " + g.title() + " ACC |";
    rule += "---:|";
    if (with_auc) {
      out += " " + g.title() + " AUC |";
      rule += "---:|";
    }
  }
  out += "\n" + rule + "\n";
  for (auto k : kinds) {
    out += "| " + std::string(display_name(k)) + " |";
    for (const auto& g : groups) {
      auto it = cell.find({k, g.key()});
      const ReportRow* r = it == cell.end() ? nullptr : it->second;
      out += " " + (r ? whole(r->accuracy) : std::string("-")) + " |";
      if (with_auc) {
        out += " " + (r && r->auc ? whole(*r->auc) : std::string("-")) + " |";
      }
    }
    out += "\n";
  }
  out += "\n";
}

std::string render_markdown(const EvaluationReport& report) {
  std::string out = "# Evaluation report\n\n";
  out += "- run: " + report.run_id + "\n";
  out += "- split: " + std::string(to_string(report.split)) + " (" +
         std::to_string(report.samples) + " samples)\n";
  out += "- config: " + report.config_fingerprint + "\n";
  out += "- metrics in percent, rounded to whole numbers\n\n";
  markdown_table(out, report.rows, FeatureMode::kSimilarity);
  markdown_table(out, report.rows, FeatureMode::kFeatureMap);
  out += "## Reference (published)\n\n";
  out += "Accuracies reported in the literature on the full corpus; not recomputed here.\n\n";
  out += "| Method | Year | Accuracy |\n|---|---:|---:|\n";
  for (const auto& r : published_reference_rows()) {
    out += "| " + r.method + " | " + std::to_string(r.year) + " | " +
           one_decimal(r.accuracy) + " |\n";
  }
  return out;
}

std::string render_csv(const EvaluationReport& report) {
  std::string out = "mode,channels,reduced_to,model,accuracy,auc,model_dir\n";
  for (const auto& r : ordered(report.rows)) {
    out += std::string(to_string(r.mode)) + "," + r.channels.to_string() + "," +
           (r.reduced_to ? std::to_string(*r.reduced_to) : std::string()) + "," +
           std::string(display_name(r.kind)) + "," + whole(r.accuracy) + "," +
           (r.auc ? whole(*r.auc) : std::string()) + "," + r.model + "\n";
  }
  return out;
}

std::string render_json(const EvaluationReport& report) {
  json rows = json::array();
  for (const auto& r : ordered(report.rows)) {
    rows.push_back({{"kind", std::string(to_string(r.kind))},
                    {"model", std::string(display_name(r.kind))},
                    {"mode", std::string(to_string(r.mode))},
                    {"channels", r.channels.to_string()},
                    {"reduced_to", r.reduced_to ? json(*r.reduced_to) : json(nullptr)},
                    {"accuracy", r.accuracy},
                    {"auc", r.auc ? json(*r.auc) : json(nullptr)},
                    {"model_dir", r.model}});
  }
  json refs = json::array();
  for (const auto& r : published_reference_rows()) {
    refs.push_back({{"method", r.method}, {"year", r.year}, {"accuracy", r.accuracy}});
  }
  const json doc = {{"run_id", report.run_id},
                    {"split", std::string(to_string(report.split))},
                    {"samples", report.samples},
                    {"config_fingerprint", report.config_fingerprint},
                    {"rows", rows},
                    {"reference_published", refs}};
  return doc.dump(2) + "\n";
}

}  // namespace

std::string render_report(const EvaluationReport& report, ReportFormat format) {
  if (report.rows.empty()) throw EmptyInput("report has no rows");
  switch (format) {
    case ReportFormat::kMarkdown: return render_markdown(report);
    case ReportFormat::kCsv: return render_csv(report);
    case ReportFormat::kJson: return render_json(report);
  }
  return {};
}

}  // namespace oocd

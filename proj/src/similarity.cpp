// Copyright 2026 The oocd Authors.
// SPDX-License-Identifier: Apache-2.0

#include "oocd/similarity.hpp"

#include <algorithm>
#include <functional>
#include <cmath>
#include <cstdio>

#include "oocd/error.hpp"
#include "oocd/store.hpp"

namespace oocd {

namespace {

template <typename T>
double cosine_impl(std::span<const T> u, std::span<const T> v) {
  if (u.size() != v.size()) {
    throw LengthMismatch("cosine of vectors with lengths " +
                         std::to_string(u.size()) + " and " +
                         std::to_string(v.size()));
  }
  double dot = 0.0, uu = 0.0, vv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double a = u[i];
    const double b = v[i];
    dot += a * b;
    uu += a * a;
    vv += b * b;
  }
  if (uu <= 0.0 || vv <= 0.0) throw ZeroVector("cosine of a zero vector");
  return dot / (std::sqrt(uu) * std::sqrt(vv));
}

}  // namespace

double cosine(std::span<const float> u, std::span<const float> v) {
  return cosine_impl(u, v);
}
double cosine(std::span<const double> u, std::span<const double> v) {
  return cosine_impl(u, v);
}

SimilarityTriple similarity_triple(const EmbeddingStore& store,
                                   const std::string& sample_id,
                                   const EncoderSet& encoders) {
  auto fetch = [&](Artifact a, const std::string& enc) {
    auto v = store.get(sample_id, a, enc);
    if (!v) throw MissingRecord(sample_id, to_string(a), enc);
    return std::move(*v);
  };
  SimilarityTriple t;
  t.sample_id = sample_id;
  t.clip_sim = cosine(fetch(Artifact::kImage, encoders.joint),
                      fetch(Artifact::kCaption, encoders.joint));
  t.sbert_sim = cosine(fetch(Artifact::kCaption, encoders.text),
                       fetch(Artifact::kGeneratedCaption, encoders.text));
  t.vit_sim = cosine(fetch(Artifact::kImage, encoders.image),
                     fetch(Artifact::kGeneratedImage, encoders.image));
  return t;
}

std::string_view to_string(Aggregation a) noexcept {
  switch (a) {
    case Aggregation::kAll: return "all";
    case Aggregation::kMajority: return "majority";
    case Aggregation::kMean: return "mean";
  }
  return "?";
}

std::optional<Aggregation> parse_aggregation(std::string_view text) noexcept {
  if (text == "all") return Aggregation::kAll;
  if (text == "majority") return Aggregation::kMajority;
  if (text == "mean") return Aggregation::kMean;
  return std::nullopt;
}

double aggregate_margin(std::span<const double> sims,
                        std::span<const double> thresholds,
                        Aggregation aggregation) {
  if (sims.size() != thresholds.size()) {
    throw LengthMismatch("aggregate_margin: " + std::to_string(sims.size()) +
                         " sims vs " + std::to_string(thresholds.size()) +
                         " thresholds");
  }
  if (sims.empty()) throw EmptyInput("aggregate_margin: no channels");
  std::vector<double> m(sims.size());
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = sims[i] - thresholds[i];
  switch (aggregation) {
    case Aggregation::kAll:
      return *std::min_element(m.begin(), m.end());
    case Aggregation::kMajority: {
      // A strict majority (n/2 + 1 channels) passes exactly when the
      // (n/2 + 1)-th largest margin is non-negative.
      const std::size_t need = m.size() / 2 + 1;
      std::sort(m.begin(), m.end(), std::greater<>());
      return m[need - 1];
    }
    case Aggregation::kMean: {
      double sum = 0.0;
      for (double v : m) sum += v;
      return sum / static_cast<double>(m.size());
    }
  }
  return 0.0;
}

double aggregate_margin(const std::array<double, 3>& sims,
                        const std::array<double, 3>& thresholds,
                        Aggregation aggregation) {
  return aggregate_margin(std::span<const double>(sims),
                          std::span<const double>(thresholds), aggregation);
}

Label threshold_classify(const SimilarityTriple& triple,
                         const std::array<double, 3>& thresholds,
                         Aggregation aggregation) {
  return aggregate_margin(triple.values(), thresholds, aggregation) >= 0.0
             ? Label::kPristine
             : Label::kFalsified;
}

namespace {

std::size_t count_correct(const std::vector<std::vector<double>>& rows,
                          const std::vector<Label>& truth,
                          const std::vector<double>& thresholds,
                          Aggregation aggregation) {
  std::size_t correct = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const Label pred =
        aggregate_margin(rows[i], thresholds, aggregation) >= 0.0
            ? Label::kPristine
            : Label::kFalsified;
    if (pred == truth[i]) ++correct;
  }
  return correct;
}

constexpr int kGridSteps = 200;  // -1.00, -0.99, ..., 1.00

double grid_value(int k) { return -1.0 + k / 100.0; }

}  // namespace

std::vector<double> fit_thresholds(const std::vector<std::vector<double>>& rows,
                                   const std::vector<Label>& truth,
                                   Aggregation aggregation) {
  if (rows.size() != truth.size()) {
    throw LengthMismatch("fit_thresholds: rows and labels differ in length");
  }
  if (rows.empty()) throw EmptyInput("fit_thresholds: no samples");
  const std::size_t width = rows.front().size();
  for (const auto& r : rows) {
    if (r.size() != width) throw LengthMismatch("fit_thresholds: ragged rows");
  }

  std::vector<double> best(width, 0.0);
  std::size_t best_correct = 0;
  bool first = true;
  for (int k = 0; k <= kGridSteps; ++k) {
    const std::vector<double> cand(width, grid_value(k));
    const std::size_t c = count_correct(rows, truth, cand, aggregation);
    if (first || c > best_correct) {
      best = cand;
      best_correct = c;
      first = false;
    }
  }
  for (int sweep = 0; sweep < 3; ++sweep) {
    bool improved = false;
    for (std::size_t ch = 0; ch < width; ++ch) {
      for (int k = 0; k <= kGridSteps; ++k) {
        auto cand = best;
        cand[ch] = grid_value(k);
        const std::size_t c = count_correct(rows, truth, cand, aggregation);
        if (c > best_correct) {
          best = cand;
          best_correct = c;
          improved = true;
        }
      }
    }
    if (!improved) break;
  }
  return best;
}

std::array<double, 3> fit_thresholds(const std::vector<SimilarityTriple>& triples,
                                     const std::vector<Label>& truth,
                                     Aggregation aggregation) {
  std::vector<std::vector<double>> rows;
  rows.reserve(triples.size());
  for (const auto& t : triples) {
    const auto v = t.values();
    rows.emplace_back(v.begin(), v.end());
  }
  const auto fitted = fit_thresholds(rows, truth, aggregation);
  return {fitted[0], fitted[1], fitted[2]};
}

std::string triples_csv(const std::vector<SimilarityTriple>& triples,
                        const std::vector<Label>& labels) {
  if (triples.size() != labels.size()) {
    throw LengthMismatch("triples_csv: triples and labels differ in length");
  }
  std::string out = "sample_id,clip_sim,sbert_sim,vit_sim,label\n";
  char buf[128];
  for (std::size_t i = 0; i < triples.size(); ++i) {
    const auto& t = triples[i];
    std::snprintf(buf, sizeof(buf), ",%.6f,%.6f,%.6f,%d\n", t.clip_sim,
                  t.sbert_sim, t.vit_sim, to_int(labels[i]));
    out += t.sample_id;
    out += buf;
  }
  return out;
}

}  // namespace oocd

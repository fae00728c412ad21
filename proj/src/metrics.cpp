// Copyright 2026 The oocd Authors.
// SPDX-License-Identifier: Apache-2.0

#include "oocd/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <string>
#include <vector>

#include "oocd/error.hpp"

namespace oocd {

double accuracy(std::span<const Label> predictions, std::span<const Label> truth) {
  if (predictions.size() != truth.size()) {
    throw LengthMismatch("accuracy: " + std::to_string(predictions.size()) +
                         " predictions vs " + std::to_string(truth.size()) +
                         " labels");
  }
  if (truth.empty()) throw EmptyInput("accuracy: no samples");
  std::size_t matches = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (predictions[i] == truth[i]) ++matches;
  }
  return 100.0 * static_cast<double>(matches) / static_cast<double>(truth.size());
}

double auc_from_targets(std::span<const double> scores,
                        std::span<const double> targets) {
  if (scores.size() != targets.size()) {
    throw LengthMismatch("auc: " + std::to_string(scores.size()) +
                         " scores vs " + std::to_string(targets.size()) +
                         " labels");
  }
  if (scores.empty()) throw EmptyInput("auc: no samples");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] < scores[b];
  });

  // Sum of average ranks (1-based) of the positives.
  double positive_rank_sum = 0.0;
  std::size_t positives = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) {
      if (targets[order[k]] > 0.5) {
        positive_rank_sum += avg_rank;
        ++positives;
      }
    }
    i = j;
  }
  const std::size_t negatives = n - positives;
  if (positives == 0 || negatives == 0) {
    throw SingleClassTruth("auc needs both classes; got " +
                           std::to_string(positives) + " falsified and " +
                           std::to_string(negatives) + " pristine");
  }
  const double p = static_cast<double>(positives);
  const double u = positive_rank_sum - p * (p + 1.0) / 2.0;
  return 100.0 * u / (p * static_cast<double>(negatives));
}

double auc(std::span<const double> scores, std::span<const Label> truth) {
  std::vector<double> targets(truth.size());
  for (std::size_t i = 0; i < truth.size(); ++i) targets[i] = to_int(truth[i]);
  return auc_from_targets(scores, targets);
}

}  // namespace oocd

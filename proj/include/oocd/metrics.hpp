// Copyright 2026 The oocd Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>

#include "oocd/corpus.hpp"

namespace oocd {

// 100 * matches / total. Throws EmptyInput or LengthMismatch.
double accuracy(std::span<const Label> predictions, std::span<const Label> truth);

// Area under the ROC curve as a percent, from the Mann-Whitney rank
// statistic: the chance that a random falsified sample outscores a random
// pristine one, ties counting one half. Throws SingleClassTruth, EmptyInput,
// LengthMismatch.
double auc(std::span<const double> scores, std::span<const Label> truth);

// Same statistic with 0/1 targets (falsified = 1).
double auc_from_targets(std::span<const double> scores,
                        std::span<const double> targets);

}  // namespace oocd

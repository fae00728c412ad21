// Copyright 2026 The oocd Authors.
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>

#include "oocd/error.hpp"
#include "oocd/models.hpp"

namespace oocd {

void ThresholdLearner::fit(const Eigen::MatrixXd& x_train, const Eigen::VectorXd& y_train,
                           const Eigen::MatrixXd& x_val, const Eigen::VectorXd& y_val) {
  // Thresholds come from the validation split when it has both classes.
  const bool use_val = y_val.size() > 0 && (y_val.array() > 0.5).any() &&
                       (y_val.array() <= 0.5).any();
  const Eigen::MatrixXd& x = use_val ? x_val : x_train;
  const Eigen::VectorXd& y = use_val ? y_val : y_train;
  fitted_on_ = use_val ? "validation" : "train";
  std::vector<std::vector<double>> rows(static_cast<std::size_t>(x.rows()));
  std::vector<Label> truth(rows.size());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    auto& row = rows[static_cast<std::size_t>(r)];
    row.resize(static_cast<std::size_t>(x.cols()));
    for (Eigen::Index c = 0; c < x.cols(); ++c) row[static_cast<std::size_t>(c)] = x(r, c);
    truth[static_cast<std::size_t>(r)] = label_from_int(y(r) > 0.5 ? 1 : 0);
  }
  thresholds_ = fit_thresholds(rows, truth, aggregation_);
}

Eigen::VectorXd ThresholdLearner::predict_proba(const Eigen::MatrixXd& x) const {
  if (x.cols() != static_cast<Eigen::Index>(thresholds_.size())) {
    throw ShapeMismatch("threshold model expects " +
                        std::to_string(thresholds_.size()) + " channels, got " +
                        std::to_string(x.cols()));
  }
  Eigen::VectorXd out(x.rows());
  std::vector<double> sims(thresholds_.size());
  const double below_half = std::nextafter(0.5, 0.0);
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    for (Eigen::Index c = 0; c < x.cols(); ++c) sims[static_cast<std::size_t>(c)] = x(r, c);
    const double m = aggregate_margin(sims, thresholds_, aggregation_);
    double s = std::clamp(0.5 - m / 4.0, 0.0, 1.0);
    if (m >= 0.0) s = std::min(s, below_half);
    out(r) = s;
  }
  return out;
}

void ThresholdLearner::save(BinaryWriter& out) const {
  out.u8(static_cast<std::uint8_t>(aggregation_));
  out.doubles(thresholds_);
}

void ThresholdLearner::load(BinaryReader& in) {
  const std::uint8_t a = in.u8();
  if (a > static_cast<std::uint8_t>(Aggregation::kMean)) {
    throw ModelFormatError("unknown aggregation code " + std::to_string(a));
  }
  aggregation_ = static_cast<Aggregation>(a);
  thresholds_ = in.doubles();
}

nlohmann::json ThresholdLearner::fit_summary() const {
  return {{"aggregation", std::string(to_string(aggregation_))},
          {"thresholds", thresholds_},
          {"fitted_on", fitted_on_}};
}

}  // namespace oocd

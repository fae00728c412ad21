// Copyright 2026 The oocd Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace oocd {

// Linear principal-component projection z = components * (x - mean).
struct PcaProjection {
  Eigen::VectorXd mean;        // d
  Eigen::MatrixXd components;  // k x d, orthonormal rows
  Eigen::VectorXd explained_variance;  // k, descending

  Eigen::Index input_dim() const noexcept { return mean.size(); }
  Eigen::Index output_dim() const noexcept { return components.rows(); }

  Eigen::MatrixXd transform(const Eigen::MatrixXd& x) const;
  Eigen::MatrixXd inverse_transform(const Eigen::MatrixXd& z) const;
};

struct PcaFit {
  PcaProjection projection;
  Eigen::MatrixXd transformed;  // training rows in component space
  std::vector<std::string> warnings;
};

// Fits on the given (training) rows only. target_dim must be below the input
// dim. When the centred data has rank below target_dim, the target is cut to
// the rank and a DegenerateCovariance warning is returned instead of
// throwing; rank 0 throws DegenerateCovariance.
PcaFit reduce_dimensions(const Eigen::MatrixXd& train, Eigen::Index target_dim);

// projection.bin: "PCA1" then mean, components and explained variances as
// little-endian doubles. The loaded projection transforms bit-identically.
void save_projection(const PcaProjection& projection,
                     const std::filesystem::path& file);
PcaProjection load_projection(const std::filesystem::path& file);

}  // namespace oocd

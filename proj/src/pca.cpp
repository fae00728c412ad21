// Copyright 2026 The oocd Authors.
// SPDX-License-Identifier: Apache-2.0

#include "oocd/pca.hpp"

#include <Eigen/SVD>
#include <fstream>
#include <limits>

#include "oocd/binary_io.hpp"
#include "oocd/error.hpp"

namespace oocd {

std::string read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

void write_file_bytes(const std::filesystem::path& path,
                      const std::string& bytes) {
  // Written beside the target and renamed, so readers never see a torn file.
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("cannot write '" + path.string() + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot write '" + path.string() + "': " + ec.message());
}

namespace {

constexpr char kProjectionMagic[] = "PCA1";

}  // namespace

Eigen::MatrixXd PcaProjection::transform(const Eigen::MatrixXd& x) const {
  if (x.cols() != input_dim()) {
    throw ShapeMismatch("projection expects " + std::to_string(input_dim()) +
                        " inputs, got " + std::to_string(x.cols()));
  }
  return (x.rowwise() - mean.transpose()) * components.transpose();
}

Eigen::MatrixXd PcaProjection::inverse_transform(const Eigen::MatrixXd& z) const {
  return (z * components).rowwise() + mean.transpose();
}

PcaFit reduce_dimensions(const Eigen::MatrixXd& train, Eigen::Index target_dim) {
  const Eigen::Index n = train.rows();
  const Eigen::Index d = train.cols();
  if (target_dim < 1 || target_dim >= d) {
    throw ShapeMismatch("target_dim must be in [1, " + std::to_string(d - 1) +
                        "], got " + std::to_string(target_dim));
  }
  if (n < 2) throw DegenerateCovariance("need at least 2 rows to fit a projection");

  PcaFit fit;
  const Eigen::VectorXd mean = train.colwise().mean().transpose();
  const Eigen::MatrixXd centered = train.rowwise() - mean.transpose();

  Eigen::BDCSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinV);
  const Eigen::VectorXd& s = svd.singularValues();
  const double tol = static_cast<double>(std::max(n, d)) *
                     std::numeric_limits<double>::epsilon() *
                     (s.size() ? s(0) : 0.0);
  Eigen::Index rank = 0;
  while (rank < s.size() && s(rank) > tol) ++rank;
  if (rank == 0) throw DegenerateCovariance("training data has zero variance");

  Eigen::Index k = target_dim;
  if (rank < target_dim) {
    k = rank;
    fit.warnings.push_back("DegenerateCovariance: rank " + std::to_string(rank) +
                           " < target_dim " + std::to_string(target_dim) +
                           "; reducing to " + std::to_string(rank) +
                           " components");
  }

  Eigen::MatrixXd comps = svd.matrixV().leftCols(k).transpose();
  for (Eigen::Index r = 0; r < k; ++r) {
    // Deterministic sign: largest-magnitude entry positive.
    Eigen::Index arg;
    comps.row(r).cwiseAbs().maxCoeff(&arg);
    if (comps(r, arg) < 0) comps.row(r) *= -1.0;
  }
  fit.projection.mean = mean;
  fit.projection.components = comps;
  fit.projection.explained_variance =
      s.head(k).cwiseAbs2() / static_cast<double>(n - 1);
  fit.transformed = fit.projection.transform(train);
  return fit;
}

void save_projection(const PcaProjection& projection,
                     const std::filesystem::path& file) {
  BinaryWriter w;
  w.str(kProjectionMagic);
  w.vector(projection.mean);
  w.matrix(projection.components);
  w.vector(projection.explained_variance);
  write_file_bytes(file, w.bytes());
}

PcaProjection load_projection(const std::filesystem::path& file) {
  BinaryReader r(read_file_bytes(file));
  if (r.str() != kProjectionMagic) {
    throw ModelFormatError("'" + file.string() + "' is not a projection file");
  }
  PcaProjection p;
  p.mean = r.vector();
  p.components = r.matrix();
  p.explained_variance = r.vector();
  if (!r.at_end() || p.components.cols() != p.mean.size() ||
      p.explained_variance.size() != p.components.rows()) {
    throw ModelFormatError("'" + file.string() + "' has inconsistent projection shapes");
  }
  return p;
}

}  // namespace oocd

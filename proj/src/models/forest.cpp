// Copyright 2026 The oocd Authors.
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "oocd/models.hpp"
#include "tree_common.hpp"

namespace oocd {
namespace {

struct GiniBuilder {
  const Eigen::MatrixXd& x;
  const Eigen::VectorXd& y;
  const ForestParams& params;
  int max_features;
  Rng rng;
  std::vector<Eigen::Index> features;  // partially shuffled per node
  std::vector<std::pair<double, double>> column;  // (value, target)
  Tree tree;

  std::int32_t build(std::vector<Eigen::Index>& idx, std::size_t begin,
                     std::size_t end, int depth) {
    const auto node = static_cast<std::int32_t>(tree.size());
    tree.emplace_back();
    const std::size_t n = end - begin;
    double pos = 0.0;
    for (std::size_t k = begin; k < end; ++k) pos += y(idx[k]);
    tree[static_cast<std::size_t>(node)].value = pos / static_cast<double>(n);

    const auto min_leaf = static_cast<std::size_t>(params.min_samples_leaf);
    if (pos == 0.0 || pos == static_cast<double>(n) || n < 2 * min_leaf ||
        (params.max_depth > 0 && depth >= params.max_depth)) {
      return node;
    }

    // Draw max_features distinct candidates.
    for (int f = 0; f < max_features; ++f) {
      const auto remaining = features.size() - static_cast<std::size_t>(f);
      const auto pick = static_cast<std::size_t>(f) +
                        static_cast<std::size_t>(rng.uniform_index(remaining));
      std::swap(features[static_cast<std::size_t>(f)], features[pick]);
    }

    double best_score = std::numeric_limits<double>::infinity();
    Eigen::Index best_feature = -1;
    double best_threshold = 0.0;
    for (int f = 0; f < max_features; ++f) {
      const Eigen::Index feat = features[static_cast<std::size_t>(f)];
      column.clear();
      for (std::size_t k = begin; k < end; ++k) {
        column.emplace_back(x(idx[k], feat), y(idx[k]));
      }
      std::sort(column.begin(), column.end());
      double left_pos = 0.0;
      for (std::size_t k = 1; k < n; ++k) {
        left_pos += column[k - 1].second;
        if (column[k - 1].first == column[k].first) continue;
        if (k < min_leaf || n - k < min_leaf) continue;
        const double nl = static_cast<double>(k);
        const double nr = static_cast<double>(n - k);
        const double pl = left_pos / nl;
        const double pr = (pos - left_pos) / nr;
        // n * weighted gini impurity
        const double score = nl * 2.0 * pl * (1.0 - pl) + nr * 2.0 * pr * (1.0 - pr);
        if (score < best_score) {
          best_score = score;
          best_feature = feat;
          const double lo = column[k - 1].first;
          const double hi = column[k].first;
          double mid = lo + (hi - lo) / 2.0;
          if (!(mid > lo)) mid = hi;
          best_threshold = mid;
        }
      }
    }
    if (best_feature < 0) return node;

    const auto mid_it = std::stable_partition(
        idx.begin() + static_cast<std::ptrdiff_t>(begin),
        idx.begin() + static_cast<std::ptrdiff_t>(end),
        [&](Eigen::Index r) { return x(r, best_feature) < best_threshold; });
    const auto split = static_cast<std::size_t>(mid_it - idx.begin());
    const std::int32_t left = build(idx, begin, split, depth + 1);
    const std::int32_t right = build(idx, split, end, depth + 1);
    TreeNode& t = tree[static_cast<std::size_t>(node)];
    t.feature = static_cast<std::int32_t>(best_feature);
    t.threshold = best_threshold;
    t.left = left;
    t.right = right;
    return node;
  }
};

}  // namespace

void ForestLearner::fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                        const Eigen::MatrixXd&, const Eigen::VectorXd&) {
  const Eigen::Index n = x.rows();
  const Eigen::Index d = x.cols();
  int mtry = params_.max_features;
  if (mtry <= 0) {
    mtry = std::max(1, static_cast<int>(std::floor(std::sqrt(static_cast<double>(d)))));
  }
  mtry = std::min<int>(mtry, static_cast<int>(d));

  trees_.clear();
  trees_.reserve(static_cast<std::size_t>(params_.n_trees));
  for (int t = 0; t < params_.n_trees; ++t) {
    GiniBuilder b{x, y, params_, mtry,
                  Rng(detail::tree_seed(params_.seed, static_cast<std::size_t>(t))),
                  {}, {}, {}};
    b.features.resize(static_cast<std::size_t>(d));
    std::iota(b.features.begin(), b.features.end(), Eigen::Index{0});
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
    if (params_.bootstrap) {
      for (auto& i : idx) i = static_cast<Eigen::Index>(b.rng.uniform_index(static_cast<std::uint64_t>(n)));
    } else {
      std::iota(idx.begin(), idx.end(), Eigen::Index{0});
    }
    b.build(idx, 0, idx.size(), 0);
    trees_.push_back(std::move(b.tree));
  }
}

Eigen::VectorXd ForestLearner::predict_proba(const Eigen::MatrixXd& x) const {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(x.rows());
  if (trees_.empty()) return out;
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    double sum = 0.0;
    for (const Tree& t : trees_) sum += evaluate_tree(t, &x(r, 0), x.rows());
    out(r) = sum / static_cast<double>(trees_.size());
  }
  return out;
}

void ForestLearner::save(BinaryWriter& out) const { detail::write_trees(out, trees_); }

void ForestLearner::load(BinaryReader& in) { trees_ = detail::read_trees(in); }

nlohmann::json ForestLearner::fit_summary() const {
  std::size_t nodes = 0;
  for (const Tree& t : trees_) nodes += t.size();
  return {{"trees", trees_.size()}, {"nodes", nodes}};
}

}  // namespace oocd

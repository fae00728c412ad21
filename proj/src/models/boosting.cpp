// Copyright 2026 The oocd Authors.
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <numeric>

#include "oocd/models.hpp"
#include "tree_common.hpp"

namespace oocd {
namespace {

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

struct Candidate {
  double gain = 0.0;
  std::int32_t feature = -1;
  double threshold = 0.0;
};

struct Frontier {
  std::int32_t node;
  double g_sum, h_sum;
  Candidate best;
  // running scan state for the current feature
  double g_left = 0, h_left = 0, last = 0;
  bool seen = false;
};

}  // namespace

void BoostingLearner::fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                          const Eigen::MatrixXd&, const Eigen::VectorXd&) {
  const Eigen::Index n = x.rows();
  const Eigen::Index d = x.cols();
  const double lambda = params_.lambda;
  const double mcw = params_.min_child_weight;

  std::vector<std::vector<std::int32_t>> order(static_cast<std::size_t>(d));
  for (Eigen::Index f = 0; f < d; ++f) {
    auto& o = order[static_cast<std::size_t>(f)];
    o.resize(static_cast<std::size_t>(n));
    std::iota(o.begin(), o.end(), 0);
    std::stable_sort(o.begin(), o.end(), [&](std::int32_t a, std::int32_t b) {
      return x(a, f) < x(b, f);
    });
  }

  Eigen::VectorXd margin = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd g(n), h(n);
  std::vector<std::int32_t> position(static_cast<std::size_t>(n));
  std::vector<std::int32_t> slot_of_node;
  trees_.clear();
  trees_.reserve(static_cast<std::size_t>(params_.n_trees));

  auto score = [lambda](double gs, double hs) { return gs * gs / (hs + lambda); };

  for (int round = 0; round < params_.n_trees; ++round) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const double p = sigmoid(margin(i));
      g(i) = p - y(i);
      h(i) = std::max(p * (1.0 - p), 1e-16);
    }
    Tree tree(1);
    std::fill(position.begin(), position.end(), 0);
    std::vector<Frontier> frontier{{0, g.sum(), h.sum(), {}}};
    std::vector<double> g_node{g.sum()}, h_node{h.sum()};

    for (int depth = 0; depth < params_.max_depth && !frontier.empty(); ++depth) {
      slot_of_node.assign(tree.size(), -1);
      for (std::size_t s = 0; s < frontier.size(); ++s) {
        slot_of_node[static_cast<std::size_t>(frontier[s].node)] =
            static_cast<std::int32_t>(s);
        frontier[s].best = {};
      }
      for (Eigen::Index f = 0; f < d; ++f) {
        for (auto& fr : frontier) {
          fr.g_left = fr.h_left = 0.0;
          fr.seen = false;
        }
        for (std::int32_t i : order[static_cast<std::size_t>(f)]) {
          const std::int32_t s = slot_of_node[static_cast<std::size_t>(position[static_cast<std::size_t>(i)])];
          if (s < 0) continue;
          Frontier& fr = frontier[static_cast<std::size_t>(s)];
          const double v = x(i, f);
          if (fr.seen && v != fr.last) {
            const double gr = fr.g_sum - fr.g_left;
            const double hr = fr.h_sum - fr.h_left;
            if (fr.h_left >= mcw && hr >= mcw) {
              const double gain = 0.5 * (score(fr.g_left, fr.h_left) + score(gr, hr) -
                                         score(fr.g_sum, fr.h_sum)) -
                                  params_.gamma;
              if (gain > fr.best.gain) {
                double mid = fr.last + (v - fr.last) / 2.0;
                if (!(mid > fr.last)) mid = v;
                fr.best = {gain, static_cast<std::int32_t>(f), mid};
              }
            }
          }
          fr.g_left += g(i);
          fr.h_left += h(i);
          fr.last = v;
          fr.seen = true;
        }
      }

      std::vector<Frontier> next;
      for (const Frontier& fr : frontier) {
        if (fr.best.feature < 0 || !(fr.best.gain > 1e-12)) continue;
        const auto left = static_cast<std::int32_t>(tree.size());
        tree.emplace_back();
        tree.emplace_back();
        TreeNode& parent = tree[static_cast<std::size_t>(fr.node)];
        parent.feature = fr.best.feature;
        parent.threshold = fr.best.threshold;
        parent.left = left;
        parent.right = left + 1;
        next.push_back({left, 0, 0, {}});
        next.push_back({left + 1, 0, 0, {}});
      }
      // Route rows to the new children and total their statistics.
      g_node.assign(tree.size(), 0.0);
      h_node.assign(tree.size(), 0.0);
      for (Eigen::Index i = 0; i < n; ++i) {
        auto& pos = position[static_cast<std::size_t>(i)];
        const TreeNode& nd = tree[static_cast<std::size_t>(pos)];
        if (nd.feature >= 0 && nd.left > pos) {
          pos = x(i, nd.feature) < nd.threshold ? nd.left : nd.right;
        }
        g_node[static_cast<std::size_t>(pos)] += g(i);
        h_node[static_cast<std::size_t>(pos)] += h(i);
      }
      for (Frontier& fr : next) {
        fr.g_sum = g_node[static_cast<std::size_t>(fr.node)];
        fr.h_sum = h_node[static_cast<std::size_t>(fr.node)];
      }
      frontier = std::move(next);
    }

    // Leaf weights from the final routing.
    g_node.assign(tree.size(), 0.0);
    h_node.assign(tree.size(), 0.0);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto pos = static_cast<std::size_t>(position[static_cast<std::size_t>(i)]);
      g_node[pos] += g(i);
      h_node[pos] += h(i);
    }
    for (std::size_t k = 0; k < tree.size(); ++k) {
      if (tree[k].feature < 0) {
        tree[k].value = -g_node[k] / (h_node[k] + lambda) * params_.learning_rate;
      }
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      margin(i) += tree[static_cast<std::size_t>(position[static_cast<std::size_t>(i)])].value;
    }
    trees_.push_back(std::move(tree));
  }
}

Eigen::VectorXd BoostingLearner::margins(const Eigen::MatrixXd& x) const {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(x.rows());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    double m = 0.0;
    for (const Tree& t : trees_) m += evaluate_tree(t, &x(r, 0), x.rows());
    out(r) = m;
  }
  return out;
}

Eigen::VectorXd BoostingLearner::predict_proba(const Eigen::MatrixXd& x) const {
  return margins(x).unaryExpr(&sigmoid);
}

void BoostingLearner::save(BinaryWriter& out) const { detail::write_trees(out, trees_); }

void BoostingLearner::load(BinaryReader& in) { trees_ = detail::read_trees(in); }

nlohmann::json BoostingLearner::fit_summary() const {
  std::size_t leaves = 0;
  for (const Tree& t : trees_) {
    for (const TreeNode& nd : t) leaves += nd.feature < 0 ? 1 : 0;
  }
  return {{"trees", trees_.size()}, {"leaves", leaves}};
}

}  // namespace oocd

// Copyright 2026 The oocd Authors.
// SPDX-License-Identifier: Apache-2.0

#include "tree_common.hpp"

#include <string>

namespace oocd {

double evaluate_tree(const Tree& tree, const double* row, Eigen::Index stride) {
  std::int32_t k = 0;
  while (tree[static_cast<std::size_t>(k)].feature >= 0) {
    const TreeNode& n = tree[static_cast<std::size_t>(k)];
    k = row[n.feature * stride] < n.threshold ? n.left : n.right;
  }
  return tree[static_cast<std::size_t>(k)].value;
}

namespace detail {

void write_trees(BinaryWriter& out, const std::vector<Tree>& trees) {
  out.u64(trees.size());
  for (const Tree& t : trees) {
    out.u64(t.size());
    for (const TreeNode& n : t) {
      out.i64(n.feature);
      out.f64(n.threshold);
      out.i64(n.left);
      out.i64(n.right);
      out.f64(n.value);
    }
  }
}

std::vector<Tree> read_trees(BinaryReader& in) {
  std::vector<Tree> trees(in.u64());
  for (Tree& t : trees) {
    t.resize(in.u64());
    if (t.empty()) throw ModelFormatError("empty tree");
    for (TreeNode& n : t) {
      n.feature = static_cast<std::int32_t>(in.i64());
      n.threshold = in.f64();
      n.left = static_cast<std::int32_t>(in.i64());
      n.right = static_cast<std::int32_t>(in.i64());
      n.value = in.f64();
    }
    // Children always follow their parent, which also rules out cycles.
    const auto size = static_cast<std::int32_t>(t.size());
    for (std::int32_t k = 0; k < size; ++k) {
      const TreeNode& n = t[static_cast<std::size_t>(k)];
      if (n.feature >= 0 && (n.left <= k || n.left >= size || n.right <= k ||
                             n.right >= size)) {
        throw ModelFormatError("tree child index out of range");
      }
    }
  }
  return trees;
}

std::uint64_t tree_seed(std::uint64_t seed, std::size_t tree_index) {
  std::uint64_t state = seed ^ (0xa0761d6478bd642fULL * (tree_index + 1));
  return splitmix64(state);
}

}  // namespace detail
}  // namespace oocd

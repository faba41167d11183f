/*
 * Copyright 2026 The xmatch authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License"). You may not use this file except in compliance
 * with the License. A copy of the License is located at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * or in the "license" file accompanying this file. This file is distributed on an "AS IS" BASIS, WITHOUT WARRANTIES
 * OR CONDITIONS OF ANY KIND, either express or implied. See the License for the specific language governing permissions
 * and limitations under the License.
 */

#ifndef XMATCH_HLT_HPP
#define XMATCH_HLT_HPP

#include <vector>

#include "xmatch/types.hpp"

namespace xmatch {

// Hierarchical label tree. assignments[t-1] holds C^(t) of shape
// K_t x K_{t-1} with exactly one parent per row; K_0 = 1 and K_D = L. The
// final matrix assigns labels to the deepest clusters, so a chain built with
// s splitting rounds has s+1 matrices.
struct LabelTree {
    index_t n_labels = 0;
    index_t branching = 0;
    std::vector<SparseMatrix> assignments;

    index_t depth() const { return static_cast<index_t>(assignments.size()); }
    index_t level_size(index_t t) const { return assignments[t - 1].n_rows; }  // K_t, t in 1..D

    // children[p] = node ids at level t whose parent (level t-1) is p
    std::vector<std::vector<index_t>> children_at(index_t t) const;

    // Throws data_error unless every C^(t) is a balanced single-parent
    // assignment and the chain composes to a partition of the labels.
    void validate() const;
};

// Flattened child adjacency of a LabelTree, built once and shared by the
// beam-search hot path.
struct TreeTopology {
    // per level t (1..D): CSR spans of the children of each level-(t-1) node
    std::vector<std::vector<offset_t>> offsets;
    std::vector<std::vector<index_t>> children;

    static TreeTopology build(const LabelTree& tree);

    std::span<const index_t> children_of(index_t level, index_t parent) const {
        const auto& off = offsets[level - 1];
        const auto& ch = children[level - 1];
        return {ch.data() + off[parent], ch.data() + off[parent + 1]};
    }
};

struct HltConfig {
    index_t branching = 16;
    index_t max_leaf = 100;
    uint64_t seed = 7;
    int max_iters = 50;
    double tol = 1e-4;
    int threads = 1;

    void validate() const;
};

// Capacity-constrained k-means on unit-normalized rows under cosine
// similarity. Group sizes differ by at most one; assignment is greedy in
// descending (best - second best) margin order. Returns one group id per row.
std::vector<index_t> balanced_kmeans(const DenseMatrix& points, index_t k, uint64_t seed,
                                     int max_iters, double tol);
std::vector<index_t> balanced_kmeans(const SparseMatrix& points, index_t k, uint64_t seed,
                                     int max_iters, double tol);

// Recursive top-down construction over label embeddings (dense label2vec
// vectors or sparse PIFA rows). Rows are normalized internally.
LabelTree build_tree(const DenseMatrix& embeddings, const HltConfig& config);
LabelTree build_tree(const SparseMatrix& embeddings, const HltConfig& config);

// Bottom-up label propagation: Y^(D) is a copy of labels, and
// Y^(t) = binarize(Y^(t+1) C^(t+1)). Returns [Y^(1), ..., Y^(D)].
std::vector<SparseMatrix> propagate_labels(const SparseMatrix& labels, const LabelTree& tree);

}  // namespace xmatch

#endif  // XMATCH_HLT_HPP

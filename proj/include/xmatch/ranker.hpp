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

#ifndef XMATCH_RANKER_HPP
#define XMATCH_RANKER_HPP

#include <vector>

#include "xmatch/hlt.hpp"
#include "xmatch/matcher.hpp"
#include "xmatch/types.hpp"

namespace xmatch {

// Per-level one-vs-rest linear rankers over the concatenated features,
// trained per label on the sampled instances of M^(t) = TFN union MAN with a
// squared hinge loss plus L2.

struct RankerLayer {
    index_t level = 0;
    // weights row r = label r's weight vector over the d_total features,
    // pruned of entries below prune_eps
    SparseMatrix weights;  // K_t x d_total
    double alpha = 1.0;
    std::vector<uint8_t> untrained;  // 1 for columns that saw no sampled instances

    // sigmoid(w_label . x) against a densified feature row
    double score(index_t label, const float* dense_x) const;
};

struct RankerConfig {
    double alpha = 1.0;
    int epochs = 10;
    float prune_eps = 1e-3f;
    index_t beam_size = 10;  // beam used when mining matcher-aware negatives
    // hook for the weighted hinge; unit weights by default
    double weight_positive = 1.0;
    double weight_negative = 1.0;
    int threads = 1;

    void validate() const;
};

// Teacher-forcing negatives: candidate (i, l) iff l's parent cluster is
// positive in Y^(t-1) row i. Pass nullptr for Y_prev at t = 1 (single root:
// every label is a candidate for every instance).
SparseMatrix build_tfn(const SparseMatrix& Y_t, const SparseMatrix* Y_prev,
                       const SparseMatrix& C_t);

// Matcher-aware negatives: per instance, the top-k_b scored level-t nodes.
// Ties break toward smaller node id.
SparseMatrix build_man(const std::vector<std::vector<std::pair<index_t, float>>>& predictions,
                       index_t n_rows, index_t n_cols, index_t k_b);

// Entrywise union of two binary candidate matrices of equal shape.
SparseMatrix union_candidates(const SparseMatrix& a, const SparseMatrix& b);

// Per-label coordinate-descent Newton solver on the sampled instances.
RankerLayer train_layer(const SparseMatrix& X, const SparseMatrix& Y_t, const SparseMatrix& M_t,
                        const RankerConfig& config, index_t level);

// Squared-hinge objective of one label column; exposed for the solver tests.
double column_objective(const SparseMatrix& X, const std::vector<index_t>& instances,
                        const std::vector<int8_t>& sign, std::span<const index_t> w_cols,
                        std::span<const float> w_vals, double alpha, double w_pos, double w_neg);

// Full top-down training; level t mines matcher-aware negatives from beam
// search over the already-trained levels (matcher scores at level 1 when a
// matcher is supplied). encoder_outputs are the matcher's per-instance text
// embeddings over the same rows as X; required iff matcher is non-null.
std::vector<RankerLayer> train_ranker(const SparseMatrix& X, const LabelTree& tree,
                                      const std::vector<SparseMatrix>& Y_levels,
                                      const MatcherModel* matcher, const RankerConfig& config,
                                      const DenseMatrix* encoder_outputs = nullptr);

}  // namespace xmatch

#endif  // XMATCH_RANKER_HPP

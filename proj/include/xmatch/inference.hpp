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

#ifndef XMATCH_INFERENCE_HPP
#define XMATCH_INFERENCE_HPP

#include <string>
#include <vector>

#include "xmatch/ranker.hpp"
#include "xmatch/types.hpp"

namespace xmatch {

struct BeamConfig {
    index_t beam_size = 10;
    index_t top_k = 10;

    void validate() const;
};

// Scatter/gather workspace for scoring sparse rows against column-sparse
// ranker weights; one per thread.
struct FeatureScratch {
    std::vector<float> dense;

    void scatter(std::span<const index_t> cols, std::span<const float> vals, size_t width) {
        if (dense.size() < width) dense.assign(width, 0.0f);
        for (size_t j = 0; j < cols.size(); ++j) dense[cols[j]] = vals[j];
    }
    void clear(std::span<const index_t> cols) {
        for (index_t c : cols) dense[c] = 0.0f;
    }
};

// Level-wise beam through the first n_levels ranker layers. Returns the kept
// nodes of level n_levels with their path scores (product of per-level
// sigmoid scores), ordered by (score desc, node id asc).
std::vector<std::pair<index_t, double>> beam_levels(std::span<const index_t> x_cols,
                                                    std::span<const float> x_vals,
                                                    const TreeTopology& topo,
                                                    const std::vector<RankerLayer>& layers,
                                                    index_t n_levels, index_t beam_size,
                                                    FeatureScratch& scratch);

// Full-tree beam search; returns the top_k leaf labels by path score,
// descending, ties broken toward the smaller label id.
std::vector<std::pair<index_t, float>> beam_search(std::span<const index_t> x_cols,
                                                   std::span<const float> x_vals,
                                                   const TreeTopology& topo,
                                                   const std::vector<RankerLayer>& layers,
                                                   const BeamConfig& config,
                                                   FeatureScratch& scratch);

// Ranked per-row predictions; convertible to an N x L sparse score matrix.
struct Predictions {
    index_t n_labels = 0;
    std::vector<std::vector<std::pair<index_t, float>>> rows;  // ranked (label, score)

    SparseMatrix to_sparse() const;
};

Predictions predict_batch(const SparseMatrix& X, const LabelTree& tree,
                          const std::vector<RankerLayer>& layers, const BeamConfig& config,
                          int threads = 1);

// Prediction file: one "label:score label:score ..." line per test row, in
// rank order.
void write_predictions(const std::string& path, const Predictions& preds);
Predictions load_predictions(const std::string& path, index_t n_labels);

}  // namespace xmatch

#endif  // XMATCH_INFERENCE_HPP

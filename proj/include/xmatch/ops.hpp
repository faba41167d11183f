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

#ifndef XMATCH_OPS_HPP
#define XMATCH_OPS_HPP

#include <string>
#include <vector>

#include "xmatch/types.hpp"

namespace xmatch {

// Keeps the positions of strictly positive entries, sets them to 1.0.
SparseMatrix binarize(const SparseMatrix& m);

// Exact sparse product a * b; rows come out sorted. Accumulates in double.
SparseMatrix spmm(const SparseMatrix& a, const SparseMatrix& b);

// CSR transpose (used to get column views of label/candidate matrices).
SparseMatrix transpose(const SparseMatrix& m);

// Scales every nonzero row to unit Euclidean norm; zero rows pass through.
DenseMatrix l2_normalize_rows(const DenseMatrix& m);
SparseMatrix l2_normalize_rows(const SparseMatrix& m);

// Column layout of a concatenated feature matrix, persisted in the bundle
// manifest so test-time features can be assembled the same way.
struct ConcatRecipe {
    struct Block {
        std::string name;
        index_t offset = 0;
        index_t width = 0;
        float weight = 1.0f;
    };
    std::vector<Block> blocks;
    index_t total_cols = 0;
};

struct ConcatResult {
    SparseMatrix matrix;
    ConcatRecipe recipe;
};

// Column-wise concatenation [sparse | dense_1 | ... | dense_k], block j
// scaled by block_weights[j] (weight 0 addresses the sparse block). Blocks
// are expected to be row-normalized already; this function only scales.
ConcatResult concat_features(const SparseMatrix& sparse,
                             const std::vector<const DenseMatrix*>& dense_blocks,
                             const std::vector<float>& block_weights);

}  // namespace xmatch

#endif  // XMATCH_OPS_HPP

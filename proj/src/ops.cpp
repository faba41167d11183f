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

#include "xmatch/ops.hpp"

#include <algorithm>
#include <cmath>

#include "xmatch/simd/kernels.hpp"

namespace xmatch {

SparseMatrix binarize(const SparseMatrix& m) {
    SparseMatrix out(m.n_rows, m.n_cols);
    out.col_indices.reserve(m.col_indices.size());
    for (index_t r = 0; r < m.n_rows; ++r) {
        auto cols = m.row_cols(r);
        auto vals = m.row_vals(r);
        for (size_t j = 0; j < cols.size(); ++j) {
            if (vals[j] > 0.0f) {
                out.col_indices.push_back(cols[j]);
                out.values.push_back(1.0f);
            }
        }
        out.row_offsets[r + 1] = out.col_indices.size();
    }
    return out;
}

SparseMatrix spmm(const SparseMatrix& a, const SparseMatrix& b) {
    if (a.n_cols != b.n_rows) {
        throw data_error("spmm: inner dimensions differ (" + std::to_string(a.n_cols) + " vs " +
                         std::to_string(b.n_rows) + ")");
    }
    SparseMatrix out(a.n_rows, b.n_cols);
    std::vector<double> acc(b.n_cols, 0.0);
    std::vector<index_t> touched;
    for (index_t r = 0; r < a.n_rows; ++r) {
        touched.clear();
        auto acols = a.row_cols(r);
        auto avals = a.row_vals(r);
        for (size_t j = 0; j < acols.size(); ++j) {
            index_t k = acols[j];
            double av = avals[j];
            auto bcols = b.row_cols(k);
            auto bvals = b.row_vals(k);
            for (size_t t = 0; t < bcols.size(); ++t) {
                if (acc[bcols[t]] == 0.0) touched.push_back(bcols[t]);
                acc[bcols[t]] += av * bvals[t];
            }
        }
        std::sort(touched.begin(), touched.end());
        for (index_t c : touched) {
            // exact zeros from cancellation are dropped with the pattern
            if (acc[c] != 0.0) {
                out.col_indices.push_back(c);
                out.values.push_back(static_cast<float>(acc[c]));
            }
            acc[c] = 0.0;
        }
        out.row_offsets[r + 1] = out.col_indices.size();
    }
    return out;
}

SparseMatrix transpose(const SparseMatrix& m) {
    SparseMatrix out(m.n_cols, m.n_rows);
    std::vector<offset_t> counts(m.n_cols, 0);
    for (index_t c : m.col_indices) ++counts[c];
    for (index_t c = 0; c < m.n_cols; ++c) out.row_offsets[c + 1] = out.row_offsets[c] + counts[c];
    out.col_indices.resize(m.nnz());
    out.values.resize(m.nnz());
    std::vector<offset_t> cursor(out.row_offsets.begin(), out.row_offsets.end() - 1);
    for (index_t r = 0; r < m.n_rows; ++r) {
        auto cols = m.row_cols(r);
        auto vals = m.row_vals(r);
        for (size_t j = 0; j < cols.size(); ++j) {
            offset_t pos = cursor[cols[j]]++;
            out.col_indices[pos] = r;
            out.values[pos] = vals[j];
        }
    }
    return out;
}

DenseMatrix l2_normalize_rows(const DenseMatrix& m) {
    DenseMatrix out = m;
    for (index_t r = 0; r < out.n_rows; ++r) {
        float* row = out.row(r);
        double norm = std::sqrt(simd::squared_norm(row, out.n_cols));
        if (norm > 0.0) simd::scale(static_cast<float>(1.0 / norm), row, out.n_cols);
    }
    return out;
}

SparseMatrix l2_normalize_rows(const SparseMatrix& m) {
    SparseMatrix out = m;
    for (index_t r = 0; r < out.n_rows; ++r) {
        offset_t lo = out.row_offsets[r], hi = out.row_offsets[r + 1];
        double norm_sq = 0.0;
        for (offset_t j = lo; j < hi; ++j) {
            norm_sq += static_cast<double>(out.values[j]) * out.values[j];
        }
        if (norm_sq > 0.0) {
            float inv = static_cast<float>(1.0 / std::sqrt(norm_sq));
            for (offset_t j = lo; j < hi; ++j) out.values[j] *= inv;
        }
    }
    return out;
}

ConcatResult concat_features(const SparseMatrix& sparse,
                             const std::vector<const DenseMatrix*>& dense_blocks,
                             const std::vector<float>& block_weights) {
    if (block_weights.size() != dense_blocks.size() + 1) {
        throw config_error("concat_features: need one weight per block (sparse block first)");
    }
    for (float w : block_weights) {
        if (!(w > 0.0f)) throw config_error("concat_features: block weights must be positive");
    }
    for (const DenseMatrix* blk : dense_blocks) {
        if (blk->n_rows != sparse.n_rows) {
            throw data_error("concat_features: block row count mismatch");
        }
    }

    ConcatRecipe recipe;
    recipe.blocks.push_back({"sparse", 0, sparse.n_cols, block_weights[0]});
    index_t offset = sparse.n_cols;
    for (size_t b = 0; b < dense_blocks.size(); ++b) {
        recipe.blocks.push_back(
            {"dense_" + std::to_string(b), offset, dense_blocks[b]->n_cols, block_weights[b + 1]});
        offset += dense_blocks[b]->n_cols;
    }
    recipe.total_cols = offset;

    SparseMatrix out(sparse.n_rows, offset);
    offset_t dense_nnz = 0;
    for (const DenseMatrix* blk : dense_blocks) {
        dense_nnz += static_cast<offset_t>(blk->n_rows) * blk->n_cols;
    }
    out.col_indices.reserve(sparse.nnz() + dense_nnz);
    out.values.reserve(sparse.nnz() + dense_nnz);

    for (index_t r = 0; r < sparse.n_rows; ++r) {
        auto cols = sparse.row_cols(r);
        auto vals = sparse.row_vals(r);
        for (size_t j = 0; j < cols.size(); ++j) {
            out.col_indices.push_back(cols[j]);
            out.values.push_back(vals[j] * block_weights[0]);
        }
        index_t base = sparse.n_cols;
        for (size_t b = 0; b < dense_blocks.size(); ++b) {
            const DenseMatrix& blk = *dense_blocks[b];
            const float* row = blk.row(r);
            float w = block_weights[b + 1];
            for (index_t c = 0; c < blk.n_cols; ++c) {
                float v = row[c] * w;
                if (v != 0.0f) {
                    out.col_indices.push_back(base + c);
                    out.values.push_back(v);
                }
            }
            base += blk.n_cols;
        }
        out.row_offsets[r + 1] = out.col_indices.size();
    }
    return {std::move(out), std::move(recipe)};
}

}  // namespace xmatch

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

#include "xmatch/types.hpp"

#include <algorithm>
#include <cmath>

namespace xmatch {

SparseMatrix SparseMatrix::identity(index_t n) {
    SparseMatrix m(n, n);
    m.col_indices.resize(n);
    m.values.assign(n, 1.0f);
    for (index_t i = 0; i < n; ++i) {
        m.col_indices[i] = i;
        m.row_offsets[i + 1] = i + 1;
    }
    return m;
}

bool SparseMatrix::has_entry(index_t r, index_t c) const {
    auto cols = row_cols(r);
    return std::binary_search(cols.begin(), cols.end(), c);
}

void SparseMatrix::validate() const {
    if (row_offsets.size() != static_cast<size_t>(n_rows) + 1) {
        throw data_error("sparse matrix: row_offsets length mismatch");
    }
    if (row_offsets.front() != 0) {
        throw data_error("sparse matrix: row_offsets must start at 0");
    }
    if (row_offsets.back() != col_indices.size() || col_indices.size() != values.size()) {
        throw data_error("sparse matrix: nnz mismatch between offsets, indices and values");
    }
    for (index_t r = 0; r < n_rows; ++r) {
        if (row_offsets[r + 1] < row_offsets[r]) {
            throw data_error("sparse matrix: row_offsets not non-decreasing");
        }
        auto cols = row_cols(r);
        for (size_t j = 0; j < cols.size(); ++j) {
            if (cols[j] >= n_cols) {
                throw data_error("sparse matrix: column index out of range");
            }
            if (j > 0 && cols[j] <= cols[j - 1]) {
                throw data_error("sparse matrix: columns within a row must be strictly increasing");
            }
        }
    }
    for (float v : values) {
        if (!std::isfinite(v)) throw data_error("sparse matrix: non-finite value");
    }
}

SparseBuilder::SparseBuilder(index_t n_rows, index_t n_cols) : m_(n_rows, n_cols) {}

void SparseBuilder::add(index_t col, float val) { pending_.emplace_back(col, val); }

void SparseBuilder::finish_row() {
    std::sort(pending_.begin(), pending_.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    for (size_t j = 0; j < pending_.size(); ++j) {
        if (j > 0 && pending_[j].first == pending_[j - 1].first) {
            throw data_error("duplicate column index within a row: " +
                             std::to_string(pending_[j].first));
        }
        m_.col_indices.push_back(pending_[j].first);
        m_.values.push_back(pending_[j].second);
    }
    pending_.clear();
    ++rows_done_;
    m_.row_offsets[rows_done_] = m_.col_indices.size();
}

SparseMatrix SparseBuilder::build() {
    while (rows_done_ < m_.n_rows) finish_row();
    m_.validate();
    return std::move(m_);
}

void DenseMatrix::validate() const {
    if (values.size() != static_cast<size_t>(n_rows) * n_cols) {
        throw data_error("dense matrix: value count does not equal n_rows * n_cols");
    }
    for (float v : values) {
        if (!std::isfinite(v)) throw data_error("dense matrix: non-finite value");
    }
}

void Dataset::validate() const {
    features_sparse.validate();
    labels.validate();
    if (labels.n_rows != features_sparse.n_rows) {
        throw data_error("dataset: feature and label row counts differ");
    }
    if (features_dense) {
        features_dense->validate();
        if (features_dense->n_rows != features_sparse.n_rows) {
            throw data_error("dataset: dense feature row count differs");
        }
    }
    for (index_t i = 0; i < labels.n_rows; ++i) {
        if (labels.row_nnz(i) == 0) {
            throw data_error("dataset: sample " + std::to_string(i) + " has no labels");
        }
    }
    for (float v : labels.values) {
        if (v != 1.0f) throw data_error("dataset: label matrix must be binary (all values 1.0)");
    }
}

}  // namespace xmatch

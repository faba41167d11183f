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

#ifndef XMATCH_TYPES_HPP
#define XMATCH_TYPES_HPP

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace xmatch {

typedef std::uint32_t index_t;
typedef std::uint64_t offset_t;

// Error taxonomy; the CLI maps these to exit codes 2/3/4.
struct config_error : std::runtime_error {
    explicit config_error(const std::string& msg) : std::runtime_error(msg) {}
};
struct data_error : std::runtime_error {
    explicit data_error(const std::string& msg) : std::runtime_error(msg) {}
};
struct numeric_error : std::runtime_error {
    explicit numeric_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Compressed sparse row matrix, float32 values.
// Invariants: row_offsets has n_rows+1 entries, starts at 0, is non-decreasing,
// and ends at nnz; within each row, column indices are strictly increasing.
struct SparseMatrix {
    index_t n_rows = 0;
    index_t n_cols = 0;
    std::vector<offset_t> row_offsets;  // length n_rows + 1
    std::vector<index_t> col_indices;
    std::vector<float> values;

    SparseMatrix() : row_offsets(1, 0) {}
    SparseMatrix(index_t rows, index_t cols)
        : n_rows(rows), n_cols(cols), row_offsets(static_cast<size_t>(rows) + 1, 0) {}

    static SparseMatrix identity(index_t n);

    offset_t nnz() const { return row_offsets.empty() ? 0 : row_offsets.back(); }

    index_t row_nnz(index_t r) const {
        return static_cast<index_t>(row_offsets[r + 1] - row_offsets[r]);
    }
    std::span<const index_t> row_cols(index_t r) const {
        return {col_indices.data() + row_offsets[r], row_offsets[r + 1] - row_offsets[r]};
    }
    std::span<const float> row_vals(index_t r) const {
        return {values.data() + row_offsets[r], row_offsets[r + 1] - row_offsets[r]};
    }

    // Binary membership test within a row; O(log nnz(row)).
    bool has_entry(index_t r, index_t c) const;

    bool operator==(const SparseMatrix& other) const = default;

    // Throws data_error on any structural invariant violation.
    void validate() const;
};

// Incremental CSR builder; rows are appended in order, entries within a row
// may arrive unsorted and are sorted on commit. Duplicate columns within a
// row are rejected.
class SparseBuilder {
public:
    SparseBuilder(index_t n_rows, index_t n_cols);

    void add(index_t col, float val);   // adds to the currently open row
    void finish_row();                  // commits the open row
    SparseMatrix build();               // finishes remaining rows, validates

private:
    SparseMatrix m_;
    index_t rows_done_ = 0;
    std::vector<std::pair<index_t, float>> pending_;
};

// Row-major dense matrix, float32 values.
struct DenseMatrix {
    index_t n_rows = 0;
    index_t n_cols = 0;
    std::vector<float> values;  // n_rows * n_cols, row-major

    DenseMatrix() = default;
    DenseMatrix(index_t rows, index_t cols)
        : n_rows(rows), n_cols(cols), values(static_cast<size_t>(rows) * cols, 0.0f) {}

    float* row(index_t r) { return values.data() + static_cast<size_t>(r) * n_cols; }
    const float* row(index_t r) const { return values.data() + static_cast<size_t>(r) * n_cols; }

    float& at(index_t r, index_t c) { return values[static_cast<size_t>(r) * n_cols + c]; }
    float at(index_t r, index_t c) const { return values[static_cast<size_t>(r) * n_cols + c]; }

    bool operator==(const DenseMatrix& other) const = default;

    void validate() const;
};

// A training or test split: sparse features, optional static dense features,
// and a binary label matrix. Every sample must carry at least one label.
struct Dataset {
    SparseMatrix features_sparse;               // N x D
    std::optional<DenseMatrix> features_dense;  // N x d_s
    SparseMatrix labels;                        // N x L, all values 1.0

    index_t n_samples() const { return features_sparse.n_rows; }
    index_t n_features() const { return features_sparse.n_cols; }
    index_t n_labels() const { return labels.n_cols; }

    void validate() const;
};

}  // namespace xmatch

#endif  // XMATCH_TYPES_HPP

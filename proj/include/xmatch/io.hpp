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

#ifndef XMATCH_IO_HPP
#define XMATCH_IO_HPP

#include <string>
#include <utility>

#include "xmatch/types.hpp"

namespace xmatch {

// XMC text format:
//   header line  "N D L"
//   data lines   "l1,l2,...  f1:v1 f2:v2 ..."   (0-based indices)
// Feature lists may be empty; label lists may not. Indices within a line
// must be unique and below the declared dimension, values finite.
struct XmcData {
    SparseMatrix features;  // N x D
    SparseMatrix labels;    // N x L, values all 1.0
};

XmcData load_xmc_text(const std::string& path);
void write_xmc_text(const std::string& path, const SparseMatrix& features,
                    const SparseMatrix& labels);

// Dense matrix text format: "n_rows n_cols" header, one whitespace-separated
// row per line. Floats are written with shortest round-trip formatting.
DenseMatrix load_dense_text(const std::string& path);
void write_dense_text(const std::string& path, const DenseMatrix& m);

// Sparse matrix text format: "n_rows n_cols" header, one "c:v c:v ..." line
// per row (possibly empty).
SparseMatrix load_sparse_text(const std::string& path);
void write_sparse_text(const std::string& path, const SparseMatrix& m);

}  // namespace xmatch

#endif  // XMATCH_IO_HPP

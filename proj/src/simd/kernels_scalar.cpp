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

// Reference kernels. These define the semantics the vector backends are
// tested against, so keep them as plain loops.

#include "xmatch/simd/kernels.hpp"

namespace xmatch::simd {

namespace {

float dot_scalar(const float* a, const float* b, std::size_t n) {
    float acc = 0.0f;
    for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

double dot_acc64_scalar(const float* a, const float* b, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
    return acc;
}

void axpy_scalar(float alpha, const float* x, float* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void scale_scalar(float alpha, float* x, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) x[i] *= alpha;
}

double squared_norm_scalar(const float* x, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += static_cast<double>(x[i]) * static_cast<double>(x[i]);
    return acc;
}

float gather_dot_scalar(const std::uint32_t* idx, const float* vals, std::size_t nnz,
                        const float* dense) {
    float acc = 0.0f;
    for (std::size_t j = 0; j < nnz; ++j) acc += vals[j] * dense[idx[j]];
    return acc;
}

}  // namespace

const Kernels& scalar_kernels() {
    static const Kernels table = {
        dot_scalar,    dot_acc64_scalar,    axpy_scalar,
        scale_scalar,  squared_norm_scalar, gather_dot_scalar,
    };
    return table;
}

}  // namespace xmatch::simd

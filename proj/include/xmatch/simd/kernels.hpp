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

#ifndef XMATCH_SIMD_KERNELS_HPP
#define XMATCH_SIMD_KERNELS_HPP

#include <cstddef>
#include <cstdint>

// Dense float kernels behind the training and scoring inner loops.
//
// Every kernel exists as a scalar reference implementation and, when the
// build and the host CPU support it, an AVX2+FMA variant. The backend is
// selected once at startup (cpuid), overridable with XMATCH_SIMD=scalar|avx2
// or force_backend(). Vector variants may reassociate float sums, so results
// can differ from the scalar reference in the last bits; the equivalence
// suite bounds that drift. The *_acc64 kernels accumulate in double and are
// used by every loss/gradient path.

namespace xmatch::simd {

struct Kernels {
    // sum_i a[i] * b[i], float accumulator
    float (*dot)(const float* a, const float* b, std::size_t n);
    // sum_i a[i] * b[i], double accumulator
    double (*dot_acc64)(const float* a, const float* b, std::size_t n);
    // y[i] += alpha * x[i]
    void (*axpy)(float alpha, const float* x, float* y, std::size_t n);
    // x[i] *= alpha
    void (*scale)(float alpha, float* x, std::size_t n);
    // sum_i x[i]^2, double accumulator
    double (*squared_norm)(const float* x, std::size_t n);
    // sum_j vals[j] * dense[idx[j]]  (sparse row against a dense vector)
    float (*gather_dot)(const std::uint32_t* idx, const float* vals, std::size_t nnz,
                        const float* dense);
};

enum class Backend { scalar = 0, avx2 = 1 };

const Kernels& scalar_kernels();
#ifdef XMATCH_WITH_AVX2
const Kernels& avx2_kernels();
#endif

// Active table. Cheap to call; resolved once.
const Kernels& active();
Backend active_backend();
const char* backend_name();

// True if the named backend can run on this host/build.
bool backend_available(Backend b);

// Test hook; throws config_error if the backend is unavailable.
void force_backend(Backend b);

// Convenience forwarders.
inline float dot(const float* a, const float* b, std::size_t n) { return active().dot(a, b, n); }
inline double dot_acc64(const float* a, const float* b, std::size_t n) {
    return active().dot_acc64(a, b, n);
}
inline void axpy(float alpha, const float* x, float* y, std::size_t n) {
    active().axpy(alpha, x, y, n);
}
inline void scale(float alpha, float* x, std::size_t n) { active().scale(alpha, x, n); }
inline double squared_norm(const float* x, std::size_t n) { return active().squared_norm(x, n); }
inline float gather_dot(const std::uint32_t* idx, const float* vals, std::size_t nnz,
                        const float* dense) {
    return active().gather_dot(idx, vals, nnz, dense);
}

}  // namespace xmatch::simd

#endif  // XMATCH_SIMD_KERNELS_HPP

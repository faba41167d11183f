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

#include "xmatch/simd/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <cstring>

#include "xmatch/types.hpp"

namespace xmatch::simd {

namespace {

bool cpu_has_avx2() {
#if defined(XMATCH_WITH_AVX2) && (defined(__GNUC__) || defined(__clang__))
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

Backend pick_default() {
    if (const char* env = std::getenv("XMATCH_SIMD")) {
        if (std::strcmp(env, "scalar") == 0) return Backend::scalar;
        if (std::strcmp(env, "avx2") == 0) {
            if (!backend_available(Backend::avx2)) {
                throw config_error("XMATCH_SIMD=avx2 but AVX2 is unavailable on this host/build");
            }
            return Backend::avx2;
        }
        // anything else (e.g. "auto") falls through to detection
    }
    return cpu_has_avx2() ? Backend::avx2 : Backend::scalar;
}

std::atomic<int> g_backend{-1};

Backend resolve() {
    int b = g_backend.load(std::memory_order_acquire);
    if (b < 0) {
        Backend picked = pick_default();
        int expected = -1;
        g_backend.compare_exchange_strong(expected, static_cast<int>(picked));
        b = g_backend.load(std::memory_order_acquire);
    }
    return static_cast<Backend>(b);
}

}  // namespace

bool backend_available(Backend b) {
    switch (b) {
        case Backend::scalar:
            return true;
        case Backend::avx2:
            return cpu_has_avx2();
    }
    return false;
}

void force_backend(Backend b) {
    if (!backend_available(b)) {
        throw config_error("requested SIMD backend is unavailable on this host/build");
    }
    g_backend.store(static_cast<int>(b), std::memory_order_release);
}

Backend active_backend() { return resolve(); }

const Kernels& active() {
    switch (resolve()) {
#ifdef XMATCH_WITH_AVX2
        case Backend::avx2:
            return avx2_kernels();
#endif
        default:
            return scalar_kernels();
    }
}

const char* backend_name() {
    switch (resolve()) {
        case Backend::avx2:
            return "avx2";
        default:
            return "scalar";
    }
}

}  // namespace xmatch::simd

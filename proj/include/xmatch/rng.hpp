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

#ifndef XMATCH_RNG_HPP
#define XMATCH_RNG_HPP

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace xmatch {

// The std distributions are implementation-defined, so everything that must
// reproduce bit-for-bit draws from mt19937_64 through these helpers only.

inline double next_double(std::mt19937_64& rng) {
    // uniform in [0, 1), 53 mantissa bits
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline std::uint64_t next_below(std::mt19937_64& rng, std::uint64_t n) {
    // unbiased via rejection
    std::uint64_t threshold = (~n + 1) % n;  // 2^64 mod n
    for (;;) {
        std::uint64_t r = rng();
        if (r >= threshold) return r % n;
    }
}

inline double next_gaussian(std::mt19937_64& rng) {
    // Box-Muller, one value per call (second value discarded for simplicity)
    double u1 = next_double(rng);
    double u2 = next_double(rng);
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
}

template <class T>
void shuffle_inplace(std::vector<T>& v, std::mt19937_64& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::size_t j = static_cast<std::size_t>(next_below(rng, i));
        std::swap(v[i - 1], v[j]);
    }
}

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// One pipeline seed fans out to per-stage seeds so every stage is
// independently reproducible from (seed, stage name).
inline std::uint64_t derive_seed(std::uint64_t base, std::string_view tag) {
    std::uint64_t h = 1469598103934665603ULL;  // FNV-1a
    for (char c : tag) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ULL;
    }
    return splitmix64(base ^ h);
}

}  // namespace xmatch

#endif  // XMATCH_RNG_HPP

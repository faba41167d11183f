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

#ifndef XMATCH_PARALLEL_HPP
#define XMATCH_PARALLEL_HPP

#include <atomic>
#include <cstdlib>
#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace xmatch {

// Resolves a requested worker count: 0 means "use all hardware threads",
// anything else is taken as-is. XMATCH_THREADS is consulted when the
// request is negative (CLI passes -1 when the flag is absent).
inline int resolve_threads(int requested) {
    if (requested < 0) {
        if (const char* env = std::getenv("XMATCH_THREADS")) {
            requested = std::atoi(env);
        } else {
            requested = 1;
        }
    }
    if (requested == 0) {
        unsigned hw = std::thread::hardware_concurrency();
        requested = hw == 0 ? 1 : static_cast<int>(hw);
    }
    return requested < 1 ? 1 : requested;
}

// Runs fn(i) for i in [begin, end) on up to n_threads workers, chunked
// dynamically. Work items must be independent; exceptions are captured and
// the first one rethrown on the caller thread.
template <class Fn>
void parallel_for(std::size_t begin, std::size_t end, int n_threads, Fn&& fn,
                  std::size_t chunk = 16) {
    if (end <= begin) return;
    std::size_t total = end - begin;
    if (n_threads <= 1 || total == 1) {
        for (std::size_t i = begin; i < end; ++i) fn(i);
        return;
    }
    if (static_cast<std::size_t>(n_threads) > total) n_threads = static_cast<int>(total);
    std::atomic<std::size_t> next{begin};
    std::exception_ptr error;
    std::atomic<bool> failed{false};
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(n_threads));
    auto worker = [&]() {
        for (;;) {
            std::size_t lo = next.fetch_add(chunk);
            if (lo >= end || failed.load(std::memory_order_relaxed)) return;
            std::size_t hi = lo + chunk < end ? lo + chunk : end;
            try {
                for (std::size_t i = lo; i < hi; ++i) fn(i);
            } catch (...) {
                if (!failed.exchange(true)) error = std::current_exception();
                return;
            }
        }
    };
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    if (failed.load()) std::rethrow_exception(error);
}

}  // namespace xmatch

#endif  // XMATCH_PARALLEL_HPP

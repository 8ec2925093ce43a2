#pragma once

#include <algorithm>
#include <thread>
#include <vector>

namespace meram {

inline int resolve_threads(int requested) {
    if (requested > 0) return requested;
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

// Static block partition of [0, n) across a fixed thread count. Each index is
// processed exactly once and results must be written to index-addressed
// storage by the caller, so the outcome is identical for every thread count.
template <class Body>
void parallel_for(long n, int threads, Body&& body) {
    if (n <= 0) return;
    const int k = std::min<long>(resolve_threads(threads), n);
    if (k <= 1) {
        for (long i = 0; i < n; ++i) body(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(k));
    for (int j = 0; j < k; ++j) {
        const long lo = n * j / k;
        const long hi = n * (j + 1) / k;
        pool.emplace_back([lo, hi, &body] {
            for (long i = lo; i < hi; ++i) body(i);
        });
    }
    for (auto& t : pool) t.join();
}

} // namespace meram

#pragma once

#include <cstdint>
#include <thread>
#include <vector>

namespace probust {

// Runs fn(i) for i in [0, n) across at most n_threads workers with static
// chunking. Callers must make fn(i) independent of evaluation order (write to
// slot i, draw randomness from a per-index stream); reductions over the
// results happen sequentially afterwards, so outputs do not depend on the
// worker count.
template <typename Fn>
void parallel_for(std::int64_t n, int n_threads, Fn&& fn) {
    if (n <= 0) return;
    if (n_threads <= 1 || n == 1) {
        for (std::int64_t i = 0; i < n; ++i) fn(i);
        return;
    }
    const int workers = static_cast<int>(std::min<std::int64_t>(n_threads, n));
    std::vector<std::thread> pool;
    pool.reserve(workers);
    const std::int64_t chunk = (n + workers - 1) / workers;
    for (int w = 0; w < workers; ++w) {
        const std::int64_t lo = w * chunk;
        const std::int64_t hi = std::min(n, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([lo, hi, &fn] {
            for (std::int64_t i = lo; i < hi; ++i) fn(i);
        });
    }
    for (auto& t : pool) t.join();
}

}  // namespace probust

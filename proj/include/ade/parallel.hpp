#pragma once

#include <algorithm>
#include <thread>
#include <vector>

namespace ade {

/// Runs fn(i) for i in [0, n) on a static partition of `threads` workers.
/// Results must be written to index-addressed slots by the caller, which
/// keeps the output independent of scheduling.
template <class Fn>
inline void parallel_for(size_t n, unsigned threads, const Fn& fn) {
    if (threads <= 1 || n < 2 * threads) {
        for (size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    const size_t chunk = (n + threads - 1) / threads;
    for (unsigned w = 0; w < threads; ++w) {
        const size_t begin = w * chunk;
        const size_t end = std::min(n, begin + chunk);
        if (begin >= end) break;
        pool.emplace_back([&fn, begin, end] {
            for (size_t i = begin; i < end; ++i) fn(i);
        });
    }
    for (auto& t : pool) t.join();
}

}  // namespace ade

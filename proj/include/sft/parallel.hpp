#pragma once

#include <algorithm>
#include <cstdint>
#include <thread>
#include <vector>

namespace sft {

// Global worker count for data-parallel loops. All parallel regions in this
// library write disjoint outputs and keep per-element summation order fixed,
// so results are bit-identical for every thread count.
inline int& thread_count() {
    static int n = 1;
    return n;
}

inline void set_threads(int n) {
    thread_count() = std::max(1, n);
}

inline int hardware_threads() {
    unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1 : static_cast<int>(hc);
}

// Static contiguous partition of [0, n) across workers; fn(lo, hi) handles
// one contiguous range. Each index belongs to exactly one worker and fn must
// not write outside its range.
template <class Fn>
void parallel_chunks(std::int64_t n, Fn&& fn) {
    const int workers = static_cast<int>(std::min<std::int64_t>(thread_count(), n));
    if (workers <= 1) {
        if (n > 0) fn(std::int64_t(0), n);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(workers - 1);
    const std::int64_t chunk = (n + workers - 1) / workers;
    auto run = [&fn, n, chunk](int w) {
        const std::int64_t lo = w * chunk;
        const std::int64_t hi = std::min(n, lo + chunk);
        if (lo < hi) fn(lo, hi);
    };
    for (int w = 1; w < workers; ++w) pool.emplace_back(run, w);
    run(0);
    for (auto& t : pool) t.join();
}

template <class Fn>
void parallel_for(std::int64_t n, Fn&& fn) {
    parallel_chunks(n, [&fn](std::int64_t lo, std::int64_t hi) {
        for (std::int64_t i = lo; i < hi; ++i) fn(i);
    });
}

}  // namespace sft

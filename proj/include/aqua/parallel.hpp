#pragma once

#include <algorithm>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace aqua {

/// Thread cap from AQUA_THREADS (0 or unset = auto). Parsed once per process.
inline int max_threads() {
    static const int cached = [] {
        int hw = static_cast<int>(std::thread::hardware_concurrency());
        if (hw < 1) hw = 1;
        const char* env = std::getenv("AQUA_THREADS");
        if (env == nullptr) return hw;
        int requested = std::atoi(env);
        if (requested <= 0) return hw; // 0 = auto
        return std::min(requested, hw);
    }();
    return cached;
}

/// Splits [0, count) into contiguous chunks, one worker per chunk. Each chunk
/// writes disjoint output rows, so results are identical for any thread count.
/// Small workloads run inline.
template <typename Fn>
void parallel_for(int count, std::int64_t work_per_item, const Fn& fn) {
    int threads = max_threads();
    const std::int64_t total_work = work_per_item * count;
    if (threads <= 1 || count < 2 || total_work < 262144) {
        for (int i = 0; i < count; ++i) fn(i);
        return;
    }
    threads = std::min<int>(threads, count);
    std::vector<std::thread> pool;
    pool.reserve(threads - 1);
    int chunk = (count + threads - 1) / threads;
    auto run = [&fn](int lo, int hi) {
        for (int i = lo; i < hi; ++i) fn(i);
    };
    for (int t = 1; t < threads; ++t) {
        int lo = t * chunk;
        int hi = std::min(count, lo + chunk);
        if (lo < hi) pool.emplace_back(run, lo, hi);
    }
    run(0, std::min(count, chunk));
    for (auto& th : pool) th.join();
}

} // namespace aqua

#pragma once

#include <algorithm>
#include <atomic>
#include <thread>
#include <vector>

namespace hdn {

inline std::atomic<int>& worker_count_atomic() {
    static std::atomic<int> n{
        static_cast<int>(std::min(2u, std::max(1u, std::thread::hardware_concurrency())))};
    return n;
}

inline void set_worker_count(int n) { worker_count_atomic() = std::max(1, n); }
inline int worker_count() { return worker_count_atomic(); }

// Static chunking over [begin, end). Each index is processed by exactly one
// worker, so results are bitwise independent of the worker count as long as
// writes are disjoint per index.
template <typename Fn>
void parallel_for(int begin, int end, Fn&& fn) {
    const int n = end - begin;
    if (n <= 0) return;
    const int workers = std::min(worker_count(), n);
    if (workers <= 1) {
        for (int i = begin; i < end; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    const int chunk = (n + workers - 1) / workers;
    for (int w = 0; w < workers; ++w) {
        const int lo = begin + w * chunk;
        const int hi = std::min(end, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([lo, hi, &fn] {
            for (int i = lo; i < hi; ++i) fn(i);
        });
    }
    for (auto& t : pool) t.join();
}

} // namespace hdn

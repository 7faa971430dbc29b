#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace auxlsm {

/// Worker count used when callers pass 0.
inline int default_threads() {
    const unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1 : static_cast<int>(hc);
}

/// Runs fn(begin, end, worker) over [0, n) split into contiguous ranges.
/// The split depends only on n and the worker count; callers that reduce
/// results in worker order get identical sums for a given worker count.
inline void parallel_ranges(int n, int threads, const std::function<void(int, int, int)>& fn) {
    if (threads <= 0) threads = default_threads();
    threads = std::max(1, std::min(threads, n));
    if (threads == 1) {
        if (n > 0) fn(0, n, 0);
        return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(threads));
    const int chunk = (n + threads - 1) / threads;
    for (int t = 0; t < threads; ++t) {
        const int b = t * chunk;
        const int e = std::min(n, b + chunk);
        pool.emplace_back([&, b, e, t] {
            try {
                if (b < e) fn(b, e, t);
            } catch (...) {
                errors[static_cast<std::size_t>(t)] = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    for (auto& err : errors)
        if (err) std::rethrow_exception(err);
}

}  // namespace auxlsm

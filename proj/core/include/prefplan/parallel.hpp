#pragma once

#include <atomic>
#include <functional>
#include <thread>
#include <vector>

namespace prefplan {

/// Run fn(0..n-1), possibly on several threads. Callers keep results in
/// index-addressed slots so the schedule never changes the outcome.
inline void parallelFor(int n, int threads, const std::function<void(int)>& fn) {
    if (threads == 0) threads = static_cast<int>(std::thread::hardware_concurrency());
    threads = std::max(1, std::min(threads, n));
    if (threads <= 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(threads);
    std::atomic<int> next{0};
    for (int w = 0; w < threads; ++w) {
        pool.emplace_back([&] {
            for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
        });
    }
    for (auto& th : pool) th.join();
}

}  // namespace prefplan

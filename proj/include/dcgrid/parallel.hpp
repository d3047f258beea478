#pragma once

#include <algorithm>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace dcgrid {

// Worker count: DCGRID_THREADS when set to a positive integer, otherwise the
// hardware concurrency.
inline int worker_count() {
    if (const char* env = std::getenv("DCGRID_THREADS")) {
        int n = std::atoi(env);
        if (n > 0) return n;
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

// Evaluates f(i) for i in [0, n) and returns the results in index order, so
// any reduction done afterwards is independent of scheduling.
template <class F>
auto parallel_map(int n, F&& f) -> std::vector<decltype(f(0))> {
    using R = decltype(f(0));
    std::vector<R> out(n);
    const int w = std::min(worker_count(), n);
    if (w <= 1) {
        for (int i = 0; i < n; ++i) out[i] = f(i);
        return out;
    }
    std::exception_ptr err;
    std::mutex mu;
    std::vector<std::thread> pool;
    for (int t = 0; t < w; ++t)
        pool.emplace_back([&, t] {
            for (int i = t; i < n; i += w) {
                try {
                    out[i] = f(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lk(mu);
                    if (!err) err = std::current_exception();
                }
            }
        });
    for (auto& th : pool) th.join();
    if (err) std::rethrow_exception(err);
    return out;
}

}  // namespace dcgrid

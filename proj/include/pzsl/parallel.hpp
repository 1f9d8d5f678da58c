#pragma once

#include <algorithm>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace pzsl {

/// Worker thread cap: PZSL_THREADS when set to a positive integer, else hardware concurrency.
inline std::size_t worker_threads() {
    if (const char* env = std::getenv("PZSL_THREADS")) {
        try {
            const long n = std::stol(env);
            if (n > 0) {
                return static_cast<std::size_t>(n);
            }
        } catch (const std::exception&) {
        }
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

/// Calls fn(begin, end) over disjoint row ranges covering [0, n), possibly on worker threads.
/// Small inputs run inline.
template <class Fn>
void parallel_rows(std::size_t n, Fn&& fn, std::size_t min_rows_per_thread = 2048) {
    const std::size_t threads = std::min(worker_threads(), std::max<std::size_t>(1, n / min_rows_per_thread));
    if (threads <= 1) {
        fn(std::size_t{0}, n);
        return;
    }
    std::vector<std::jthread> pool;
    const std::size_t chunk = (n + threads - 1) / threads;
    for (std::size_t b = 0; b < n; b += chunk) {
        pool.emplace_back([&fn, b, e = std::min(n, b + chunk)] { fn(b, e); });
    }
}

} // namespace pzsl

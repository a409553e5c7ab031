#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <string>
#include <thread>
#include <vector>

namespace tinyblock {

/// Process-wide worker count used by the row-parallel kernels. Defaults to 1.
inline std::size_t& thread_count() {
    static std::size_t n = 1;
    return n;
}

inline void set_thread_count(std::size_t n) { thread_count() = std::max<std::size_t>(1, n); }

/// Reads TINYBLOCK_THREADS; returns fallback when unset or unparsable.
inline std::size_t threads_from_env(std::size_t fallback = 1) {
    const char* raw = std::getenv("TINYBLOCK_THREADS");
    if (raw == nullptr || *raw == '\0') return fallback;
    try {
        const long v = std::stol(raw);
        return v > 0 ? static_cast<std::size_t>(v) : fallback;
    } catch (...) {
        return fallback;
    }
}

/// Runs body(begin, end) over contiguous chunks of [0, n). Every index is
/// written by exactly one chunk, so kernels whose rows are independent give
/// identical results for any thread count.
template <typename Body>
void parallel_rows(std::size_t n, Body&& body, std::size_t min_chunk = 2048) {
    const std::size_t workers = std::min(thread_count(), std::max<std::size_t>(1, n / min_chunk));
    if (workers <= 1) {
        body(std::size_t{0}, n);
        return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    pool.reserve(workers);
    const std::size_t step = (n + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t lo = w * step;
        const std::size_t hi = std::min(n, lo + step);
        pool.emplace_back([&, w, lo, hi] {
            try {
                if (lo < hi) body(lo, hi);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace tinyblock

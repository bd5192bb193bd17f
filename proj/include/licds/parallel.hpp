#pragma once

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <string>
#include <thread>
#include <vector>

namespace licds {

/// Worker cap: LICDS_THREADS if set, else the hardware concurrency.
inline unsigned max_threads() {
    if (const char* env = std::getenv("LICDS_THREADS")) {
        const long v = std::strtol(env, nullptr, 10);
        if (v >= 1) return static_cast<unsigned>(v);
        return 1;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw ? hw : 1;
}

namespace detail {
inline bool& in_parallel_region() {
    thread_local bool flag = false;
    return flag;
}
} // namespace detail

/// Run fn(0..n-1), possibly on several threads. Each index is processed
/// exactly once and writes its own output slot, so results do not depend
/// on the thread count. Nested calls run serially to avoid oversubscription.
/// If any invocation throws, the exception with the lowest index is
/// rethrown after all workers finish.
template <class F>
void parallel_for_indexed(std::size_t n, F&& fn) {
    const std::size_t workers =
        detail::in_parallel_region() ? 1 : std::min<std::size_t>(max_threads(), n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }

    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(n);
    auto body = [&] {
        const bool was_parallel = detail::in_parallel_region();
        detail::in_parallel_region() = true;
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n) break;
            try {
                fn(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
        detail::in_parallel_region() = was_parallel;
    };
    std::vector<std::thread> pool;
    pool.reserve(workers - 1);
    for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(body);
    body();
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

} // namespace licds

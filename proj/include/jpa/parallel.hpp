#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace jpa {

/// Worker count used by the grid drivers: set_thread_count() if nonzero, else JPA_THREADS,
/// else the hardware concurrency.
[[nodiscard]] unsigned thread_count();
void set_thread_count(unsigned n);

/// Calls body(i) for i in [0, n) on up to `threads` workers. Each index runs exactly once;
/// callers write into index-owned slots so the result does not depend on scheduling. If any
/// call throws, the exception from the lowest failing index is rethrown after all workers
/// have stopped.
template <typename Body>
void parallel_for(std::size_t n, Body&& body, unsigned threads = thread_count()) {
    if (n == 0) return;
    const std::size_t workers = std::clamp<std::size_t>(threads, 1, n);
    std::vector<std::exception_ptr> errors(n);
    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
            try {
                body(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    if (workers == 1) {
        work();
    } else {
        std::vector<std::jthread> pool;
        pool.reserve(workers);
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
    }
    for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

}  // namespace jpa

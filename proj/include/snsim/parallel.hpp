#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace snsim {

inline int resolve_thread_count(int requested) {
    if (requested > 0) return requested;
    const unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? static_cast<int>(hw) : 1;
}

// Runs fn(index) for index in [0, count). Work items must be independent and
// write to disjoint slots; the partitioning never influences the arithmetic,
// so results are identical for any thread count.
template <typename Fn>
void parallel_for_index(std::size_t count, int n_threads, Fn&& fn) {
    const int threads = std::min<std::size_t>(resolve_thread_count(n_threads), count);
    if (threads <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(threads);
    std::vector<std::exception_ptr> errors(threads);
    for (int t = 0; t < threads; ++t) {
        pool.emplace_back([&, t]() {
            try {
                for (std::size_t i = static_cast<std::size_t>(t); i < count;
                     i += static_cast<std::size_t>(threads)) {
                    fn(i);
                }
            } catch (...) {
                errors[t] = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    for (auto& err : errors) {
        if (err) std::rethrow_exception(err);
    }
}

}  // namespace snsim

#ifndef PSOX_PARALLEL_HPP
#define PSOX_PARALLEL_HPP

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

#include "psox/io.hpp"

namespace psox {

/// Worker count from PSOX_WORKERS, defaulting to the hardware concurrency.
inline std::size_t default_workers()
{
    if (const char* env = std::getenv("PSOX_WORKERS")) {
        try {
            const auto n = parse_u64(env);
            if (n > 0)
                return n;
        } catch (const DataError&) {
        }
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

/// Calls fn(i) for i in [0, n) on a bounded pool. Callers write results into
/// slots indexed by i, so output never depends on scheduling. The first
/// exception thrown is rethrown after all workers stop.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn&& fn)
{
    if (workers == 0)
        workers = default_workers();
    workers = std::min(workers, n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i)
            fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::atomic<bool> stop{false};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto work = [&] {
        for (;;) {
            if (stop.load())
                return;
            const std::size_t i = next.fetch_add(1);
            if (i >= n)
                return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure)
                    failure = std::current_exception();
                stop = true;
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w)
        pool.emplace_back(work);
    for (auto& t : pool)
        t.join();
    if (failure)
        std::rethrow_exception(failure);
}

} // namespace psox

#endif // PSOX_PARALLEL_HPP

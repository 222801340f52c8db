#pragma once

#include <algorithm>
#include <cstdlib>
#include <exception>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace ricemap {

// Worker count: explicit request > PHENORICE_THREADS > hardware concurrency.
inline int resolve_worker_count(int requested = 0) {
    int n = requested;
    if (n <= 0) {
        if (const char* env = std::getenv("PHENORICE_THREADS")) {
            n = std::atoi(env);
        }
    }
    if (n <= 0) n = int(std::thread::hardware_concurrency());
    return std::max(1, n);
}

// Runs fn(begin, end) over contiguous chunks of [0, count). Every element is
// owned by exactly one chunk and results must be written to per-element slots,
// so output is identical for any worker count.
inline void parallel_chunks(std::size_t count, int workers,
                            const std::function<void(std::size_t, std::size_t)>& fn) {
    workers = std::max(1, workers);
    if (count == 0) return;
    if (workers == 1 || count < 2) {
        fn(0, count);
        return;
    }
    const std::size_t nchunks = std::min<std::size_t>(std::size_t(workers), count);
    const std::size_t base = count / nchunks;
    const std::size_t extra = count % nchunks;

    std::vector<std::thread> threads;
    threads.reserve(nchunks);
    std::exception_ptr first_error;
    std::mutex error_mu;

    std::size_t begin = 0;
    for (std::size_t c = 0; c < nchunks; ++c) {
        const std::size_t len = base + (c < extra ? 1 : 0);
        const std::size_t end = begin + len;
        threads.emplace_back([&, begin, end] {
            try {
                fn(begin, end);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mu);
                if (!first_error) first_error = std::current_exception();
            }
        });
        begin = end;
    }
    for (auto& t : threads) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

} // namespace ricemap

#pragma once

#include <cstddef>
#include <functional>
#include <thread>
#include <vector>

namespace taxgrow {

inline unsigned effective_threads(unsigned requested) {
    if (requested != 0) return requested;
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : hw;
}

// Static range split; chunk_fn(begin, end) must not touch another chunk's
// output slots. Runs inline when a single thread suffices.
inline void parallel_for(std::size_t n, unsigned threads,
                         const std::function<void(std::size_t, std::size_t)>& chunk_fn) {
    threads = effective_threads(threads);
    if (n == 0) return;
    if (threads <= 1 || n == 1) {
        chunk_fn(0, n);
        return;
    }
    const std::size_t workers = std::min<std::size_t>(threads, n);
    const std::size_t base = n / workers;
    const std::size_t extra = n % workers;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    std::size_t begin = 0;
    for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t len = base + (w < extra ? 1 : 0);
        pool.emplace_back(chunk_fn, begin, begin + len);
        begin += len;
    }
    for (auto& t : pool) t.join();
}

} // namespace taxgrow

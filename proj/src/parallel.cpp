#include "avatar/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <thread>
#include <vector>

namespace avatar {

namespace {
std::atomic<int> g_threads{1};
}

void set_thread_count(int n) { g_threads = std::max(1, n); }

int thread_count() { return g_threads; }

void parallel_blocks(std::size_t n, const std::function<void(std::size_t, std::size_t)> &fn) {
    if (n == 0) return;
    const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(g_threads.load()), n);
    if (workers <= 1) {
        fn(0, n);
        return;
    }
    const std::size_t chunk = (n + workers - 1) / workers;
    std::vector<std::thread> pool;
    pool.reserve(workers - 1);
    for (std::size_t w = 1; w < workers; ++w) {
        const std::size_t begin = w * chunk;
        const std::size_t end = std::min(n, begin + chunk);
        if (begin >= end) break;
        pool.emplace_back([&fn, begin, end] { fn(begin, end); });
    }
    fn(0, std::min(n, chunk));
    for (auto &t : pool) t.join();
}

void parallel_chunks(std::size_t n, std::size_t chunk,
                     const std::function<void(std::size_t, std::size_t, std::size_t)> &fn) {
    if (n == 0) return;
    chunk = std::max<std::size_t>(1, chunk);
    const std::size_t count = (n + chunk - 1) / chunk;
    parallel_blocks(count, [&](std::size_t c0, std::size_t c1) {
        for (std::size_t c = c0; c < c1; ++c) fn(c, c * chunk, std::min(n, (c + 1) * chunk));
    });
}

} // namespace avatar

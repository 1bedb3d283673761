#pragma once

#include <cstddef>
#include <functional>

namespace avatar {

/// Upper bound on worker threads used by the renderer, fields and losses.
void set_thread_count(int n);
int thread_count();

/// Runs fn(begin, end) over contiguous static blocks of [0, n).
///
/// Block boundaries depend only on n and the thread count, so callers that
/// reduce per-block partial results in block order get reproducible sums.
void parallel_blocks(std::size_t n, const std::function<void(std::size_t, std::size_t)> &fn);

/// Splits [0, n) into ceil(n / chunk) fixed chunks and runs fn(chunk_index, begin, end)
/// for each, spread over the workers. Chunk boundaries ignore the thread count.
void parallel_chunks(std::size_t n, std::size_t chunk,
                     const std::function<void(std::size_t, std::size_t, std::size_t)> &fn);

/// Element-wise convenience over parallel_blocks. fn must not write shared state.
template <class Fn> void parallel_for(std::size_t n, Fn &&fn) {
    parallel_blocks(n, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) fn(i);
    });
}

} // namespace avatar

#pragma once

#include <cstddef>
#include <functional>

namespace xmas {

/// Rows per work unit. Reductions combine per-chunk partials in chunk order,
/// so results never depend on the worker count.
inline constexpr std::size_t kDefaultChunk = 256;

/// Calls `body(chunk_index, begin, end)` for every chunk of [0, n). Chunk
/// boundaries depend only on `n` and `chunk`. Chunks are handed to up to
/// `threads` workers; if any throws, the exception from the lowest chunk
/// index is rethrown after all workers join.
void for_each_chunk(std::size_t n, std::size_t chunk, int threads,
                    const std::function<void(std::size_t, std::size_t, std::size_t)>& body);

inline std::size_t chunk_count(std::size_t n, std::size_t chunk) {
  return n == 0 ? 0 : (n + chunk - 1) / chunk;
}

}  // namespace xmas

#include "xmas/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <thread>
#include <vector>

namespace xmas {

void for_each_chunk(std::size_t n, std::size_t chunk, int threads,
                    const std::function<void(std::size_t, std::size_t, std::size_t)>& body) {
  if (chunk == 0) chunk = 1;
  const std::size_t chunks = chunk_count(n, chunk);
  if (chunks == 0) return;

  const std::size_t workers =
      std::min<std::size_t>(chunks, static_cast<std::size_t>(std::max(threads, 1)));
  std::vector<std::exception_ptr> errors(chunks);

  auto run_chunk = [&](std::size_t c) {
    const std::size_t begin = c * chunk;
    const std::size_t end = std::min(n, begin + chunk);
    try {
      body(c, begin, end);
    } catch (...) {
      errors[c] = std::current_exception();
    }
  };

  if (workers == 1) {
    for (std::size_t c = 0; c < chunks; ++c) run_chunk(c);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t c = next.fetch_add(1); c < chunks; c = next.fetch_add(1)) run_chunk(c);
      });
    }
    for (auto& t : pool) t.join();
  }

  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace xmas

#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace skewbesq {

inline unsigned resolve_threads(unsigned requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1u : hw;
}

/// Evaluates fn(i) for i in [0, n) on up to `threads` workers and returns the
/// results in index order. Work is handed out in fixed-size chunks; results
/// never depend on scheduling. When several indices throw, the exception of
/// the smallest index is rethrown.
template <class Result, class Fn>
std::vector<Result> parallel_map(std::size_t n, unsigned threads, Fn&& fn) {
  std::vector<Result> out(n);
  const unsigned workers = static_cast<unsigned>(
      std::min<std::size_t>(resolve_threads(threads), std::max<std::size_t>(n, 1)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) out[i] = fn(i);
    return out;
  }

  constexpr std::size_t chunk = 64;
  std::atomic<std::size_t> next{0};
  std::mutex err_mu;
  std::exception_ptr err;
  std::size_t err_index = n;

  auto work = [&] {
    for (;;) {
      const std::size_t begin = next.fetch_add(chunk);
      if (begin >= n) return;
      const std::size_t end = std::min(n, begin + chunk);
      for (std::size_t i = begin; i < end; ++i) {
        try {
          out[i] = fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lk(err_mu);
          if (i < err_index) {
            err_index = i;
            err = std::current_exception();
          }
          break;
        }
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
  for (auto& t : pool) t.join();
  if (err) std::rethrow_exception(err);
  return out;
}

} // namespace skewbesq

#pragma once

// Deterministic chunked parallelism: work splits into fixed-size chunks that
// write disjoint outputs, so results are bitwise identical for any thread
// count.

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace menumax {

inline constexpr Eigen::Index kChunkCols = 2048;

template <class Fn>  // void(Eigen::Index lo, Eigen::Index hi)
void parallel_chunks(Eigen::Index total, Fn fn, Eigen::Index chunk = kChunkCols) {
  if (total <= 0) return;
  const Eigen::Index nchunks = (total + chunk - 1) / chunk;
  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  const unsigned nthreads = static_cast<unsigned>(std::min<Eigen::Index>(hw, nchunks));
  if (nthreads <= 1) {
    for (Eigen::Index c = 0; c < nchunks; ++c)
      fn(c * chunk, std::min(total, (c + 1) * chunk));
    return;
  }
  std::atomic<Eigen::Index> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  std::vector<std::thread> pool;
  pool.reserve(nthreads);
  for (unsigned t = 0; t < nthreads; ++t)
    pool.emplace_back([&]() {
      for (;;) {
        const Eigen::Index c = next.fetch_add(1);
        if (c >= nchunks) return;
        try {
          fn(c * chunk, std::min(total, (c + 1) * chunk));
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mu);
          if (!error) error = std::current_exception();
          return;
        }
      }
    });
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace menumax

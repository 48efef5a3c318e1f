// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstdint>
#include <exception>
#include <thread>
#include <vector>

namespace cluster_tails {

/// Runs body(i) for i in [0, n), splitting the range into contiguous blocks,
/// one per worker. Results must be written to index-addressed slots so the
/// outcome does not depend on the worker count.
///
/// If bodies throw, the exception raised at the smallest index is rethrown
/// after all workers have joined. Each worker stops at its first failure, and
/// blocks are processed in increasing order, so that index is the global
/// minimum among failing indices.
template <class Body>
void parallel_for(std::uint64_t n, unsigned workers, Body&& body) {
  workers = std::max(1u, workers);
  if (workers == 1 || n < 2) {
    for (std::uint64_t i = 0; i < n; ++i) body(i);
    return;
  }
  const auto used = static_cast<unsigned>(std::min<std::uint64_t>(workers, n));
  struct Failure {
    std::uint64_t index = UINT64_MAX;
    std::exception_ptr error;
  };
  std::vector<Failure> failures(used);
  {
    std::vector<std::jthread> pool;
    pool.reserve(used);
    for (unsigned w = 0; w < used; ++w) {
      const std::uint64_t begin = n * w / used;
      const std::uint64_t end = n * (w + 1) / used;
      pool.emplace_back([&, w, begin, end] {
        std::uint64_t i = begin;
        try {
          for (; i < end; ++i) body(i);
        } catch (...) {
          failures[w] = {i, std::current_exception()};
        }
      });
    }
  }
  const auto first = std::min_element(failures.begin(), failures.end(),
                                      [](const Failure& a, const Failure& b) { return a.index < b.index; });
  if (first->error) std::rethrow_exception(first->error);
}

}  // namespace cluster_tails

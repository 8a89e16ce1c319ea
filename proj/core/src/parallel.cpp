// Copyright 2026 The capsq Authors
// SPDX-License-Identifier: Apache-2.0

#include "capsq/parallel.hpp"

#include <exception>
#include <string>
#include <thread>

#include "capsq/error.hpp"

namespace capsq {

std::vector<Range> partition(std::size_t total, int workers) {
  if (workers < 1) {
    throw ValueError("partition: worker count must be positive, got " + std::to_string(workers));
  }
  const auto k = static_cast<std::size_t>(workers);
  const std::size_t chunk = total / k;
  std::vector<Range> blocks(k);
  for (std::size_t w = 0; w < k; ++w) {
    blocks[w].begin = w * chunk;
    blocks[w].end = (w + 1 == k) ? total : (w + 1) * chunk;
  }
  return blocks;
}

void run_partitioned(std::size_t total, int workers,
                     const std::function<void(Range)>& fn) {
  const auto blocks = partition(total, workers);
  if (blocks.size() == 1) {
    fn(blocks.front());
    return;
  }

  std::vector<std::exception_ptr> errors(blocks.size());
  {
    std::vector<std::jthread> threads;
    threads.reserve(blocks.size() - 1);
    for (std::size_t w = 1; w < blocks.size(); ++w) {
      if (blocks[w].size() == 0) continue;
      threads.emplace_back([&, w] {
        try {
          fn(blocks[w]);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    try {
      if (blocks[0].size() != 0) fn(blocks[0]);
    } catch (...) {
      errors[0] = std::current_exception();
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace capsq

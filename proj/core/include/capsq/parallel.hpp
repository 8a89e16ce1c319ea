// Copyright 2026 The capsq Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <vector>

namespace capsq {

/// Half-open index range [begin, end).
struct Range {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const noexcept { return end - begin; }
  friend bool operator==(const Range&, const Range&) = default;
};

/// Splits [0, total) into `workers` contiguous blocks of total / workers
/// items; the last block also takes the remainder. Blocks may be empty when
/// workers > total.
std::vector<Range> partition(std::size_t total, int workers);

/// Runs fn over each block of partition(total, workers). Block 0 runs on the
/// calling thread, the rest on their own threads. The caller guarantees that
/// blocks write disjoint outputs, so results do not depend on scheduling.
void run_partitioned(std::size_t total, int workers,
                     const std::function<void(Range)>& fn);

}  // namespace capsq

// Copyright 2026 The capsq Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace capsq::cli {

inline constexpr const char* kBenchSchema = "capsq-bench/1";
inline constexpr const char* kBenchCsvHeader =
    "schema,kernel,strategy,dims,iters,workers,macs,wall_ns,ns_per_mac,checksum";

struct BenchOptions {
  std::string kernel = "matmul";
  std::string strategy;  // empty: the kernel's default
  std::string dims;      // empty: the kernel's default
  int iters = 100;
  int workers = 1;
  std::uint64_t seed = 42;
};

struct BenchReport {
  std::string kernel;
  std::string strategy;
  std::string dims;
  int iters = 0;
  int workers = 1;
  std::uint64_t macs = 0;
  std::uint64_t wall_ns = 0;
  std::uint64_t checksum = 0;

  double ns_per_mac() const noexcept;
  std::string csv_row() const;
};

/// Throws ValueError on unknown kernels, strategies or malformed dims.
BenchReport run_bench(const BenchOptions& opts);

/// Parses "AxBxC..." into exactly `count` positive integers.
std::vector<int> parse_dims(const std::string& text, std::size_t count);

std::uint64_t fnv1a(std::span<const std::uint8_t> bytes,
                    std::uint64_t hash = 0xcbf29ce484222325ULL) noexcept;

template <class Range>
std::uint64_t fnv1a_of(const Range& values, std::uint64_t hash = 0xcbf29ce484222325ULL) noexcept {
  const auto bytes = std::as_bytes(std::span(values));
  return fnv1a({reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size()}, hash);
}

}  // namespace capsq::cli

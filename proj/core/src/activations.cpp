// Copyright 2026 The capsq Authors
// SPDX-License-Identifier: Apache-2.0

#include "capsq/activations.hpp"

#include <algorithm>
#include <string>

#include "capsq/error.hpp"
#include "capsq/parallel.hpp"

namespace capsq {

VectorNorm vector_norm_q(std::span<const q7_t> v) noexcept {
  std::uint32_t sq = 0;
  for (q7_t x : v) sq += static_cast<std::uint32_t>(std::int32_t{x} * std::int32_t{x});
  return {isqrt(sq), sq};
}

void squash_q7_into(MatView rows, SquashParams p, MutMatView out, int workers) {
  if (out.rows != rows.rows || out.cols != rows.cols) {
    throw ShapeError("squash: output shape differs from input");
  }
  if (p.in_frac_bits < 0 || p.in_frac_bits > kMaxShift) {
    throw ValueError("squash: input fractional bits " + std::to_string(p.in_frac_bits) +
                     " outside [0, 31]");
  }
  const int iqn = p.in_frac_bits;
  const int rel = SquashParams::kOutFracBits - iqn;

  run_partitioned(static_cast<std::size_t>(rows.rows), workers, [&](Range r) {
    for (auto i = static_cast<int>(r.begin); i < static_cast<int>(r.end); ++i) {
      const auto row = rows.data.subspan(static_cast<std::size_t>(i) * rows.cols,
                                         static_cast<std::size_t>(rows.cols));
      const VectorNorm n = vector_norm_q(row);
      const std::int32_t scale = rel >= 0 ? static_cast<std::int32_t>(n.norm << rel)
                                          : static_cast<std::int32_t>(n.norm >> -rel);
      const std::int64_t denom =
          (std::int64_t{1} << iqn) + static_cast<std::int64_t>(n.sq_norm >> iqn);
      for (int k = 0; k < rows.cols; ++k) {
        const std::int64_t q = std::int64_t{row[k]} * scale / denom;
        out(i, k) = static_cast<q7_t>(std::clamp<std::int64_t>(q, kQ7Min, kQ7Max));
      }
    }
  });
}

QMatrix squash_q7(const QMatrix& rows, SquashParams p, int workers) {
  QMatrix out(rows.rows(), rows.cols(), QFormat{});
  squash_q7_into(rows.view(), p, out.mut_view(), workers);
  return out;
}

void softmax_q7_group(std::span<const q7_t> logits, int logit_frac_bits, std::span<q7_t> out) {
  constexpr std::int32_t kUnit = 1 << 15;
  if (logits.empty()) return;
  const int shift = std::clamp(logit_frac_bits, 0, kMaxShift);
  const std::int32_t top = *std::max_element(logits.begin(), logits.end());

  // e_i = 2^15 >> floor((max - logit_i) / 2^frac), i.e. 2^-(distance) on a
  // 2^15 grid; at most 30 halvings.
  std::vector<std::int32_t> e(logits.size());
  std::int64_t total = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const std::int32_t dist = (top - std::int32_t{logits[i]}) >> shift;
    e[i] = kUnit >> std::min(dist, 30);
    total += e[i];
  }
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const std::int64_t q = (std::int64_t{e[i]} << 7) / total;
    out[i] = static_cast<q7_t>(std::clamp<std::int64_t>(q, 0, kQ7Max));
  }
}

std::vector<q7_t> softmax_q7(std::span<const q7_t> logits, int groups, int logit_frac_bits) {
  if (groups <= 0 || logits.size() % static_cast<std::size_t>(groups) != 0) {
    throw ValueError("softmax: " + std::to_string(logits.size()) +
                     " logits do not split into " + std::to_string(groups) + " groups");
  }
  if (logit_frac_bits < 0) {
    throw ValueError("softmax: negative logit fractional bits");
  }
  std::vector<q7_t> out(logits.size());
  const std::size_t n = logits.size() / static_cast<std::size_t>(groups);
  for (std::size_t g = 0; g < static_cast<std::size_t>(groups); ++g) {
    softmax_q7_group(logits.subspan(g * n, n), logit_frac_bits,
                     std::span<q7_t>(out).subspan(g * n, n));
  }
  return out;
}

std::vector<q7_t> relu_q7(std::span<const q7_t> x) {
  std::vector<q7_t> out(x.begin(), x.end());
  relu_q7_inplace(out);
  return out;
}

void relu_q7_inplace(std::span<q7_t> x) noexcept {
  for (auto& v : x) v = std::max<q7_t>(v, 0);
}

}  // namespace capsq

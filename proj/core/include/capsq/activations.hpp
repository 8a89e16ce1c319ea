// Copyright 2026 The capsq Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "capsq/qcore.hpp"
#include "capsq/tensor.hpp"

namespace capsq {

struct VectorNorm {
  std::uint32_t norm = 0;     // isqrt(sq_norm)
  std::uint32_t sq_norm = 0;  // sum of squares, 32-bit accumulator
};

/// Squared length and integer length of an int-8 vector (length <= 2^15).
VectorNorm vector_norm_q(std::span<const q7_t> v) noexcept;

/// Fractional bits of the squash input. The output is always Q0.7.
struct SquashParams {
  static constexpr int kOutFracBits = 7;
  int in_frac_bits = 7;
};

/// Integer squash of each row, Q(in) -> Q0.7:
///   scale = norm << (7 - i_qn)  (a right shift when negative)
///   denom = (1 << i_qn) + (sq_norm >> i_qn)
///   out_k = clamp(row_k * scale / denom, -128, 127), truncating division.
/// Rows are split over `workers`.
void squash_q7_into(MatView rows, SquashParams p, MutMatView out, int workers = 1);

QMatrix squash_q7(const QMatrix& rows, SquashParams p, int workers = 1);

/// Base-2 integer softmax over `groups` contiguous groups of equal size.
/// Logits carry `logit_frac_bits` fractional bits; outputs are Q0.7 and each
/// group sums to a value in (128 - N, 128]. Throws ValueError when the length
/// is not divisible by `groups`.
std::vector<q7_t> softmax_q7(std::span<const q7_t> logits, int groups, int logit_frac_bits);

/// One group, written to out (same length as logits).
void softmax_q7_group(std::span<const q7_t> logits, int logit_frac_bits, std::span<q7_t> out);

std::vector<q7_t> relu_q7(std::span<const q7_t> x);

void relu_q7_inplace(std::span<q7_t> x) noexcept;

}  // namespace capsq

// Copyright 2026 The capsq Authors
// SPDX-License-Identifier: Apache-2.0

// Quantized linear-algebra kernels: matrix multiplication in several loop
// strategies, matrix addition and HWC convolution. Every strategy and every
// worker count produces bit-identical output.

#pragma once

#include <cstdint>
#include <cstring>
#include <optional>
#include <span>
#include <string_view>

#include "capsq/qcore.hpp"
#include "capsq/tensor.hpp"

namespace capsq {

enum class MatMulStrategy {
  kNaive,        // row of A times column of B, no preprocessing
  kTransposedB,  // transpose B first so both operands stream contiguously
  kPackedDot,    // transposed B, 4x8-bit packed dot product per 32-bit word
};

/// The strategy layers use when the caller does not pick one.
inline constexpr MatMulStrategy kFastestMatMul = MatMulStrategy::kPackedDot;

std::string_view to_string(MatMulStrategy s) noexcept;
std::optional<MatMulStrategy> parse_matmul_strategy(std::string_view name) noexcept;

/// out = saturate_q7(a * b, out_shift). Rows of the output are split over
/// `workers`. Throws ShapeError on a.cols != b.rows or a wrong output shape.
void mat_mult_into(MatView a, MatView b, int out_shift, MatMulStrategy strategy,
                   MutMatView out, int workers = 1);

QMatrix mat_mult(const QMatrix& a, const QMatrix& b, int out_shift,
                 MatMulStrategy strategy = kFastestMatMul, int workers = 1);

QMatrix transpose(const QMatrix& m);

/// out = saturate_q7(a + b, out_shift) with the sum taken in 32 bits.
void mat_add_into(MatView a, MatView b, int out_shift, MutMatView out);

QMatrix mat_add(const QMatrix& a, const QMatrix& b, int out_shift);

/// Parameters of a 2D convolution over an HWC tensor. Weights are laid out
/// [out_c][kernel_h][kernel_w][in_c]; padded taps read as zero.
struct ConvParams {
  int in_h = 0;
  int in_w = 0;
  int in_c = 0;
  int out_c = 0;
  int kernel_h = 1;
  int kernel_w = 1;
  int stride_h = 1;
  int stride_w = 1;
  int pad_h = 0;
  int pad_w = 0;
  int bias_shift = 0;
  int out_shift = 0;

  int out_h() const noexcept { return (in_h + 2 * pad_h - kernel_h) / stride_h + 1; }
  int out_w() const noexcept { return (in_w + 2 * pad_w - kernel_w) / stride_w + 1; }
  FeatureShape in_shape() const noexcept { return {in_h, in_w, in_c}; }
  FeatureShape out_shape() const noexcept { return {out_h(), out_w(), out_c}; }
  std::size_t weight_count() const noexcept {
    return static_cast<std::size_t>(out_c) * kernel_h * kernel_w * in_c;
  }

  /// Throws ShapeError/ValueError when the shape arithmetic is inconsistent.
  void validate() const;
};

enum class ConvVariant {
  kAuto,   // fast when in_c % 4 == 0 and out_c % 2 == 0, basic otherwise
  kBasic,  // scalar MAC loop
  kFast,   // packed 4-channel dot products, two output channels per pass
};

enum class ConvSplit {
  kChannel,  // workers own contiguous output-channel blocks
  kHeight,   // workers own contiguous output-row blocks
};

struct ConvExec {
  ConvVariant variant = ConvVariant::kAuto;
  ConvSplit split = ConvSplit::kChannel;
  int workers = 1;
};

/// acc = (bias[o] << bias_shift) + sum(w * x); out = saturate_q7(acc, out_shift),
/// then clipped at zero when relu is set.
void conv2d_hwc_into(std::span<const q7_t> input, std::span<const q7_t> weights,
                     std::span<const q7_t> bias, const ConvParams& p, bool relu,
                     std::span<q7_t> out, const ConvExec& exec = {});

QTensor conv2d_hwc(const QTensor& input, std::span<const q7_t> weights,
                   std::span<const q7_t> bias, const ConvParams& p, bool relu,
                   const ConvExec& exec = {});

namespace detail {

/// Loads four consecutive int-8 values as one 32-bit word.
inline std::uint32_t load_q7x4(const q7_t* p) noexcept {
  std::uint32_t w;
  std::memcpy(&w, p, sizeof(w));
  return w;
}

/// Signed 4x8-bit dot product accumulated into acc, lane by lane.
inline acc32_t sdot4(std::uint32_t a, std::uint32_t b, acc32_t acc) noexcept {
  for (int lane = 0; lane < 4; ++lane) {
    const auto shift = static_cast<unsigned>(lane * 8);
    const auto ai = static_cast<std::int8_t>(static_cast<std::uint8_t>(a >> shift));
    const auto bi = static_cast<std::int8_t>(static_cast<std::uint8_t>(b >> shift));
    acc += static_cast<acc32_t>(ai) * static_cast<acc32_t>(bi);
  }
  return acc;
}

/// Transposed B sign-extended to 16 bits, two MACs per step. Mirrors the
/// Cortex-M SMLAD loop; only the bench command drives it.
void mat_mult_sign_extend_pairs(MatView a, MatView b, int out_shift, MutMatView out,
                                int workers = 1);

/// (int64 bias << shift) saturated into the 32-bit accumulator range.
acc32_t shifted_bias(q7_t bias, int bias_shift) noexcept;

}  // namespace detail

}  // namespace capsq

// Copyright 2026 The capsq Authors
// SPDX-License-Identifier: Apache-2.0

#include "capsq/kernels.hpp"

#include <algorithm>
#include <limits>
#include <string>
#include <vector>

#include "capsq/error.hpp"
#include "capsq/parallel.hpp"

namespace capsq {
namespace {

std::string dims(MatView m) {
  return "[" + std::to_string(m.rows) + "x" + std::to_string(m.cols) + "]";
}

void check_shift(int shift, const char* who) {
  if (shift < 0 || shift > kMaxShift) {
    throw ValueError(std::string(who) + ": shift " + std::to_string(shift) + " outside [0, 31]");
  }
}

void check_matmul_shapes(MatView a, MatView b, MutMatView out) {
  if (a.cols != b.rows) {
    throw ShapeError("mat_mult: inner dimensions differ, A " + dims(a) + " vs B " + dims(b));
  }
  if (out.rows != a.rows || out.cols != b.cols) {
    throw ShapeError("mat_mult: output " + dims(out) + " does not match A " + dims(a) +
                     " x B " + dims(b));
  }
}

std::vector<q7_t> transposed(MatView b) {
  std::vector<q7_t> bt(static_cast<std::size_t>(b.rows) * b.cols);
  for (int k = 0; k < b.rows; ++k) {
    for (int j = 0; j < b.cols; ++j) {
      bt[static_cast<std::size_t>(j) * b.rows + k] = b(k, j);
    }
  }
  return bt;
}

void matmul_naive(MatView a, MatView b, int shift, MutMatView out, Range rows) {
  for (auto i = static_cast<int>(rows.begin); i < static_cast<int>(rows.end); ++i) {
    for (int j = 0; j < b.cols; ++j) {
      acc32_t sum = 0;
      for (int k = 0; k < a.cols; ++k) sum += acc32_t{a(i, k)} * acc32_t{b(k, j)};
      out(i, j) = saturate_q7(sum, shift);
    }
  }
}

void matmul_transposed(MatView a, std::span<const q7_t> bt, int cols_b, int shift,
                       MutMatView out, Range rows) {
  const int depth = a.cols;
  for (auto i = static_cast<int>(rows.begin); i < static_cast<int>(rows.end); ++i) {
    const q7_t* arow = a.data.data() + static_cast<std::size_t>(i) * depth;
    for (int j = 0; j < cols_b; ++j) {
      const q7_t* brow = bt.data() + static_cast<std::size_t>(j) * depth;
      acc32_t sum = 0;
      for (int k = 0; k < depth; ++k) sum += acc32_t{arow[k]} * acc32_t{brow[k]};
      out(i, j) = saturate_q7(sum, shift);
    }
  }
}

void matmul_packed(MatView a, std::span<const q7_t> bt, int cols_b, int shift,
                   MutMatView out, Range rows) {
  const int depth = a.cols;
  const int packed = depth >> 2;
  const int tail = depth & 3;
  for (auto i = static_cast<int>(rows.begin); i < static_cast<int>(rows.end); ++i) {
    const q7_t* arow = a.data.data() + static_cast<std::size_t>(i) * depth;
    for (int j = 0; j < cols_b; ++j) {
      const q7_t* brow = bt.data() + static_cast<std::size_t>(j) * depth;
      acc32_t sum = 0;
      const q7_t* pa = arow;
      const q7_t* pb = brow;
      for (int w = 0; w < packed; ++w, pa += 4, pb += 4) {
        sum = detail::sdot4(detail::load_q7x4(pa), detail::load_q7x4(pb), sum);
      }
      for (int t = 0; t < tail; ++t) sum += acc32_t{pa[t]} * acc32_t{pb[t]};
      out(i, j) = saturate_q7(sum, shift);
    }
  }
}

}  // namespace

std::string_view to_string(MatMulStrategy s) noexcept {
  switch (s) {
    case MatMulStrategy::kNaive: return "naive";
    case MatMulStrategy::kTransposedB: return "transposed_b";
    case MatMulStrategy::kPackedDot: return "packed_dot";
  }
  return "unknown";
}

std::optional<MatMulStrategy> parse_matmul_strategy(std::string_view name) noexcept {
  for (auto s : {MatMulStrategy::kNaive, MatMulStrategy::kTransposedB, MatMulStrategy::kPackedDot}) {
    if (name == to_string(s)) return s;
  }
  return std::nullopt;
}

void mat_mult_into(MatView a, MatView b, int out_shift, MatMulStrategy strategy,
                   MutMatView out, int workers) {
  check_matmul_shapes(a, b, out);
  check_shift(out_shift, "mat_mult");
  const auto rows = static_cast<std::size_t>(a.rows);

  switch (strategy) {
    case MatMulStrategy::kNaive:
      run_partitioned(rows, workers, [&](Range r) { matmul_naive(a, b, out_shift, out, r); });
      return;
    case MatMulStrategy::kTransposedB: {
      const auto bt = transposed(b);
      run_partitioned(rows, workers,
                      [&](Range r) { matmul_transposed(a, bt, b.cols, out_shift, out, r); });
      return;
    }
    case MatMulStrategy::kPackedDot: {
      const auto bt = transposed(b);
      run_partitioned(rows, workers,
                      [&](Range r) { matmul_packed(a, bt, b.cols, out_shift, out, r); });
      return;
    }
  }
  throw ValueError("mat_mult: unknown strategy");
}

QMatrix mat_mult(const QMatrix& a, const QMatrix& b, int out_shift, MatMulStrategy strategy,
                 int workers) {
  if (a.cols() != b.rows()) {
    throw ShapeError("mat_mult: inner dimensions differ, A " + a.shape_str() + " vs B " +
                     b.shape_str());
  }
  QMatrix out(a.rows(), b.cols());
  mat_mult_into(a.view(), b.view(), out_shift, strategy, out.mut_view(), workers);
  return out;
}

QMatrix transpose(const QMatrix& m) {
  return QMatrix(m.cols(), m.rows(), transposed(m.view()), m.fmt());
}

void mat_add_into(MatView a, MatView b, int out_shift, MutMatView out) {
  if (a.rows != b.rows || a.cols != b.cols || out.rows != a.rows || out.cols != a.cols) {
    throw ShapeError("mat_add: shapes differ, A " + dims(a) + " B " + dims(b) + " out " +
                     dims(out));
  }
  check_shift(out_shift, "mat_add");
  for (std::size_t k = 0; k < a.data.size(); ++k) {
    out.data[k] = saturate_q7(acc32_t{a.data[k]} + acc32_t{b.data[k]}, out_shift);
  }
}

QMatrix mat_add(const QMatrix& a, const QMatrix& b, int out_shift) {
  QMatrix out(a.rows(), a.cols(), a.fmt());
  mat_add_into(a.view(), b.view(), out_shift, out.mut_view());
  return out;
}

// ---------------------------------------------------------------------------
// Convolution

void ConvParams::validate() const {
  if (in_h <= 0 || in_w <= 0 || in_c <= 0 || out_c <= 0) {
    throw ShapeError("conv: non-positive extent (in " + in_shape().str() + ", out_c " +
                     std::to_string(out_c) + ")");
  }
  if (kernel_h <= 0 || kernel_w <= 0 || stride_h <= 0 || stride_w <= 0) {
    throw ShapeError("conv: kernel and stride must be positive");
  }
  if (pad_h < 0 || pad_w < 0) throw ShapeError("conv: negative padding");
  if (in_h + 2 * pad_h < kernel_h || in_w + 2 * pad_w < kernel_w) {
    throw ShapeError("conv: kernel " + std::to_string(kernel_h) + "x" + std::to_string(kernel_w) +
                     " larger than padded input " + in_shape().str());
  }
  check_shift(bias_shift, "conv bias");
  check_shift(out_shift, "conv output");
}

namespace detail {

acc32_t shifted_bias(q7_t bias, int bias_shift) noexcept {
  const std::int64_t wide = static_cast<std::int64_t>(bias) * (std::int64_t{1} << bias_shift);
  return static_cast<acc32_t>(std::clamp<std::int64_t>(
      wide, std::numeric_limits<acc32_t>::min(), std::numeric_limits<acc32_t>::max()));
}

void mat_mult_sign_extend_pairs(MatView a, MatView b, int out_shift, MutMatView out,
                                int workers) {
  check_matmul_shapes(a, b, out);
  check_shift(out_shift, "mat_mult");
  const int depth = a.cols;
  std::vector<std::int16_t> bt(static_cast<std::size_t>(b.rows) * b.cols);
  for (int k = 0; k < b.rows; ++k) {
    for (int j = 0; j < b.cols; ++j) bt[static_cast<std::size_t>(j) * depth + k] = b(k, j);
  }
  run_partitioned(static_cast<std::size_t>(a.rows), workers, [&](Range r) {
    std::vector<std::int16_t> arow(static_cast<std::size_t>(depth));
    for (auto i = static_cast<int>(r.begin); i < static_cast<int>(r.end); ++i) {
      for (int k = 0; k < depth; ++k) arow[k] = a(i, k);
      for (int j = 0; j < b.cols; ++j) {
        const std::int16_t* brow = bt.data() + static_cast<std::size_t>(j) * depth;
        acc32_t sum = 0;
        int k = 0;
        // Two dual 16-bit MACs per group of four.
        for (; k + 4 <= depth; k += 4) {
          sum += arow[k] * brow[k] + arow[k + 1] * brow[k + 1];
          sum += arow[k + 2] * brow[k + 2] + arow[k + 3] * brow[k + 3];
        }
        for (; k < depth; ++k) sum += arow[k] * brow[k];
        out(i, j) = saturate_q7(sum, out_shift);
      }
    }
  });
}

}  // namespace detail

namespace {

struct ConvRegion {
  int oy_begin, oy_end;
  int oc_begin, oc_end;
};

// Accumulates one output pixel for output channel oc, scalar loop.
acc32_t conv_pixel_basic(std::span<const q7_t> input, std::span<const q7_t> weights,
                         const ConvParams& p, int oy, int ox, int oc) {
  acc32_t acc = 0;
  const q7_t* filt = weights.data() + static_cast<std::size_t>(oc) * p.kernel_h * p.kernel_w * p.in_c;
  for (int ky = 0; ky < p.kernel_h; ++ky) {
    const int iy = oy * p.stride_h - p.pad_h + ky;
    if (iy < 0 || iy >= p.in_h) continue;
    for (int kx = 0; kx < p.kernel_w; ++kx) {
      const int ix = ox * p.stride_w - p.pad_w + kx;
      if (ix < 0 || ix >= p.in_w) continue;
      const q7_t* px = input.data() + (static_cast<std::size_t>(iy) * p.in_w + ix) * p.in_c;
      const q7_t* wk = filt + (static_cast<std::size_t>(ky) * p.kernel_w + kx) * p.in_c;
      for (int ic = 0; ic < p.in_c; ++ic) acc += acc32_t{px[ic]} * acc32_t{wk[ic]};
    }
  }
  return acc;
}

q7_t finish(acc32_t acc, const ConvParams& p, bool relu) {
  q7_t v = saturate_q7(acc, p.out_shift);
  if (relu && v < 0) v = 0;
  return v;
}

void conv_basic(std::span<const q7_t> input, std::span<const q7_t> weights,
                std::span<const q7_t> bias, const ConvParams& p, bool relu,
                std::span<q7_t> out, ConvRegion reg) {
  const int ow = p.out_w();
  for (int oy = reg.oy_begin; oy < reg.oy_end; ++oy) {
    for (int ox = 0; ox < ow; ++ox) {
      q7_t* dst = out.data() + (static_cast<std::size_t>(oy) * ow + ox) * p.out_c;
      for (int oc = reg.oc_begin; oc < reg.oc_end; ++oc) {
        const acc32_t acc = detail::shifted_bias(bias[oc], p.bias_shift) +
                            conv_pixel_basic(input, weights, p, oy, ox, oc);
        dst[oc] = finish(acc, p, relu);
      }
    }
  }
}

// in_c % 4 == 0: channels are consumed as packed words, two filters at a
// time. A trailing odd output channel (only possible inside a split block)
// falls back to the single-filter form of the same loop.
void conv_fast(std::span<const q7_t> input, std::span<const q7_t> weights,
               std::span<const q7_t> bias, const ConvParams& p, bool relu,
               std::span<q7_t> out, ConvRegion reg) {
  const int ow = p.out_w();
  const int words = p.in_c >> 2;
  const std::size_t filter_len = static_cast<std::size_t>(p.kernel_h) * p.kernel_w * p.in_c;

  auto accumulate = [&](int oy, int ox, const q7_t* f0, const q7_t* f1, acc32_t& a0,
                        acc32_t& a1) {
    for (int ky = 0; ky < p.kernel_h; ++ky) {
      const int iy = oy * p.stride_h - p.pad_h + ky;
      if (iy < 0 || iy >= p.in_h) continue;
      for (int kx = 0; kx < p.kernel_w; ++kx) {
        const int ix = ox * p.stride_w - p.pad_w + kx;
        if (ix < 0 || ix >= p.in_w) continue;
        const q7_t* px = input.data() + (static_cast<std::size_t>(iy) * p.in_w + ix) * p.in_c;
        const std::size_t tap = (static_cast<std::size_t>(ky) * p.kernel_w + kx) * p.in_c;
        const q7_t* w0 = f0 + tap;
        const q7_t* w1 = f1 ? f1 + tap : nullptr;
        for (int w = 0; w < words; ++w) {
          const std::uint32_t x = detail::load_q7x4(px + 4 * w);
          a0 = detail::sdot4(x, detail::load_q7x4(w0 + 4 * w), a0);
          if (w1) a1 = detail::sdot4(x, detail::load_q7x4(w1 + 4 * w), a1);
        }
      }
    }
  };

  for (int oy = reg.oy_begin; oy < reg.oy_end; ++oy) {
    for (int ox = 0; ox < ow; ++ox) {
      q7_t* dst = out.data() + (static_cast<std::size_t>(oy) * ow + ox) * p.out_c;
      int oc = reg.oc_begin;
      for (; oc + 2 <= reg.oc_end; oc += 2) {
        acc32_t a0 = detail::shifted_bias(bias[oc], p.bias_shift);
        acc32_t a1 = detail::shifted_bias(bias[oc + 1], p.bias_shift);
        accumulate(oy, ox, weights.data() + oc * filter_len,
                   weights.data() + (oc + 1) * filter_len, a0, a1);
        dst[oc] = finish(a0, p, relu);
        dst[oc + 1] = finish(a1, p, relu);
      }
      if (oc < reg.oc_end) {
        acc32_t a0 = detail::shifted_bias(bias[oc], p.bias_shift);
        acc32_t unused = 0;
        accumulate(oy, ox, weights.data() + oc * filter_len, nullptr, a0, unused);
        dst[oc] = finish(a0, p, relu);
      }
    }
  }
}

}  // namespace

void conv2d_hwc_into(std::span<const q7_t> input, std::span<const q7_t> weights,
                     std::span<const q7_t> bias, const ConvParams& p, bool relu,
                     std::span<q7_t> out, const ConvExec& exec) {
  p.validate();
  if (input.size() != p.in_shape().size()) {
    throw ShapeError("conv: input holds " + std::to_string(input.size()) + " values, expected " +
                     p.in_shape().str());
  }
  if (weights.size() != p.weight_count()) {
    throw ShapeError("conv: weights hold " + std::to_string(weights.size()) +
                     " values, expected " + std::to_string(p.weight_count()));
  }
  if (bias.size() != static_cast<std::size_t>(p.out_c)) {
    throw ShapeError("conv: bias holds " + std::to_string(bias.size()) + " values, expected " +
                     std::to_string(p.out_c));
  }
  if (out.size() != p.out_shape().size()) {
    throw ShapeError("conv: output holds " + std::to_string(out.size()) + " values, expected " +
                     p.out_shape().str());
  }

  bool fast = false;
  switch (exec.variant) {
    case ConvVariant::kAuto: fast = p.in_c % 4 == 0 && p.out_c % 2 == 0; break;
    case ConvVariant::kBasic: fast = false; break;
    case ConvVariant::kFast:
      if (p.in_c % 4 != 0 || p.out_c % 2 != 0) {
        throw ValueError("conv: fast variant needs in_c % 4 == 0 and out_c % 2 == 0");
      }
      fast = true;
      break;
  }

  const bool by_channel = exec.split == ConvSplit::kChannel;
  const auto total = static_cast<std::size_t>(by_channel ? p.out_c : p.out_h());
  run_partitioned(total, exec.workers, [&](Range r) {
    ConvRegion reg{0, p.out_h(), 0, p.out_c};
    if (by_channel) {
      reg.oc_begin = static_cast<int>(r.begin);
      reg.oc_end = static_cast<int>(r.end);
    } else {
      reg.oy_begin = static_cast<int>(r.begin);
      reg.oy_end = static_cast<int>(r.end);
    }
    if (fast) {
      conv_fast(input, weights, bias, p, relu, out, reg);
    } else {
      conv_basic(input, weights, bias, p, relu, out, reg);
    }
  });
}

QTensor conv2d_hwc(const QTensor& input, std::span<const q7_t> weights,
                   std::span<const q7_t> bias, const ConvParams& p, bool relu,
                   const ConvExec& exec) {
  if (!(input.shape == p.in_shape())) {
    throw ShapeError("conv: input tensor " + input.shape.str() + " does not match params " +
                     p.in_shape().str());
  }
  QTensor out{p.out_shape(), std::vector<q7_t>(p.out_shape().size()), {}};
  conv2d_hwc_into(input.data, weights, bias, p, relu, out.data, exec);
  return out;
}

}  // namespace capsq

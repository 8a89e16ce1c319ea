// Copyright 2026 The capsq Authors
// SPDX-License-Identifier: Apache-2.0

// Fixed-point primitives shared by every kernel.
//
// All quantized tensors hold signed 8-bit values. A QFormat records how many
// of the value's bits are (virtually) fractional: the real value of a stored
// integer q is q * 2^-n. Physical formats have n <= 7; when n > 7 the format
// is "virtual" and m = 7 - n goes negative, which lets very small tensors keep
// the full 8-bit resolution.

#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace capsq {

using q7_t = std::int8_t;
using acc32_t = std::int32_t;

inline constexpr int kQ7Min = -128;
inline constexpr int kQ7Max = 127;
inline constexpr int kMaxShift = 31;

/// Qm.n descriptor with m + n = 7. Construction validates -7 <= n <= 31.
class QFormat {
 public:
  static constexpr int kMinFracBits = -7;
  static constexpr int kMaxFracBits = 31;

  /// Physical Q0.7, the format of squash and softmax outputs.
  constexpr QFormat() = default;

  /// Throws ValueError when n is outside [kMinFracBits, kMaxFracBits].
  static QFormat with_frac_bits(int n);

  constexpr int int_bits() const noexcept { return 7 - n_; }
  constexpr int frac_bits() const noexcept { return n_; }
  constexpr bool is_virtual() const noexcept { return n_ > 7; }

  /// Real value of one quantization step, 2^-n.
  double step() const noexcept;

  friend constexpr bool operator==(QFormat, QFormat) = default;

 private:
  explicit constexpr QFormat(int n) : n_(n) {}
  int n_ = 7;
};

/// clamp(acc >> right_shift, -128, 127). The shift is arithmetic, so it
/// truncates toward negative infinity.
constexpr q7_t saturate_q7(acc32_t acc, int right_shift) noexcept {
  const acc32_t shifted = acc >> right_shift;
  if (shifted > kQ7Max) return static_cast<q7_t>(kQ7Max);
  if (shifted < kQ7Min) return static_cast<q7_t>(kQ7Min);
  return static_cast<q7_t>(shifted);
}

/// clamp(round_half_away_from_zero(v * 2^n), -128, 127) element-wise.
/// Throws ValueError naming the index of the first non-finite value.
std::vector<q7_t> quantize_tensor(std::span<const float> values, QFormat fmt);

/// Single-value form of quantize_tensor.
q7_t quantize_value(double value, QFormat fmt);

/// q * 2^-n.
float dequantize(q7_t q, QFormat fmt) noexcept;

std::vector<float> dequantize_tensor(std::span<const q7_t> values, QFormat fmt);

/// floor(sqrt(x)) via Newton-Raphson with the x/2 seed.
std::uint32_t isqrt(std::uint32_t x) noexcept;

}  // namespace capsq

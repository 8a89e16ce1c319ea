// Copyright 2026 The capsq Authors
// SPDX-License-Identifier: Apache-2.0

#include "capsq/qcore.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "capsq/error.hpp"

namespace capsq {

QFormat QFormat::with_frac_bits(int n) {
  if (n < kMinFracBits || n > kMaxFracBits) {
    throw ValueError("QFormat: fractional bits " + std::to_string(n) +
                     " outside [" + std::to_string(kMinFracBits) + ", " +
                     std::to_string(kMaxFracBits) + "]");
  }
  return QFormat(n);
}

double QFormat::step() const noexcept { return std::ldexp(1.0, -n_); }

q7_t quantize_value(double value, QFormat fmt) {
  // std::round is half-away-from-zero.
  const double scaled = std::round(std::ldexp(value, fmt.frac_bits()));
  return static_cast<q7_t>(std::clamp(scaled, double{kQ7Min}, double{kQ7Max}));
}

std::vector<q7_t> quantize_tensor(std::span<const float> values, QFormat fmt) {
  std::vector<q7_t> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      throw ValueError("quantize_tensor: non-finite value at index " + std::to_string(i));
    }
    out[i] = quantize_value(values[i], fmt);
  }
  return out;
}

float dequantize(q7_t q, QFormat fmt) noexcept {
  return static_cast<float>(std::ldexp(static_cast<double>(q), -fmt.frac_bits()));
}

std::vector<float> dequantize_tensor(std::span<const q7_t> values, QFormat fmt) {
  std::vector<float> out(values.size());
  std::transform(values.begin(), values.end(), out.begin(),
                 [fmt](q7_t q) { return dequantize(q, fmt); });
  return out;
}

std::uint32_t isqrt(std::uint32_t x) noexcept {
  // The x/2 seed is zero below 2.
  if (x <= 1) return x;
  std::uint32_t x0 = x / 2;
  std::uint32_t x1 = (x0 + x / x0) / 2;
  while (x1 < x0) {
    x0 = x1;
    x1 = (x0 + x / x0) / 2;
  }
  return x0;
}

}  // namespace capsq

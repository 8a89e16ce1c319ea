// Copyright 2026 The capsq Authors
// SPDX-License-Identifier: Apache-2.0
//
// Straightforward reimplementations used as test oracles. They share no code
// with the library: plain loops, 64-bit arithmetic, floor division spelled out.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

namespace oracle {

using i8 = std::int8_t;
using i64 = std::int64_t;

inline i64 floor_div_pow2(i64 v, int shift) {
  const i64 d = i64{1} << shift;
  return v >= 0 ? v / d : -((-v + d - 1) / d);
}

inline i8 clamp8(i64 v) { return static_cast<i8>(std::clamp<i64>(v, -128, 127)); }

inline i8 requant(i64 acc, int shift) { return clamp8(floor_div_pow2(acc, shift)); }

/// Largest k with k*k <= x.
inline std::uint32_t floor_sqrt(std::uint64_t x) {
  auto k = static_cast<std::uint64_t>(std::sqrt(static_cast<long double>(x)));
  while (k * k > x) --k;
  while ((k + 1) * (k + 1) <= x) ++k;
  return static_cast<std::uint32_t>(k);
}

/// a is m x k, b is k x n, both row-major.
inline std::vector<i8> matmul(const std::vector<i8>& a, const std::vector<i8>& b, int m, int k,
                              int n, int shift) {
  std::vector<i8> out(static_cast<std::size_t>(m) * n);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      i64 acc = 0;
      for (int t = 0; t < k; ++t) acc += i64{a[i * k + t]} * b[t * n + j];
      out[i * n + j] = requant(acc, shift);
    }
  }
  return out;
}

struct Conv {
  int in_h, in_w, in_c, out_c, kh, kw, sh, sw, ph, pw, bias_shift, out_shift;
  bool relu;
  int out_h() const { return (in_h + 2 * ph - kh) / sh + 1; }
  int out_w() const { return (in_w + 2 * pw - kw) / sw + 1; }
};

inline std::vector<i8> conv(const std::vector<i8>& x, const std::vector<i8>& w,
                            const std::vector<i8>& bias, const Conv& p) {
  const int oh = p.out_h(), ow = p.out_w();
  std::vector<i8> out(static_cast<std::size_t>(oh) * ow * p.out_c);
  for (int y = 0; y < oh; ++y) {
    for (int xo = 0; xo < ow; ++xo) {
      for (int o = 0; o < p.out_c; ++o) {
        i64 acc = i64{bias[o]} * (i64{1} << p.bias_shift);
        for (int ky = 0; ky < p.kh; ++ky) {
          for (int kx = 0; kx < p.kw; ++kx) {
            const int iy = y * p.sh - p.ph + ky;
            const int ix = xo * p.sw - p.pw + kx;
            if (iy < 0 || iy >= p.in_h || ix < 0 || ix >= p.in_w) continue;
            for (int c = 0; c < p.in_c; ++c) {
              acc += i64{w[((o * p.kh + ky) * p.kw + kx) * p.in_c + c]} *
                     x[(iy * p.in_w + ix) * p.in_c + c];
            }
          }
        }
        i8 v = requant(acc, p.out_shift);
        if (p.relu && v < 0) v = 0;
        out[(y * ow + xo) * p.out_c + o] = v;
      }
    }
  }
  return out;
}

inline std::vector<i8> softmax(const std::vector<i8>& logits, int frac) {
  int mx = -128;
  for (i8 l : logits) mx = std::max<int>(mx, l);
  std::vector<i64> e(logits.size());
  i64 total = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const int s = std::min(30, (mx - logits[i]) >> frac);
    e[i] = i64{32768} >> s;
    total += e[i];
  }
  std::vector<i8> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = clamp8(e[i] * 128 / total);
  return out;
}

inline std::vector<i8> squash(const std::vector<i8>& row, int i_qn) {
  i64 sq = 0;
  for (i8 v : row) sq += i64{v} * v;
  const i64 norm = floor_sqrt(static_cast<std::uint64_t>(sq));
  const i64 denom = (i64{1} << i_qn) + (sq >> i_qn);
  const i64 scale = i_qn <= 7 ? norm * (i64{1} << (7 - i_qn)) : (norm >> (i_qn - 7));
  std::vector<i8> out(row.size());
  for (std::size_t k = 0; k < row.size(); ++k) out[k] = clamp8(row[k] * scale / denom);
  return out;
}

struct Routing {
  int in_caps, in_dim, out_caps, out_dim, routings;
  int inputs_hat_shift;
  std::vector<int> caps_output_shift, squash_i_qn, agreement_mul_shift, agreement_add_shift;
  int b_frac_bits;
};

/// Dynamic routing by agreement in nested loops. u is [in_caps][in_dim],
/// w is [out_caps][in_caps][out_dim][in_dim]; returns v as [out_caps][out_dim].
inline std::vector<i8> routing(const std::vector<i8>& u, const std::vector<i8>& w, const Routing& p) {
  const int I = p.in_caps, D = p.in_dim, J = p.out_caps, E = p.out_dim;
  std::vector<i8> u_hat(static_cast<std::size_t>(J) * I * E);
  for (int j = 0; j < J; ++j)
    for (int i = 0; i < I; ++i)
      for (int e = 0; e < E; ++e) {
        i64 acc = 0;
        for (int d = 0; d < D; ++d) acc += i64{w[((j * I + i) * E + e) * D + d]} * u[i * D + d];
        u_hat[(j * I + i) * E + e] = requant(acc, p.inputs_hat_shift);
      }

  std::vector<i8> b(static_cast<std::size_t>(J) * I, 0);
  std::vector<i8> c(b.size());
  std::vector<i8> v(static_cast<std::size_t>(J) * E);
  for (int r = 0; r < p.routings; ++r) {
    for (int i = 0; i < I; ++i) {
      std::vector<i8> col(J);
      for (int j = 0; j < J; ++j) col[j] = b[j * I + i];
      const auto cc = softmax(col, p.b_frac_bits);
      for (int j = 0; j < J; ++j) c[j * I + i] = cc[j];
    }
    for (int j = 0; j < J; ++j) {
      std::vector<i8> s(E);
      for (int e = 0; e < E; ++e) {
        i64 acc = 0;
        for (int i = 0; i < I; ++i) acc += i64{c[j * I + i]} * u_hat[(j * I + i) * E + e];
        s[e] = requant(acc, p.caps_output_shift[r]);
      }
      const auto vj = squash(s, p.squash_i_qn[r]);
      std::copy(vj.begin(), vj.end(), v.begin() + j * E);
    }
    if (r == p.routings - 1) break;
    for (int j = 0; j < J; ++j)
      for (int i = 0; i < I; ++i) {
        i64 acc = 0;
        for (int e = 0; e < E; ++e) acc += i64{u_hat[(j * I + i) * E + e]} * v[j * E + e];
        const i8 a = requant(acc, p.agreement_mul_shift[r]);
        b[j * I + i] = requant(i64{b[j * I + i]} + a, p.agreement_add_shift[r]);
      }
  }
  return v;
}

inline std::vector<double> float_squash(const std::vector<double>& s) {
  double sq = 0;
  for (double x : s) sq += x * x;
  std::vector<double> out(s.size(), 0.0);
  if (sq == 0) return out;
  const double f = sq / (1 + sq) / std::sqrt(sq);
  for (std::size_t k = 0; k < s.size(); ++k) out[k] = s[k] * f;
  return out;
}

}  // namespace oracle

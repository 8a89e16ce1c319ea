// Copyright 2026 The capsq Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "capsq/error.hpp"
#include "capsq/qcore.hpp"
#include "oracles.hpp"

using namespace capsq;

TEST_SUITE("qcore") {
  TEST_CASE("saturate_q7 clamps after an arithmetic shift") {
    CHECK(saturate_q7(300, 0) == 127);
    CHECK(saturate_q7(-4096, 5) == -128);
    CHECK(saturate_q7(19, 1) == 9);
    CHECK(saturate_q7(-19, 1) == -10);
    CHECK(saturate_q7(-1, 31) == -1);
    CHECK(saturate_q7(std::numeric_limits<acc32_t>::max(), 31) == 0);
    static_assert(saturate_q7(-129, 0) == -128);
  }

  TEST_CASE("saturate_q7 matches floor division on random accumulators") {
    std::mt19937_64 rng(7);
    std::uniform_int_distribution<acc32_t> acc(std::numeric_limits<acc32_t>::min(),
                                               std::numeric_limits<acc32_t>::max());
    for (int t = 0; t < 100000; ++t) {
      const acc32_t a = acc(rng);
      const int s = static_cast<int>(rng() % 32);
      REQUIRE(saturate_q7(a, s) == oracle::requant(a, s));
    }
  }

  TEST_CASE("QFormat bounds and virtual formats") {
    const QFormat q07;
    CHECK(q07.frac_bits() == 7);
    CHECK(q07.int_bits() == 0);
    CHECK_FALSE(q07.is_virtual());

    const QFormat v = QFormat::with_frac_bits(15);
    CHECK(v.is_virtual());
    CHECK(v.int_bits() == -8);
    CHECK(v.step() == doctest::Approx(1.0 / 32768.0));

    CHECK(QFormat::with_frac_bits(-7).int_bits() == 14);
    CHECK(QFormat::with_frac_bits(31).frac_bits() == 31);
    CHECK_THROWS_AS(QFormat::with_frac_bits(32), ValueError);
    CHECK_THROWS_AS(QFormat::with_frac_bits(-8), ValueError);
  }

  TEST_CASE("quantize_value rounds half away from zero and saturates") {
    CHECK(quantize_value(0.75, QFormat::with_frac_bits(7)) == 96);
    CHECK(quantize_value(0.0, QFormat::with_frac_bits(3)) == 0);
    CHECK(quantize_value(0.003, QFormat::with_frac_bits(15)) == 98);
    CHECK(quantize_value(2.5 / 128.0, QFormat{}) == 3);
    CHECK(quantize_value(-2.5 / 128.0, QFormat{}) == -3);
    CHECK(quantize_value(5.0, QFormat{}) == 127);
    CHECK(quantize_value(-5.0, QFormat{}) == -128);
  }

  TEST_CASE("quantize_tensor rejects non-finite values and names the index") {
    const std::vector<float> ok{0.5F, -0.25F};
    const auto q = quantize_tensor(ok, QFormat{});
    CHECK(q == std::vector<q7_t>{64, -32});

    const std::vector<float> bad{0.1F, 0.2F, std::numeric_limits<float>::quiet_NaN()};
    try {
      (void)quantize_tensor(bad, QFormat{});
      FAIL("expected ValueError");
    } catch (const ValueError& e) {
      CHECK(std::string(e.what()).find("2") != std::string::npos);
    }
    const std::vector<float> inf{std::numeric_limits<float>::infinity()};
    CHECK_THROWS_AS((void)quantize_tensor(inf, QFormat{}), ValueError);
  }

  TEST_CASE("dequantize inverts representable values") {
    CHECK(dequantize(96, QFormat{}) == 0.75F);
    CHECK(dequantize(-128, QFormat{}) == -1.0F);
    CHECK(dequantize(98, QFormat::with_frac_bits(15)) == doctest::Approx(98.0 / 32768.0));
    CHECK(dequantize(3, QFormat::with_frac_bits(-2)) == 12.0F);
    const std::vector<q7_t> codes{1, -2};
    CHECK(dequantize_tensor(codes, QFormat::with_frac_bits(1)) == std::vector<float>{0.5F, -1.0F});
  }

  TEST_CASE("quantize then dequantize stays within half a step") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> val(-1.0, 1.0);
    for (int n = -7; n <= 31; ++n) {
      const QFormat f = QFormat::with_frac_bits(n);
      const double limit = 127.0 * f.step();
      for (int t = 0; t < 200; ++t) {
        const double x = val(rng) * limit;
        const double back = dequantize(quantize_value(x, f), f);
        REQUIRE(std::fabs(back - x) <= f.step() / 2 + 1e-12 * limit);
      }
    }
  }

  TEST_CASE("isqrt worked values") {
    CHECK(isqrt(16) == 4);
    CHECK(isqrt(10) == 3);
    CHECK(isqrt(0) == 0);
    CHECK(isqrt(1) == 1);
    CHECK(isqrt(2) == 1);
    CHECK(isqrt(3) == 1);
    CHECK(isqrt(0xFFFFFFFFu) == 65535);
    CHECK(isqrt(16129) == 127);
  }

  TEST_CASE("isqrt equals floor sqrt below 2^16 and at perfect-square edges") {
    for (std::uint32_t x = 0; x < (1u << 16); ++x) REQUIRE(isqrt(x) == oracle::floor_sqrt(x));
    for (std::uint64_t k = 2; k < 65536; k += 97) {
      const auto sq = static_cast<std::uint32_t>(k * k);
      REQUIRE(isqrt(sq) == k);
      REQUIRE(isqrt(sq - 1) == k - 1);
    }
  }
}

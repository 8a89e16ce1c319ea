// Copyright 2026 The capsq Authors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "capsq/activations.hpp"
#include "capsq/kernels.hpp"
#include "capsq/layers.hpp"

namespace {

using capsq::q7_t;

std::vector<q7_t> random_q7(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> d(-128, 127);
  std::vector<q7_t> v(n);
  for (auto& x : v) x = static_cast<q7_t>(d(rng));
  return v;
}

void set_mac_counters(benchmark::State& state, double macs_per_iter) {
  state.counters["MACs"] = benchmark::Counter(macs_per_iter, benchmark::Counter::kIsIterationInvariantRate);
}

void BM_MatMul(benchmark::State& state) {
  const int m = static_cast<int>(state.range(0));
  const int k = static_cast<int>(state.range(1));
  const int n = static_cast<int>(state.range(2));
  const auto strategy = static_cast<capsq::MatMulStrategy>(state.range(3));
  const capsq::QMatrix a(m, k, random_q7(static_cast<std::size_t>(m) * k, 1));
  const capsq::QMatrix b(k, n, random_q7(static_cast<std::size_t>(k) * n, 2));
  capsq::QMatrix out(m, n);
  for (auto _ : state) {
    capsq::mat_mult_into(a.view(), b.view(), 7, strategy, out.mut_view());
    benchmark::DoNotOptimize(out.data().data());
  }
  state.SetLabel(std::string(capsq::to_string(strategy)));
  set_mac_counters(state, static_cast<double>(m) * k * n);
}

void BM_MatMulSignExtendPairs(benchmark::State& state) {
  const int m = static_cast<int>(state.range(0));
  const int k = static_cast<int>(state.range(1));
  const int n = static_cast<int>(state.range(2));
  const capsq::QMatrix a(m, k, random_q7(static_cast<std::size_t>(m) * k, 1));
  const capsq::QMatrix b(k, n, random_q7(static_cast<std::size_t>(k) * n, 2));
  capsq::QMatrix out(m, n);
  for (auto _ : state) {
    capsq::detail::mat_mult_sign_extend_pairs(a.view(), b.view(), 7, out.mut_view());
    benchmark::DoNotOptimize(out.data().data());
  }
  set_mac_counters(state, static_cast<double>(m) * k * n);
}

void matmul_args(benchmark::internal::Benchmark* b) {
  for (int s = 0; s < 3; ++s) {
    b->Args({20, 30, 40, s});
    b->Args({64, 64, 64, s});
    b->Args({10, 1152, 8, s});
  }
}

void BM_Conv(benchmark::State& state) {
  capsq::ConvParams p;
  p.in_h = p.in_w = 32;
  p.in_c = static_cast<int>(state.range(0));
  p.out_c = 32;
  p.kernel_h = p.kernel_w = 3;
  p.pad_h = p.pad_w = 1;
  p.out_shift = 9;
  const auto variant = static_cast<capsq::ConvVariant>(state.range(1));
  const auto input = random_q7(p.in_shape().size(), 3);
  const auto weights = random_q7(p.weight_count(), 4);
  const auto bias = random_q7(static_cast<std::size_t>(p.out_c), 5);
  std::vector<q7_t> out(p.out_shape().size());
  for (auto _ : state) {
    capsq::conv2d_hwc_into(input, weights, bias, p, true, out, {variant});
    benchmark::DoNotOptimize(out.data());
  }
  set_mac_counters(state, static_cast<double>(out.size()) * p.kernel_h * p.kernel_w * p.in_c);
}

void BM_Squash(benchmark::State& state) {
  const int rows = static_cast<int>(state.range(0));
  const int dim = static_cast<int>(state.range(1));
  const capsq::QMatrix in(rows, dim, random_q7(static_cast<std::size_t>(rows) * dim, 6));
  capsq::QMatrix out(rows, dim);
  for (auto _ : state) {
    capsq::squash_q7_into(in.view(), {7}, out.mut_view());
    benchmark::DoNotOptimize(out.data().data());
  }
  state.SetItemsProcessed(state.iterations() * rows);
}

void BM_Softmax(benchmark::State& state) {
  const int groups = static_cast<int>(state.range(0));
  const int n = static_cast<int>(state.range(1));
  const auto logits = random_q7(static_cast<std::size_t>(groups) * n, 7);
  for (auto _ : state) {
    auto out = capsq::softmax_q7(logits, groups, 4);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * groups);
}

void BM_CapsuleLayer(benchmark::State& state) {
  const int in_caps = static_cast<int>(state.range(0));
  const int routings = static_cast<int>(state.range(1));
  constexpr int kInDim = 4, kOutCaps = 10, kOutDim = 6;
  const auto weights = random_q7(static_cast<std::size_t>(kOutCaps) * in_caps * kOutDim * kInDim, 8);
  const capsq::QMatrix input(in_caps, kInDim, random_q7(static_cast<std::size_t>(in_caps) * kInDim, 9));
  capsq::CapsLayerDesc d;
  d.in_caps = in_caps;
  d.in_dim = kInDim;
  d.out_caps = kOutCaps;
  d.out_dim = kOutDim;
  d.num_routings = routings;
  d.weights = weights;
  d.shifts.inputs_hat_shift = 7;
  d.shifts.caps_output_shift.assign(routings, 10);
  d.shifts.squash_in_frac_bits.assign(routings, 7);
  d.shifts.agreement_mul_shift.assign(routings - 1, 7);
  d.shifts.agreement_add_shift.assign(routings - 1, 0);
  d.shifts.b_frac_bits = 7;
  for (auto _ : state) {
    auto v = capsq::capsule_layer_q7(input, d, {capsq::kFastestMatMul, static_cast<int>(state.range(2))});
    benchmark::DoNotOptimize(v.data().data());
  }
}

}  // namespace

BENCHMARK(BM_MatMul)->Apply(matmul_args);
BENCHMARK(BM_MatMulSignExtendPairs)->Args({20, 30, 40})->Args({64, 64, 64});
BENCHMARK(BM_Conv)->ArgsProduct({{4, 16}, {1, 2}});
BENCHMARK(BM_Squash)->Args({1152, 8})->Args({10, 16});
BENCHMARK(BM_Softmax)->Args({1152, 10});
BENCHMARK(BM_CapsuleLayer)->ArgsProduct({{1024}, {1, 3}, {1, 4}})->UseRealTime();

BENCHMARK_MAIN();

// Copyright 2026 The capsq Authors
// SPDX-License-Identifier: Apache-2.0

#include "bench.hpp"

#include <chrono>
#include <cstdio>
#include <functional>
#include <memory>
#include <random>
#include <sstream>

#include "capsq/activations.hpp"
#include "capsq/error.hpp"
#include "capsq/kernels.hpp"
#include "capsq/layers.hpp"

namespace capsq::cli {
namespace {

std::vector<q7_t> random_q7(std::size_t n, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> dist(kQ7Min, kQ7Max);
  std::vector<q7_t> v(n);
  for (auto& x : v) x = static_cast<q7_t>(dist(rng));
  return v;
}

std::string join_dims(const std::vector<int>& d) {
  std::string s;
  for (std::size_t i = 0; i < d.size(); ++i) s += (i ? "x" : "") + std::to_string(d[i]);
  return s;
}

struct Job {
  std::string strategy;
  std::vector<int> dims;
  std::uint64_t macs_per_iter = 0;
  std::function<void()> body;
  std::function<std::uint64_t()> checksum;
};

Job matmul_job(const BenchOptions& o, std::mt19937_64& rng) {
  Job job;
  job.dims = parse_dims(o.dims.empty() ? "20x30x40" : o.dims, 3);
  job.strategy = o.strategy.empty() ? std::string(to_string(kFastestMatMul)) : o.strategy;
  const int m = job.dims[0], k = job.dims[1], n = job.dims[2];
  auto a = std::make_shared<QMatrix>(m, k, random_q7(static_cast<std::size_t>(m) * k, rng));
  auto b = std::make_shared<QMatrix>(k, n, random_q7(static_cast<std::size_t>(k) * n, rng));
  auto out = std::make_shared<QMatrix>(m, n);
  job.macs_per_iter = static_cast<std::uint64_t>(m) * k * n;
  const int workers = o.workers;
  if (job.strategy == "sext16") {
    job.body = [=] { detail::mat_mult_sign_extend_pairs(a->view(), b->view(), 7, out->mut_view(), workers); };
  } else {
    const auto s = parse_matmul_strategy(job.strategy);
    if (!s) throw ValueError("unknown matmul strategy '" + job.strategy + "'");
    job.body = [=] { mat_mult_into(a->view(), b->view(), 7, *s, out->mut_view(), workers); };
  }
  job.checksum = [=] { return fnv1a_of(out->data()); };
  return job;
}

Job conv_job(const BenchOptions& o, std::mt19937_64& rng) {
  Job job;
  job.dims = parse_dims(o.dims.empty() ? "32x32x16x32x3" : o.dims, 5);
  job.strategy = o.strategy.empty() ? "auto" : o.strategy;
  ConvExec exec;
  exec.workers = o.workers;
  if (job.strategy == "auto") exec.variant = ConvVariant::kAuto;
  else if (job.strategy == "basic") exec.variant = ConvVariant::kBasic;
  else if (job.strategy == "fast") exec.variant = ConvVariant::kFast;
  else throw ValueError("unknown conv strategy '" + job.strategy + "'");

  ConvParams p;
  p.in_h = job.dims[0];
  p.in_w = job.dims[1];
  p.in_c = job.dims[2];
  p.out_c = job.dims[3];
  p.kernel_h = p.kernel_w = job.dims[4];
  p.pad_h = p.pad_w = job.dims[4] / 2;
  p.bias_shift = 0;
  p.out_shift = 9;
  p.validate();
  auto input = std::make_shared<std::vector<q7_t>>(random_q7(p.in_shape().size(), rng));
  auto weights = std::make_shared<std::vector<q7_t>>(random_q7(p.weight_count(), rng));
  auto bias = std::make_shared<std::vector<q7_t>>(random_q7(static_cast<std::size_t>(p.out_c), rng));
  auto out = std::make_shared<std::vector<q7_t>>(p.out_shape().size());
  job.macs_per_iter = static_cast<std::uint64_t>(p.out_shape().size()) * p.kernel_h * p.kernel_w * p.in_c;
  job.body = [=] { conv2d_hwc_into(*input, *weights, *bias, p, true, *out, exec); };
  job.checksum = [=] { return fnv1a_of(*out); };
  return job;
}

Job squash_job(const BenchOptions& o, std::mt19937_64& rng) {
  Job job;
  job.dims = parse_dims(o.dims.empty() ? "1152x8" : o.dims, 2);
  job.strategy = o.strategy.empty() ? "q7" : o.strategy;
  if (job.strategy != "q7") throw ValueError("unknown squash strategy '" + job.strategy + "'");
  const int r = job.dims[0], d = job.dims[1];
  auto in = std::make_shared<QMatrix>(r, d, random_q7(static_cast<std::size_t>(r) * d, rng));
  auto out = std::make_shared<QMatrix>(r, d);
  job.macs_per_iter = static_cast<std::uint64_t>(r) * d;
  const int workers = o.workers;
  job.body = [=] { squash_q7_into(in->view(), {7}, out->mut_view(), workers); };
  job.checksum = [=] { return fnv1a_of(out->data()); };
  return job;
}

Job softmax_job(const BenchOptions& o, std::mt19937_64& rng) {
  Job job;
  job.dims = parse_dims(o.dims.empty() ? "1152x10" : o.dims, 2);
  job.strategy = o.strategy.empty() ? "q7" : o.strategy;
  if (job.strategy != "q7") throw ValueError("unknown softmax strategy '" + job.strategy + "'");
  const int g = job.dims[0], n = job.dims[1];
  auto in = std::make_shared<std::vector<q7_t>>(random_q7(static_cast<std::size_t>(g) * n, rng));
  auto out = std::make_shared<std::vector<q7_t>>();
  job.macs_per_iter = static_cast<std::uint64_t>(g) * n;
  job.body = [=] { *out = softmax_q7(*in, g, 4); };
  job.checksum = [=] { return fnv1a_of(*out); };
  return job;
}

Job caps_job(const BenchOptions& o, std::mt19937_64& rng) {
  Job job;
  job.dims = parse_dims(o.dims.empty() ? "1024x4x10x6x3" : o.dims, 5);
  job.strategy = o.strategy.empty() ? std::string(to_string(kFastestMatMul)) : o.strategy;
  const auto s = parse_matmul_strategy(job.strategy);
  if (!s) throw ValueError("unknown matmul strategy '" + job.strategy + "'");

  auto weights = std::make_shared<std::vector<q7_t>>();
  auto d = std::make_shared<CapsLayerDesc>();
  d->in_caps = job.dims[0];
  d->in_dim = job.dims[1];
  d->out_caps = job.dims[2];
  d->out_dim = job.dims[3];
  d->num_routings = job.dims[4];
  *weights = random_q7(static_cast<std::size_t>(d->out_caps) * d->in_caps * d->out_dim * d->in_dim, rng);
  d->weights = *weights;
  const auto r = static_cast<std::size_t>(d->num_routings);
  d->shifts.inputs_hat_shift = 7;
  d->shifts.caps_output_shift.assign(r, 10);
  d->shifts.squash_in_frac_bits.assign(r, 7);
  d->shifts.agreement_mul_shift.assign(r - 1, 7);
  d->shifts.agreement_add_shift.assign(r - 1, 0);
  d->shifts.b_frac_bits = 7;
  d->validate();
  auto in = std::make_shared<QMatrix>(d->in_caps, d->in_dim,
                                      random_q7(static_cast<std::size_t>(d->in_caps) * d->in_dim, rng));
  auto out = std::make_shared<QMatrix>();
  const std::uint64_t pairs = static_cast<std::uint64_t>(d->in_caps) * d->out_caps * d->out_dim;
  job.macs_per_iter = pairs * d->in_dim + pairs * r + pairs * (r - 1);
  ExecConfig exec;
  exec.strategy = *s;
  exec.workers = o.workers;
  job.body = [=] { *out = capsule_layer_q7(*in, *d, exec); };
  job.checksum = [=] { return fnv1a_of(out->data()); };
  return job;
}

}  // namespace

double BenchReport::ns_per_mac() const noexcept {
  return macs == 0 ? 0.0 : static_cast<double>(wall_ns) / static_cast<double>(macs);
}

std::string BenchReport::csv_row() const {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.4f,%016llx", ns_per_mac(),
                static_cast<unsigned long long>(checksum));
  std::ostringstream os;
  os << kBenchSchema << ',' << kernel << ',' << strategy << ',' << dims << ',' << iters << ','
     << workers << ',' << macs << ',' << wall_ns << ',' << buf;
  return os.str();
}

std::vector<int> parse_dims(const std::string& text, std::size_t count) {
  std::vector<int> out;
  std::istringstream in(text);
  std::string part;
  while (std::getline(in, part, 'x')) {
    std::size_t used = 0;
    int v = 0;
    try {
      v = std::stoi(part, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != part.size() || part.empty() || v <= 0) {
      throw ValueError("dims '" + text + "': '" + part + "' is not a positive integer");
    }
    out.push_back(v);
  }
  if (out.size() != count) {
    throw ValueError("dims '" + text + "': expected " + std::to_string(count) + " extents");
  }
  return out;
}

std::uint64_t fnv1a(std::span<const std::uint8_t> bytes, std::uint64_t hash) noexcept {
  for (std::uint8_t b : bytes) {
    hash ^= b;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

BenchReport run_bench(const BenchOptions& opts) {
  if (opts.iters < 1) throw ValueError("iters must be at least 1");
  if (opts.workers < 1) throw ValueError("workers must be at least 1");
  std::mt19937_64 rng(opts.seed);
  Job job;
  if (opts.kernel == "matmul") job = matmul_job(opts, rng);
  else if (opts.kernel == "conv") job = conv_job(opts, rng);
  else if (opts.kernel == "squash") job = squash_job(opts, rng);
  else if (opts.kernel == "softmax") job = softmax_job(opts, rng);
  else if (opts.kernel == "caps") job = caps_job(opts, rng);
  else throw ValueError("unknown kernel '" + opts.kernel + "'");

  const auto start = std::chrono::steady_clock::now();
  for (int i = 0; i < opts.iters; ++i) job.body();
  const auto stop = std::chrono::steady_clock::now();

  BenchReport r;
  r.kernel = opts.kernel;
  r.strategy = job.strategy;
  r.dims = join_dims(job.dims);
  r.iters = opts.iters;
  r.workers = opts.workers;
  r.macs = job.macs_per_iter * static_cast<std::uint64_t>(opts.iters);
  r.wall_ns = static_cast<std::uint64_t>(
      std::chrono::duration_cast<std::chrono::nanoseconds>(stop - start).count());
  r.checksum = job.checksum();
  return r;
}

}  // namespace capsq::cli

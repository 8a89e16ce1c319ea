// Copyright 2026 The capsq Authors
// SPDX-License-Identifier: Apache-2.0

#include "capsq/synth.hpp"

#include <random>

#include "capsq/error.hpp"

namespace capsq {

FloatModel random_float_model(const Architecture& arch, std::uint64_t seed, double stddev) {
  if (!(stddev >= 0.0)) throw ValueError("random_float_model: stddev must be non-negative");
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> dist(0.0F, static_cast<float>(stddev));
  FloatModel model{arch, {}};
  for (const auto& g : arch.geometry()) {
    FloatLayerParams p;
    p.weights.resize(g.weight_count);
    p.bias.resize(g.bias_count);
    for (auto& w : p.weights) w = dist(rng);
    for (auto& b : p.bias) b = dist(rng);
    model.params.push_back(std::move(p));
  }
  return model;
}

Dataset random_dataset(const FeatureShape& shape, std::size_t count, std::uint64_t seed,
                       int classes, float lo, float hi) {
  if (classes < 1 || classes > 256) throw ValueError("random_dataset: classes must be in [1, 256]");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> value(lo, hi);
  std::uniform_int_distribution<int> label(0, classes - 1);
  Dataset d;
  d.shape = shape;
  d.dtype = SampleType::kFloat32;
  d.f32.resize(count * shape.size());
  d.labels.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    for (std::size_t k = 0; k < shape.size(); ++k) d.f32[i * shape.size() + k] = value(rng);
    d.labels[i] = static_cast<std::uint8_t>(label(rng));
  }
  return d;
}

Dataset random_dataset_i8(const FeatureShape& shape, std::size_t count, std::uint64_t seed,
                          int classes) {
  if (classes < 1 || classes > 256) throw ValueError("random_dataset_i8: classes must be in [1, 256]");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> value(kQ7Min, kQ7Max);
  std::uniform_int_distribution<int> label(0, classes - 1);
  Dataset d;
  d.shape = shape;
  d.dtype = SampleType::kInt8;
  d.i8.resize(count * shape.size());
  d.labels.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    for (std::size_t k = 0; k < shape.size(); ++k) d.i8[i * shape.size() + k] = static_cast<q7_t>(value(rng));
    d.labels[i] = static_cast<std::uint8_t>(label(rng));
  }
  return d;
}

}  // namespace capsq

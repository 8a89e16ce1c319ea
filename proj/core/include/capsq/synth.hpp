// Copyright 2026 The capsq Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>

#include "capsq/dataset.hpp"
#include "capsq/model.hpp"

namespace capsq {

/// Weights and biases drawn from N(0, stddev), reproducible from the seed.
FloatModel random_float_model(const Architecture& arch, std::uint64_t seed, double stddev = 0.1);

/// Samples uniform in [lo, hi) with labels uniform in [0, classes).
Dataset random_dataset(const FeatureShape& shape, std::size_t count, std::uint64_t seed,
                       int classes = 10, float lo = 0.0F, float hi = 1.0F);

/// int-8 samples uniform over the full code range.
Dataset random_dataset_i8(const FeatureShape& shape, std::size_t count, std::uint64_t seed,
                          int classes = 10);

}  // namespace capsq

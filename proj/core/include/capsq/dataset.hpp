// Copyright 2026 The capsq Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "capsq/qcore.hpp"
#include "capsq/tensor.hpp"

namespace capsq {

enum class SampleType : std::uint8_t { kFloat32 = 0, kInt8 = 1 };

/// HWC samples with one label byte each. Exactly one of f32 / i8 is populated,
/// according to dtype.
struct Dataset {
  FeatureShape shape;
  SampleType dtype = SampleType::kFloat32;
  std::vector<float> f32;
  std::vector<q7_t> i8;
  std::vector<std::uint8_t> labels;

  std::size_t size() const noexcept { return labels.size(); }
  bool empty() const noexcept { return labels.empty(); }

  std::span<const float> sample_f32(std::size_t i) const {
    return std::span<const float>(f32).subspan(i * shape.size(), shape.size());
  }
  std::span<const q7_t> sample_i8(std::size_t i) const {
    return std::span<const q7_t>(i8).subspan(i * shape.size(), shape.size());
  }

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

}  // namespace capsq

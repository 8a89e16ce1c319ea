// Copyright 2026 The capsq Authors
// SPDX-License-Identifier: Apache-2.0

// Float32 forward pass of the same networks. It drives calibration and is the
// accuracy oracle for the int-8 engine.

#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "capsq/model.hpp"

namespace capsq {

enum class SiteKind {
  kInput,       // network input (layer 0 only)
  kWeights,
  kBias,
  kConvOutput,  // conv result before squash (primary capsules)
  kOutput,      // layer output
  kUHat,        // prediction vectors
  kCapsSum,     // s_j, per routing iteration
  kAgreement,   // u_hat . v_j, per iteration except the last
  kLogits,      // b_ij after the agreement update, per iteration except the last
};

std::string_view to_string(SiteKind k) noexcept;

/// A tensor position in the network. iter is -1 for sites outside routing.
struct SiteId {
  int layer = 0;
  SiteKind kind = SiteKind::kOutput;
  int iter = -1;

  std::string str() const;
  friend auto operator<=>(const SiteId&, const SiteId&) = default;
};

using SiteObserver = std::function<void(const SiteId&, std::span<const float>)>;

struct FloatForwardResult {
  std::vector<float> scores;    // L2 length of each output capsule
  int predicted = 0;            // argmax, lowest index on ties
  std::vector<float> capsules;  // [classes][dim]
};

/// v = |s|^2 / (1 + |s|^2) * s / |s|; the zero vector maps to itself.
std::vector<float> float_squash(std::span<const float> s);

/// Runs the float network on one HWC sample. The observer, when set, sees
/// every site in execution order (weights and biases included).
FloatForwardResult float_forward(const FloatModel& model, std::span<const float> input,
                                 const SiteObserver& observer = {});

}  // namespace capsq

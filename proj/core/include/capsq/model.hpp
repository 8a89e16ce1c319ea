// Copyright 2026 The capsq Authors
// SPDX-License-Identifier: Apache-2.0

// Network description shared by the float reference and the int-8 engine:
// layer hyper-parameters, shape-chain inference, the float parameter set and
// the quantized model (manifest plus weight blob).

#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "capsq/kernels.hpp"
#include "capsq/qcore.hpp"
#include "capsq/tensor.hpp"

namespace capsq {

struct ConvSpec {
  int filters = 0;
  int kernel_h = 1;
  int kernel_w = 1;
  int stride_h = 1;
  int stride_w = 1;
  int pad_h = 0;
  int pad_w = 0;
  bool relu = true;

  friend bool operator==(const ConvSpec&, const ConvSpec&) = default;
};

/// Convolution with capsules * dim output channels, reshaped to capsule rows
/// and squashed. Never clipped by ReLU.
struct PrimaryCapsSpec {
  int capsules = 0;
  int dim = 0;
  int kernel_h = 1;
  int kernel_w = 1;
  int stride_h = 1;
  int stride_w = 1;
  int pad_h = 0;
  int pad_w = 0;

  friend bool operator==(const PrimaryCapsSpec&, const PrimaryCapsSpec&) = default;
};

/// Fully connected capsule layer with dynamic routing.
struct CapsSpec {
  int capsules = 0;
  int dim = 0;
  int routings = 1;

  friend bool operator==(const CapsSpec&, const CapsSpec&) = default;
};

using LayerSpec = std::variant<ConvSpec, PrimaryCapsSpec, CapsSpec>;

std::string_view layer_kind_name(const LayerSpec& spec) noexcept;

struct CapsuleShape {
  int count = 0;
  int dim = 0;

  std::size_t size() const noexcept { return static_cast<std::size_t>(count) * dim; }
  friend bool operator==(const CapsuleShape&, const CapsuleShape&) = default;
};

using ActivationShape = std::variant<FeatureShape, CapsuleShape>;

std::string shape_str(const ActivationShape& s);
std::size_t shape_size(const ActivationShape& s);

/// Resolved dimensions of one layer inside a network.
struct LayerGeometry {
  ActivationShape in;
  ActivationShape out;
  std::size_t weight_count = 0;
  std::size_t bias_count = 0;
  ConvParams conv;  // conv and primary layers; shifts left at zero

  // Capsule layers: W is [out_caps][in_caps][out_dim][in_dim].
  int in_caps = 0;
  int in_dim = 0;
  int out_caps = 0;
  int out_dim = 0;
  int routings = 0;
};

struct Architecture {
  FeatureShape input;
  std::vector<LayerSpec> layers;

  /// Walks the shape chain. Throws ShapeError naming the first bad layer.
  std::vector<LayerGeometry> geometry() const;

  std::size_t parameter_count() const;

  /// Capsule count of the last layer.
  int num_classes() const;

  friend bool operator==(const Architecture&, const Architecture&) = default;
};

/// The three baseline networks: "mnist" (28x28x1), "smallnorb" (32x32x2) and
/// "cifar10" (32x32x3).
std::optional<Architecture> preset_architecture(std::string_view name);
std::vector<std::string> preset_names();

// ---------------------------------------------------------------------------
// Float model

struct FloatLayerParams {
  std::vector<float> weights;
  std::vector<float> bias;

  friend bool operator==(const FloatLayerParams&, const FloatLayerParams&) = default;
};

struct FloatModel {
  Architecture arch;
  std::vector<FloatLayerParams> params;

  /// Shape chain plus parameter counts per layer.
  void validate() const;

  friend bool operator==(const FloatModel&, const FloatModel&) = default;
};

// ---------------------------------------------------------------------------
// Quantized model

struct ConvShifts {
  int bias_shift = 0;
  int out_shift = 0;

  friend bool operator==(const ConvShifts&, const ConvShifts&) = default;
};

struct PrimaryCapsShifts {
  int bias_shift = 0;
  int out_shift = 0;
  int squash_in_frac_bits = 7;

  friend bool operator==(const PrimaryCapsShifts&, const PrimaryCapsShifts&) = default;
};

/// Per-site shifts of a capsule layer. Per-iteration arrays hold `routings`
/// entries, agreement arrays one fewer.
struct CapsShifts {
  int inputs_hat_shift = 0;
  std::vector<int> caps_output_shift;
  std::vector<int> agreement_mul_shift;
  std::vector<int> agreement_add_shift;
  std::vector<int> squash_in_frac_bits;
  int b_frac_bits = 0;

  /// Throws FormatError on wrong array lengths or a shift outside [0, 31].
  void validate(int routings) const;
  std::size_t value_count() const noexcept;

  friend bool operator==(const CapsShifts&, const CapsShifts&) = default;
};

using LayerShifts = std::variant<ConvShifts, PrimaryCapsShifts, CapsShifts>;

/// One entry per layer, in network order.
using ShiftSchedule = std::vector<LayerShifts>;

/// Byte range inside the weight blob.
struct BlobRef {
  std::size_t offset = 0;
  std::size_t bytes = 0;

  friend bool operator==(const BlobRef&, const BlobRef&) = default;
};

struct QLayer {
  QFormat weight_fmt;
  QFormat bias_fmt;
  QFormat out_fmt;
  BlobRef weights;
  BlobRef bias;
  LayerShifts shifts;

  friend bool operator==(const QLayer&, const QLayer&) = default;
};

/// Quantized network: manifest fields plus the int-8 parameter blob.
struct QuantModel {
  Architecture arch;
  QFormat input_fmt;
  std::vector<QLayer> layers;
  std::vector<q7_t> blob;

  std::span<const q7_t> weights(std::size_t layer) const;
  std::span<const q7_t> bias(std::size_t layer) const;

  /// Shape chain, shift ranges, blob references (in range, non-overlapping,
  /// sized to the layer). Throws FormatError / ShapeError naming the layer.
  void validate() const;

  /// Bytes an embedded target needs besides the blob: one per shift value
  /// plus one for the input format.
  std::size_t shift_metadata_bytes() const noexcept;

  ShiftSchedule schedule() const;

  friend bool operator==(const QuantModel&, const QuantModel&) = default;
};

}  // namespace capsq

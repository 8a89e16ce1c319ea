// Copyright 2026 The capsq Authors
// SPDX-License-Identifier: Apache-2.0

// Int-8 CapsNet layers and the sequential network executor.

#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "capsq/kernels.hpp"
#include "capsq/model.hpp"
#include "capsq/tensor.hpp"

namespace capsq {

/// How kernels execute. Every setting yields the same bits.
struct ExecConfig {
  MatMulStrategy strategy = kFastestMatMul;
  int workers = 1;
  ConvVariant conv_variant = ConvVariant::kAuto;
  ConvSplit conv_split = ConvSplit::kChannel;
};

struct PrimaryCapsDesc {
  ConvParams conv;  // including bias and output shifts
  int num_caps = 0;
  int caps_dim = 0;
  int squash_in_frac_bits = 7;

  void validate() const;
};

/// Convolution without ReLU, reshape to [outH*outW*num_caps][caps_dim], then
/// squash each row. Output is Q0.7.
QMatrix primary_capsule_q7(const QTensor& input, const PrimaryCapsDesc& desc,
                           std::span<const q7_t> weights, std::span<const q7_t> bias,
                           const ExecConfig& exec = {});

struct CapsLayerDesc {
  int in_caps = 0;
  int in_dim = 0;
  int out_caps = 0;
  int out_dim = 0;
  int num_routings = 1;
  std::span<const q7_t> weights;  // [out_caps][in_caps][out_dim][in_dim]
  CapsShifts shifts;

  void validate() const;
};

/// Prediction vectors u_hat[j][i] = W[j][i] * u_i, laid out
/// [out_caps][in_caps][out_dim].
std::vector<q7_t> calc_inputs_hat(MatView layer_input, const CapsLayerDesc& d,
                                  const ExecConfig& exec = {});

/// Coupling coefficients: softmax over j of b[j][i] for every lower capsule i.
/// b and the result are laid out [out_caps][in_caps], Q0.7.
std::vector<q7_t> calc_coupling_coefs(std::span<const q7_t> b, const CapsLayerDesc& d);

/// s_j = c[j] * u_hat[j] for every upper capsule j, then squash. Returns
/// v as [out_caps][out_dim] in Q0.7.
QMatrix calc_caps_output(std::span<const q7_t> u_hat, std::span<const q7_t> c, int iter,
                         const CapsLayerDesc& d, const ExecConfig& exec = {});

/// b[j] = b[j] + u_hat[j] * v_j, with the product and the sum each shifted
/// by this iteration's agreement shifts.
void calc_agreement_w_prev_caps(std::span<const q7_t> u_hat, const QMatrix& v, int iter,
                                std::span<q7_t> b, const CapsLayerDesc& d,
                                const ExecConfig& exec = {});

/// Full capsule layer: prediction vectors, then num_routings rounds of
/// coupling, output and (except after the last round) agreement.
QMatrix capsule_layer_q7(const QMatrix& layer_input, const CapsLayerDesc& d,
                         const ExecConfig& exec = {});

/// Called after each layer with the layer index and its int-8 output.
using LayerObserver = std::function<void(std::size_t layer, std::span<const q7_t> out, QFormat fmt)>;

struct ForwardResult {
  std::vector<std::uint32_t> scores;  // integer length of each output capsule, Q0.7
  int predicted = 0;                  // argmax, lowest index on ties
  QMatrix capsules;
};

/// Runs the network on an input already quantized to model.input_fmt.
ForwardResult forward(const QuantModel& model, const QTensor& input, const ExecConfig& exec = {},
                      const LayerObserver& observer = {});

/// Quantizes a float HWC sample to the model's input format, then runs it.
ForwardResult forward(const QuantModel& model, std::span<const float> input,
                      const ExecConfig& exec = {}, const LayerObserver& observer = {});

/// Index of the largest score; ties go to the lowest index.
int argmax_class(std::span<const std::uint32_t> scores) noexcept;

}  // namespace capsq

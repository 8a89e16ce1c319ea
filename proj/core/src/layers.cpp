// Copyright 2026 The capsq Authors
// SPDX-License-Identifier: Apache-2.0

#include "capsq/layers.hpp"

#include <string>
#include <variant>

#include "capsq/activations.hpp"
#include "capsq/error.hpp"
#include "capsq/parallel.hpp"

namespace capsq {

void PrimaryCapsDesc::validate() const {
  conv.validate();
  if (num_caps <= 0 || caps_dim <= 0 || conv.out_c != num_caps * caps_dim) {
    throw ShapeError("primary caps: out_c " + std::to_string(conv.out_c) + " != " +
                     std::to_string(num_caps) + " capsules x " + std::to_string(caps_dim));
  }
}

QMatrix primary_capsule_q7(const QTensor& input, const PrimaryCapsDesc& desc,
                           std::span<const q7_t> weights, std::span<const q7_t> bias,
                           const ExecConfig& exec) {
  desc.validate();
  const QTensor conv = conv2d_hwc(input, weights, bias, desc.conv, /*relu=*/false,
                                  {exec.conv_variant, exec.conv_split, exec.workers});
  // HWC memory already is [outH*outW*num_caps][caps_dim] row-major.
  const int rows = desc.conv.out_h() * desc.conv.out_w() * desc.num_caps;
  const MatView caps{conv.data, rows, desc.caps_dim};
  QMatrix out(rows, desc.caps_dim, QFormat{});
  squash_q7_into(caps, {desc.squash_in_frac_bits}, out.mut_view(), exec.workers);
  return out;
}

void CapsLayerDesc::validate() const {
  if (in_caps <= 0 || in_dim <= 0 || out_caps <= 0 || out_dim <= 0 || num_routings <= 0) {
    throw ShapeError("caps layer: non-positive dimension");
  }
  const auto expected = static_cast<std::size_t>(out_caps) * in_caps * out_dim * in_dim;
  if (weights.size() != expected) {
    throw ShapeError("caps layer: " + std::to_string(weights.size()) + " weights, expected " +
                     std::to_string(expected));
  }
  shifts.validate(num_routings);
}

std::vector<q7_t> calc_inputs_hat(MatView layer_input, const CapsLayerDesc& d,
                                  const ExecConfig& exec) {
  if (layer_input.rows != d.in_caps || layer_input.cols != d.in_dim) {
    throw ShapeError("calc_inputs_hat: input [" + std::to_string(layer_input.rows) + "x" +
                     std::to_string(layer_input.cols) + "] does not match " +
                     std::to_string(d.in_caps) + " capsules x " + std::to_string(d.in_dim));
  }
  const std::size_t wmat = static_cast<std::size_t>(d.out_dim) * d.in_dim;
  std::vector<q7_t> u_hat(static_cast<std::size_t>(d.out_caps) * d.in_caps * d.out_dim);

  // Inner two weight dimensions form the matrix, the outer two are the batch.
  run_partitioned(static_cast<std::size_t>(d.out_caps), exec.workers, [&](Range r) {
    for (std::size_t j = r.begin; j < r.end; ++j) {
      for (int i = 0; i < d.in_caps; ++i) {
        const std::size_t pair = j * d.in_caps + static_cast<std::size_t>(i);
        const MatView w{d.weights.subspan(pair * wmat, wmat), d.out_dim, d.in_dim};
        const MatView u{layer_input.data.subspan(static_cast<std::size_t>(i) * d.in_dim,
                                                 static_cast<std::size_t>(d.in_dim)),
                        d.in_dim, 1};
        const MutMatView dst{std::span<q7_t>(u_hat).subspan(pair * d.out_dim,
                                                            static_cast<std::size_t>(d.out_dim)),
                             d.out_dim, 1};
        mat_mult_into(w, u, d.shifts.inputs_hat_shift, exec.strategy, dst);
      }
    }
  });
  return u_hat;
}

std::vector<q7_t> calc_coupling_coefs(std::span<const q7_t> b, const CapsLayerDesc& d) {
  const auto n_in = static_cast<std::size_t>(d.in_caps);
  const auto n_out = static_cast<std::size_t>(d.out_caps);
  if (b.size() != n_in * n_out) throw ShapeError("calc_coupling_coefs: logits size mismatch");

  std::vector<q7_t> c(b.size());
  std::vector<q7_t> column(n_out);
  std::vector<q7_t> coupled(n_out);
  // The softmax runs down each column: lower capsule i against every j.
  for (std::size_t i = 0; i < n_in; ++i) {
    for (std::size_t j = 0; j < n_out; ++j) column[j] = b[j * n_in + i];
    softmax_q7_group(column, d.shifts.b_frac_bits, coupled);
    for (std::size_t j = 0; j < n_out; ++j) c[j * n_in + i] = coupled[j];
  }
  return c;
}

QMatrix calc_caps_output(std::span<const q7_t> u_hat, std::span<const q7_t> c, int iter,
                         const CapsLayerDesc& d, const ExecConfig& exec) {
  if (iter < 0 || iter >= d.num_routings) {
    throw ValueError("calc_caps_output: iteration " + std::to_string(iter) + " out of range");
  }
  const auto per_j = static_cast<std::size_t>(d.in_caps) * d.out_dim;
  if (u_hat.size() != per_j * d.out_caps ||
      c.size() != static_cast<std::size_t>(d.in_caps) * d.out_caps) {
    throw ShapeError("calc_caps_output: buffer size mismatch");
  }

  const auto it = static_cast<std::size_t>(iter);
  QMatrix s(d.out_caps, d.out_dim);
  run_partitioned(static_cast<std::size_t>(d.out_caps), exec.workers, [&](Range r) {
    for (std::size_t j = r.begin; j < r.end; ++j) {
      const MatView cj{c.subspan(j * d.in_caps, static_cast<std::size_t>(d.in_caps)), 1,
                       d.in_caps};
      const MatView uj{u_hat.subspan(j * per_j, per_j), d.in_caps, d.out_dim};
      const MutMatView sj{s.data().subspan(j * d.out_dim, static_cast<std::size_t>(d.out_dim)), 1,
                          d.out_dim};
      mat_mult_into(cj, uj, d.shifts.caps_output_shift[it], exec.strategy, sj);
    }
  });
  return squash_q7(s, {d.shifts.squash_in_frac_bits[it]}, exec.workers);
}

void calc_agreement_w_prev_caps(std::span<const q7_t> u_hat, const QMatrix& v, int iter,
                                std::span<q7_t> b, const CapsLayerDesc& d,
                                const ExecConfig& exec) {
  if (iter < 0 || iter >= d.num_routings - 1) {
    throw ValueError("calc_agreement_w_prev_caps: iteration " + std::to_string(iter) +
                     " has no agreement step");
  }
  const auto per_j = static_cast<std::size_t>(d.in_caps) * d.out_dim;
  if (u_hat.size() != per_j * d.out_caps || v.rows() != d.out_caps || v.cols() != d.out_dim ||
      b.size() != static_cast<std::size_t>(d.in_caps) * d.out_caps) {
    throw ShapeError("calc_agreement_w_prev_caps: buffer size mismatch");
  }

  const auto it = static_cast<std::size_t>(iter);
  run_partitioned(static_cast<std::size_t>(d.out_caps), exec.workers, [&](Range r) {
    std::vector<q7_t> dot(static_cast<std::size_t>(d.in_caps));
    for (std::size_t j = r.begin; j < r.end; ++j) {
      const MatView uj{u_hat.subspan(j * per_j, per_j), d.in_caps, d.out_dim};
      const MatView vj{v.data().subspan(j * d.out_dim, static_cast<std::size_t>(d.out_dim)),
                       d.out_dim, 1};
      const MutMatView agreement{dot, d.in_caps, 1};
      mat_mult_into(uj, vj, d.shifts.agreement_mul_shift[it], exec.strategy, agreement);

      const MutMatView bj{b.subspan(j * d.in_caps, static_cast<std::size_t>(d.in_caps)),
                          d.in_caps, 1};
      mat_add_into(bj, agreement, d.shifts.agreement_add_shift[it], bj);
    }
  });
}

QMatrix capsule_layer_q7(const QMatrix& layer_input, const CapsLayerDesc& d,
                         const ExecConfig& exec) {
  d.validate();
  const std::vector<q7_t> u_hat = calc_inputs_hat(layer_input.view(), d, exec);
  std::vector<q7_t> b(static_cast<std::size_t>(d.out_caps) * d.in_caps, 0);
  QMatrix v;
  for (int r = 0; r < d.num_routings; ++r) {
    const std::vector<q7_t> c = calc_coupling_coefs(b, d);
    v = calc_caps_output(u_hat, c, r, d, exec);
    if (r < d.num_routings - 1) calc_agreement_w_prev_caps(u_hat, v, r, b, d, exec);
  }
  return v;
}

int argmax_class(std::span<const std::uint32_t> scores) noexcept {
  int best = 0;
  for (std::size_t k = 1; k < scores.size(); ++k) {
    if (scores[k] > scores[static_cast<std::size_t>(best)]) best = static_cast<int>(k);
  }
  return best;
}

ForwardResult forward(const QuantModel& model, const QTensor& input, const ExecConfig& exec,
                      const LayerObserver& observer) {
  const auto geo = model.arch.geometry();
  if (!(input.shape == model.arch.input)) {
    throw ShapeError("forward: input " + input.shape.str() + " does not match model input " +
                     model.arch.input.str());
  }
  if (model.layers.size() != geo.size()) {
    throw ShapeError("forward: model has " + std::to_string(model.layers.size()) +
                     " layer records for " + std::to_string(geo.size()) + " layers");
  }

  std::variant<QTensor, QMatrix> act = input;
  for (std::size_t l = 0; l < geo.size(); ++l) {
    const QLayer& ql = model.layers[l];
    const LayerSpec& spec = model.arch.layers[l];

    if (const auto* conv = std::get_if<ConvSpec>(&spec)) {
      const auto& sh = std::get<ConvShifts>(ql.shifts);
      ConvParams p = geo[l].conv;
      p.bias_shift = sh.bias_shift;
      p.out_shift = sh.out_shift;
      QTensor out = conv2d_hwc(std::get<QTensor>(act), model.weights(l), model.bias(l), p,
                               conv->relu, {exec.conv_variant, exec.conv_split, exec.workers});
      out.fmt = ql.out_fmt;
      if (observer) observer(l, out.data, out.fmt);
      act = std::move(out);
    } else if (const auto* pc = std::get_if<PrimaryCapsSpec>(&spec)) {
      const auto& sh = std::get<PrimaryCapsShifts>(ql.shifts);
      PrimaryCapsDesc desc;
      desc.conv = geo[l].conv;
      desc.conv.bias_shift = sh.bias_shift;
      desc.conv.out_shift = sh.out_shift;
      desc.num_caps = pc->capsules;
      desc.caps_dim = pc->dim;
      desc.squash_in_frac_bits = sh.squash_in_frac_bits;
      QMatrix out =
          primary_capsule_q7(std::get<QTensor>(act), desc, model.weights(l), model.bias(l), exec);
      if (observer) observer(l, out.data(), out.fmt());
      act = std::move(out);
    } else {
      CapsLayerDesc d;
      d.in_caps = geo[l].in_caps;
      d.in_dim = geo[l].in_dim;
      d.out_caps = geo[l].out_caps;
      d.out_dim = geo[l].out_dim;
      d.num_routings = geo[l].routings;
      d.weights = model.weights(l);
      d.shifts = std::get<CapsShifts>(ql.shifts);
      QMatrix out = capsule_layer_q7(std::get<QMatrix>(act), d, exec);
      if (observer) observer(l, out.data(), out.fmt());
      act = std::move(out);
    }
  }

  ForwardResult result;
  result.capsules = std::get<QMatrix>(std::move(act));
  const QMatrix& caps = result.capsules;
  result.scores.resize(static_cast<std::size_t>(caps.rows()));
  for (int j = 0; j < caps.rows(); ++j) {
    result.scores[static_cast<std::size_t>(j)] =
        vector_norm_q(caps.data().subspan(static_cast<std::size_t>(j) * caps.cols(),
                                          static_cast<std::size_t>(caps.cols())))
            .norm;
  }
  result.predicted = argmax_class(result.scores);
  return result;
}

ForwardResult forward(const QuantModel& model, std::span<const float> input,
                      const ExecConfig& exec, const LayerObserver& observer) {
  if (input.size() != model.arch.input.size()) {
    throw ShapeError("forward: input holds " + std::to_string(input.size()) +
                     " values, model expects " + model.arch.input.str());
  }
  QTensor q{model.arch.input, quantize_tensor(input, model.input_fmt), model.input_fmt};
  return forward(model, q, exec, observer);
}

}  // namespace capsq

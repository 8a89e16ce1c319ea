// Copyright 2026 The capsq Authors
// SPDX-License-Identifier: Apache-2.0

#include "capsq/reference.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "capsq/error.hpp"

namespace capsq {
namespace {

std::vector<float> conv_float(std::span<const float> input, std::span<const float> weights,
                              std::span<const float> bias, const ConvParams& p, bool relu) {
  std::vector<float> out(p.out_shape().size());
  const int oh = p.out_h();
  const int ow = p.out_w();
  for (int oy = 0; oy < oh; ++oy) {
    for (int ox = 0; ox < ow; ++ox) {
      for (int oc = 0; oc < p.out_c; ++oc) {
        double acc = bias[static_cast<std::size_t>(oc)];
        for (int ky = 0; ky < p.kernel_h; ++ky) {
          const int iy = oy * p.stride_h - p.pad_h + ky;
          if (iy < 0 || iy >= p.in_h) continue;
          for (int kx = 0; kx < p.kernel_w; ++kx) {
            const int ix = ox * p.stride_w - p.pad_w + kx;
            if (ix < 0 || ix >= p.in_w) continue;
            for (int ic = 0; ic < p.in_c; ++ic) {
              const std::size_t xi = (static_cast<std::size_t>(iy) * p.in_w + ix) * p.in_c + ic;
              const std::size_t wi =
                  ((static_cast<std::size_t>(oc) * p.kernel_h + ky) * p.kernel_w + kx) * p.in_c + ic;
              acc += double{input[xi]} * double{weights[wi]};
            }
          }
        }
        auto v = static_cast<float>(acc);
        if (relu) v = std::max(v, 0.0f);
        out[(static_cast<std::size_t>(oy) * ow + ox) * p.out_c + oc] = v;
      }
    }
  }
  return out;
}

void squash_rows(std::vector<float>& rows, int dim) {
  const auto d = static_cast<std::size_t>(dim);
  for (std::size_t r = 0; r + d <= rows.size(); r += d) {
    const auto v = float_squash(std::span<const float>(rows).subspan(r, d));
    std::copy(v.begin(), v.end(), rows.begin() + static_cast<std::ptrdiff_t>(r));
  }
}

}  // namespace

std::string_view to_string(SiteKind k) noexcept {
  switch (k) {
    case SiteKind::kInput: return "input";
    case SiteKind::kWeights: return "weights";
    case SiteKind::kBias: return "bias";
    case SiteKind::kConvOutput: return "conv_output";
    case SiteKind::kOutput: return "output";
    case SiteKind::kUHat: return "u_hat";
    case SiteKind::kCapsSum: return "s_j";
    case SiteKind::kAgreement: return "agreement";
    case SiteKind::kLogits: return "b_logits";
  }
  return "unknown";
}

std::string SiteId::str() const {
  std::string s = "layer" + std::to_string(layer) + "." + std::string(to_string(kind));
  if (iter >= 0) s += "[" + std::to_string(iter) + "]";
  return s;
}

std::vector<float> float_squash(std::span<const float> s) {
  double sq = 0.0;
  for (float x : s) sq += double{x} * double{x};
  std::vector<float> out(s.size(), 0.0f);
  if (sq == 0.0) return out;
  // |s|^2/(1+|s|^2) / |s| = |s| / (1 + |s|^2)
  const double factor = std::sqrt(sq) / (1.0 + sq);
  for (std::size_t k = 0; k < s.size(); ++k) out[k] = static_cast<float>(s[k] * factor);
  return out;
}

FloatForwardResult float_forward(const FloatModel& model, std::span<const float> input,
                                 const SiteObserver& observer) {
  model.validate();
  const auto geo = model.arch.geometry();
  if (input.size() != model.arch.input.size()) {
    throw ShapeError("float_forward: input holds " + std::to_string(input.size()) +
                     " values, model expects " + model.arch.input.str());
  }
  auto observe = [&](int layer, SiteKind kind, int iter, std::span<const float> values) {
    if (observer) observer(SiteId{layer, kind, iter}, values);
  };

  std::vector<float> act(input.begin(), input.end());
  observe(0, SiteKind::kInput, -1, act);

  for (std::size_t l = 0; l < geo.size(); ++l) {
    const int li = static_cast<int>(l);
    const FloatLayerParams& prm = model.params[l];
    const LayerSpec& spec = model.arch.layers[l];
    observe(li, SiteKind::kWeights, -1, prm.weights);
    if (!prm.bias.empty()) observe(li, SiteKind::kBias, -1, prm.bias);

    if (const auto* conv = std::get_if<ConvSpec>(&spec)) {
      act = conv_float(act, prm.weights, prm.bias, geo[l].conv, conv->relu);
      observe(li, SiteKind::kOutput, -1, act);
    } else if (const auto* pc = std::get_if<PrimaryCapsSpec>(&spec)) {
      act = conv_float(act, prm.weights, prm.bias, geo[l].conv, false);
      observe(li, SiteKind::kConvOutput, -1, act);
      squash_rows(act, pc->dim);
      observe(li, SiteKind::kOutput, -1, act);
    } else {
      const LayerGeometry& g = geo[l];
      const auto n_in = static_cast<std::size_t>(g.in_caps);
      const auto n_out = static_cast<std::size_t>(g.out_caps);
      const auto d_in = static_cast<std::size_t>(g.in_dim);
      const auto d_out = static_cast<std::size_t>(g.out_dim);

      // u_hat[j][i] = W[j][i] * u_i
      std::vector<float> u_hat(n_out * n_in * d_out);
      for (std::size_t j = 0; j < n_out; ++j) {
        for (std::size_t i = 0; i < n_in; ++i) {
          const float* w = prm.weights.data() + (j * n_in + i) * d_out * d_in;
          const float* u = act.data() + i * d_in;
          float* dst = u_hat.data() + (j * n_in + i) * d_out;
          for (std::size_t r = 0; r < d_out; ++r) {
            double acc = 0.0;
            for (std::size_t k = 0; k < d_in; ++k) acc += double{w[r * d_in + k]} * double{u[k]};
            dst[r] = static_cast<float>(acc);
          }
        }
      }
      observe(li, SiteKind::kUHat, -1, u_hat);

      std::vector<float> b(n_out * n_in, 0.0f);
      std::vector<float> c(n_out * n_in);
      std::vector<float> v(n_out * d_out);
      for (int r = 0; r < g.routings; ++r) {
        for (std::size_t i = 0; i < n_in; ++i) {
          float top = b[i];
          for (std::size_t j = 1; j < n_out; ++j) top = std::max(top, b[j * n_in + i]);
          double total = 0.0;
          for (std::size_t j = 0; j < n_out; ++j) total += std::exp(double{b[j * n_in + i]} - top);
          for (std::size_t j = 0; j < n_out; ++j) {
            c[j * n_in + i] = static_cast<float>(std::exp(double{b[j * n_in + i]} - top) / total);
          }
        }

        std::vector<float> s(n_out * d_out);
        for (std::size_t j = 0; j < n_out; ++j) {
          for (std::size_t k = 0; k < d_out; ++k) {
            double acc = 0.0;
            for (std::size_t i = 0; i < n_in; ++i) {
              acc += double{c[j * n_in + i]} * double{u_hat[(j * n_in + i) * d_out + k]};
            }
            s[j * d_out + k] = static_cast<float>(acc);
          }
        }
        observe(li, SiteKind::kCapsSum, r, s);
        v = s;
        squash_rows(v, g.out_dim);

        if (r < g.routings - 1) {
          std::vector<float> agreement(n_out * n_in);
          for (std::size_t j = 0; j < n_out; ++j) {
            for (std::size_t i = 0; i < n_in; ++i) {
              double dot = 0.0;
              for (std::size_t k = 0; k < d_out; ++k) {
                dot += double{u_hat[(j * n_in + i) * d_out + k]} * double{v[j * d_out + k]};
              }
              agreement[j * n_in + i] = static_cast<float>(dot);
              b[j * n_in + i] += static_cast<float>(dot);
            }
          }
          observe(li, SiteKind::kAgreement, r, agreement);
          observe(li, SiteKind::kLogits, r, b);
        }
      }
      act = std::move(v);
      observe(li, SiteKind::kOutput, -1, act);
    }
  }

  FloatForwardResult result;
  const auto& last = std::get<CapsuleShape>(geo.back().out);
  result.capsules = act;
  result.scores.resize(static_cast<std::size_t>(last.count));
  for (std::size_t j = 0; j < result.scores.size(); ++j) {
    double sq = 0.0;
    for (int k = 0; k < last.dim; ++k) {
      const double x = act[j * static_cast<std::size_t>(last.dim) + static_cast<std::size_t>(k)];
      sq += x * x;
    }
    result.scores[j] = static_cast<float>(std::sqrt(sq));
  }
  result.predicted = static_cast<int>(
      std::max_element(result.scores.begin(), result.scores.end()) - result.scores.begin());
  return result;
}

}  // namespace capsq

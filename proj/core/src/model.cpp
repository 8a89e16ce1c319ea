// Copyright 2026 The capsq Authors
// SPDX-License-Identifier: Apache-2.0

#include "capsq/model.hpp"

#include <algorithm>
#include <string>

#include "capsq/error.hpp"

namespace capsq {
namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

std::string layer_tag(std::size_t index, const LayerSpec& spec) {
  return "layer " + std::to_string(index) + " (" + std::string(layer_kind_name(spec)) + ")";
}

void check_shift_range(int value, const std::string& what) {
  if (value < 0 || value > kMaxShift) {
    throw FormatError(what + " = " + std::to_string(value) + " outside [0, 31]");
  }
}

ConvParams conv_params(const FeatureShape& in, int out_c, int kh, int kw, int sh, int sw, int ph,
                       int pw) {
  ConvParams p;
  p.in_h = in.h;
  p.in_w = in.w;
  p.in_c = in.c;
  p.out_c = out_c;
  p.kernel_h = kh;
  p.kernel_w = kw;
  p.stride_h = sh;
  p.stride_w = sw;
  p.pad_h = ph;
  p.pad_w = pw;
  return p;
}

}  // namespace

std::string_view layer_kind_name(const LayerSpec& spec) noexcept {
  return std::visit(Overloaded{
                        [](const ConvSpec&) { return std::string_view("conv"); },
                        [](const PrimaryCapsSpec&) { return std::string_view("primary_caps"); },
                        [](const CapsSpec&) { return std::string_view("caps"); },
                    },
                    spec);
}

std::string shape_str(const ActivationShape& s) {
  return std::visit(Overloaded{
                        [](const FeatureShape& f) { return f.str(); },
                        [](const CapsuleShape& c) {
                          return std::to_string(c.count) + " capsules x " + std::to_string(c.dim);
                        },
                    },
                    s);
}

std::size_t shape_size(const ActivationShape& s) {
  return std::visit([](const auto& x) { return x.size(); }, s);
}

std::vector<LayerGeometry> Architecture::geometry() const {
  if (input.h <= 0 || input.w <= 0 || input.c <= 0) {
    throw ShapeError("network input shape " + input.str() + " must be positive");
  }
  if (layers.empty()) throw ShapeError("network has no layers");

  std::vector<LayerGeometry> out;
  out.reserve(layers.size());
  ActivationShape cur = input;

  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerSpec& spec = layers[i];
    const std::string tag = layer_tag(i, spec);
    LayerGeometry g;
    g.in = cur;

    std::visit(
        Overloaded{
            [&](const ConvSpec& s) {
              const auto* in = std::get_if<FeatureShape>(&cur);
              if (!in) throw ShapeError(tag + ": expects a feature map, got " + shape_str(cur));
              if (s.filters <= 0) throw ShapeError(tag + ": filters must be positive");
              g.conv = conv_params(*in, s.filters, s.kernel_h, s.kernel_w, s.stride_h, s.stride_w,
                                   s.pad_h, s.pad_w);
              try {
                g.conv.validate();
              } catch (const Error& e) {
                throw ShapeError(tag + ": " + e.what());
              }
              g.out = g.conv.out_shape();
              g.weight_count = g.conv.weight_count();
              g.bias_count = static_cast<std::size_t>(s.filters);
            },
            [&](const PrimaryCapsSpec& s) {
              const auto* in = std::get_if<FeatureShape>(&cur);
              if (!in) throw ShapeError(tag + ": expects a feature map, got " + shape_str(cur));
              if (s.capsules <= 0 || s.dim <= 0) {
                throw ShapeError(tag + ": capsules and dim must be positive");
              }
              g.conv = conv_params(*in, s.capsules * s.dim, s.kernel_h, s.kernel_w, s.stride_h,
                                   s.stride_w, s.pad_h, s.pad_w);
              try {
                g.conv.validate();
              } catch (const Error& e) {
                throw ShapeError(tag + ": " + e.what());
              }
              g.out = CapsuleShape{g.conv.out_h() * g.conv.out_w() * s.capsules, s.dim};
              g.weight_count = g.conv.weight_count();
              g.bias_count = static_cast<std::size_t>(g.conv.out_c);
            },
            [&](const CapsSpec& s) {
              const auto* in = std::get_if<CapsuleShape>(&cur);
              if (!in) throw ShapeError(tag + ": expects capsules, got " + shape_str(cur));
              if (s.capsules <= 0 || s.dim <= 0 || s.routings <= 0) {
                throw ShapeError(tag + ": capsules, dim and routings must be positive");
              }
              g.in_caps = in->count;
              g.in_dim = in->dim;
              g.out_caps = s.capsules;
              g.out_dim = s.dim;
              g.routings = s.routings;
              g.out = CapsuleShape{s.capsules, s.dim};
              g.weight_count = static_cast<std::size_t>(s.capsules) * in->count * s.dim * in->dim;
              g.bias_count = 0;
            },
        },
        spec);

    cur = g.out;
    out.push_back(g);
  }

  if (!std::holds_alternative<CapsuleShape>(cur)) {
    throw ShapeError("network output is " + shape_str(cur) + "; the last layer must emit capsules");
  }
  return out;
}

std::size_t Architecture::parameter_count() const {
  std::size_t total = 0;
  for (const auto& g : geometry()) total += g.weight_count + g.bias_count;
  return total;
}

int Architecture::num_classes() const {
  return std::get<CapsuleShape>(geometry().back().out).count;
}

std::optional<Architecture> preset_architecture(std::string_view name) {
  if (name == "mnist") {
    return Architecture{{28, 28, 1},
                        {ConvSpec{16, 7, 7, 1, 1, 0, 0, true},
                         PrimaryCapsSpec{16, 4, 7, 7, 2, 2, 0, 0}, CapsSpec{10, 6, 3}}};
  }
  if (name == "smallnorb") {
    return Architecture{{32, 32, 2},
                        {ConvSpec{32, 7, 7, 1, 1, 0, 0, true},
                         PrimaryCapsSpec{16, 4, 7, 7, 2, 2, 0, 0}, CapsSpec{5, 6, 3}}};
  }
  if (name == "cifar10") {
    return Architecture{{32, 32, 3},
                        {ConvSpec{32, 3, 3, 1, 1, 0, 0, true}, ConvSpec{32, 3, 3, 1, 1, 0, 0, true},
                         ConvSpec{64, 3, 3, 2, 2, 0, 0, true}, ConvSpec{64, 3, 3, 2, 2, 0, 0, true},
                         PrimaryCapsSpec{16, 4, 3, 3, 2, 2, 0, 0}, CapsSpec{10, 5, 3}}};
  }
  return std::nullopt;
}

std::vector<std::string> preset_names() { return {"mnist", "smallnorb", "cifar10"}; }

void FloatModel::validate() const {
  const auto geo = arch.geometry();
  if (params.size() != geo.size()) {
    throw ShapeError("float model has " + std::to_string(params.size()) +
                     " parameter sets for " + std::to_string(geo.size()) + " layers");
  }
  for (std::size_t i = 0; i < geo.size(); ++i) {
    const std::string tag = layer_tag(i, arch.layers[i]);
    if (params[i].weights.size() != geo[i].weight_count) {
      throw ShapeError(tag + ": " + std::to_string(params[i].weights.size()) +
                       " weights, expected " + std::to_string(geo[i].weight_count));
    }
    if (params[i].bias.size() != geo[i].bias_count) {
      throw ShapeError(tag + ": " + std::to_string(params[i].bias.size()) + " biases, expected " +
                       std::to_string(geo[i].bias_count));
    }
  }
}

void CapsShifts::validate(int routings) const {
  const auto r = static_cast<std::size_t>(routings);
  const auto agree = static_cast<std::size_t>(std::max(routings - 1, 0));
  if (caps_output_shift.size() != r || squash_in_frac_bits.size() != r) {
    throw FormatError("caps shifts: per-iteration arrays must hold " + std::to_string(r) +
                      " entries");
  }
  if (agreement_mul_shift.size() != agree || agreement_add_shift.size() != agree) {
    throw FormatError("caps shifts: agreement arrays must hold " + std::to_string(agree) +
                      " entries");
  }
  check_shift_range(inputs_hat_shift, "inputs_hat_shift");
  check_shift_range(b_frac_bits, "b_frac_bits");
  for (int v : caps_output_shift) check_shift_range(v, "caps_output_shift");
  for (int v : agreement_mul_shift) check_shift_range(v, "agreement_mul_shift");
  for (int v : agreement_add_shift) check_shift_range(v, "agreement_add_shift");
  for (int v : squash_in_frac_bits) check_shift_range(v, "squash_in_frac_bits");
}

std::size_t CapsShifts::value_count() const noexcept {
  return 2 + caps_output_shift.size() + agreement_mul_shift.size() +
         agreement_add_shift.size() + squash_in_frac_bits.size();
}

std::span<const q7_t> QuantModel::weights(std::size_t layer) const {
  const BlobRef& r = layers.at(layer).weights;
  return std::span<const q7_t>(blob).subspan(r.offset, r.bytes);
}

std::span<const q7_t> QuantModel::bias(std::size_t layer) const {
  const BlobRef& r = layers.at(layer).bias;
  return std::span<const q7_t>(blob).subspan(r.offset, r.bytes);
}

void QuantModel::validate() const {
  const auto geo = arch.geometry();
  if (layers.size() != geo.size()) {
    throw FormatError("quantized model has " + std::to_string(layers.size()) +
                      " layer records for " + std::to_string(geo.size()) + " layers");
  }

  std::vector<BlobRef> used;
  for (std::size_t i = 0; i < geo.size(); ++i) {
    const std::string tag = layer_tag(i, arch.layers[i]);
    const QLayer& l = layers[i];
    const LayerSpec& spec = arch.layers[i];

    auto check_ref = [&](const BlobRef& ref, std::size_t expected, const char* what) {
      if (ref.bytes != expected) {
        throw FormatError(tag + ": " + what + " span holds " + std::to_string(ref.bytes) +
                          " bytes, expected " + std::to_string(expected));
      }
      if (ref.offset > blob.size() || ref.bytes > blob.size() - ref.offset) {
        throw FormatError(tag + ": " + what + " span [" + std::to_string(ref.offset) + ", +" +
                          std::to_string(ref.bytes) + ") exceeds blob of " +
                          std::to_string(blob.size()) + " bytes");
      }
      if (ref.bytes > 0) used.push_back(ref);
    };
    check_ref(l.weights, geo[i].weight_count, "weights");
    check_ref(l.bias, geo[i].bias_count, "bias");

    const bool kinds_match =
        (std::holds_alternative<ConvSpec>(spec) && std::holds_alternative<ConvShifts>(l.shifts)) ||
        (std::holds_alternative<PrimaryCapsSpec>(spec) &&
         std::holds_alternative<PrimaryCapsShifts>(l.shifts)) ||
        (std::holds_alternative<CapsSpec>(spec) && std::holds_alternative<CapsShifts>(l.shifts));
    if (!kinds_match) throw FormatError(tag + ": shift record does not match the layer kind");

    try {
      std::visit(Overloaded{
                     [](const ConvShifts& s) {
                       check_shift_range(s.bias_shift, "bias_shift");
                       check_shift_range(s.out_shift, "out_shift");
                     },
                     [](const PrimaryCapsShifts& s) {
                       check_shift_range(s.bias_shift, "bias_shift");
                       check_shift_range(s.out_shift, "out_shift");
                       check_shift_range(s.squash_in_frac_bits, "squash_in_frac_bits");
                     },
                     [&](const CapsShifts& s) { s.validate(geo[i].routings); },
                 },
                 l.shifts);
    } catch (const FormatError& e) {
      throw FormatError(tag + ": " + e.what());
    }
  }

  std::sort(used.begin(), used.end(),
            [](const BlobRef& a, const BlobRef& b) { return a.offset < b.offset; });
  for (std::size_t k = 1; k < used.size(); ++k) {
    if (used[k - 1].offset + used[k - 1].bytes > used[k].offset) {
      throw FormatError("blob spans overlap at offset " + std::to_string(used[k].offset));
    }
  }
}

std::size_t QuantModel::shift_metadata_bytes() const noexcept {
  std::size_t n = 1;  // input format
  for (const auto& l : layers) {
    n += std::visit(Overloaded{
                        [](const ConvShifts&) -> std::size_t { return 2; },
                        [](const PrimaryCapsShifts&) -> std::size_t { return 3; },
                        [](const CapsShifts& s) { return s.value_count(); },
                    },
                    l.shifts);
  }
  return n;
}

ShiftSchedule QuantModel::schedule() const {
  ShiftSchedule s;
  s.reserve(layers.size());
  for (const auto& l : layers) s.push_back(l.shifts);
  return s;
}

}  // namespace capsq

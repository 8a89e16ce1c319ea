// Copyright 2026 The capsq Authors
// SPDX-License-Identifier: Apache-2.0

#include "capsq/quantizer.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "capsq/error.hpp"
#include "capsq/parallel.hpp"

namespace capsq {

QFormat find_qformat(double max_abs) {
  if (!std::isfinite(max_abs) || max_abs < 0.0) {
    throw ValueError("find_qformat: max_abs must be finite and non-negative, got " +
                     std::to_string(max_abs));
  }
  if (max_abs == 0.0) return QFormat::with_frac_bits(QFormat::kMaxFracBits);

  const int m = static_cast<int>(std::ceil(std::log2(max_abs)));
  int n = std::min(7 - m, QFormat::kMaxFracBits);
  // Virtual extension: more fractional bits while the next step still fits.
  while (n < QFormat::kMaxFracBits && std::ldexp(max_abs, n + 1) <= 127.0) ++n;
  // ceil(log2) leaves values in (127/128 * 2^m, 2^m] one step over 127.
  while (std::round(std::ldexp(max_abs, n)) > 127.0) --n;
  if (n < QFormat::kMinFracBits) {
    throw ValueError("find_qformat: max_abs " + std::to_string(max_abs) +
                     " needs more than 14 integer bits");
  }
  return QFormat::with_frac_bits(n);
}

// ---------------------------------------------------------------------------
// Calibration profile

void CalibrationProfile::record(const SiteId& site, std::span<const float> values) {
  float peak = 0.0f;
  for (float v : values) peak = std::max(peak, std::fabs(v));
  auto [it, inserted] = sites_.try_emplace(site, peak);
  if (!inserted) it->second = std::max(it->second, peak);
}

void CalibrationProfile::set(const SiteId& site, float max_abs) { sites_[site] = max_abs; }

void CalibrationProfile::merge(const CalibrationProfile& other) {
  for (const auto& [site, peak] : other.sites_) {
    auto [it, inserted] = sites_.try_emplace(site, peak);
    if (!inserted) it->second = std::max(it->second, peak);
  }
  samples_ += other.samples_;
}

std::optional<float> CalibrationProfile::find(const SiteId& site) const {
  const auto it = sites_.find(site);
  if (it == sites_.end()) return std::nullopt;
  return it->second;
}

float CalibrationProfile::max_abs(const SiteId& site) const {
  const auto v = find(site);
  if (!v) throw InvariantError("calibration profile lacks site " + site.str());
  return *v;
}

CalibrationProfile calibrate(const FloatModel& model, const Dataset& dataset, int workers) {
  if (dataset.empty()) throw ValueError("empty calibration dataset");
  if (dataset.dtype != SampleType::kFloat32) {
    throw ValueError("calibration dataset must hold float32 samples");
  }
  if (!(dataset.shape == model.arch.input)) {
    throw ShapeError("calibration samples are " + dataset.shape.str() + ", model expects " +
                     model.arch.input.str());
  }
  model.validate();

  const auto blocks = partition(dataset.size(), workers);
  std::vector<CalibrationProfile> partial(blocks.size());
  run_partitioned(dataset.size(), workers, [&](Range r) {
    // Find this block's slot; blocks are disjoint so each slot has one writer.
    const auto slot = static_cast<std::size_t>(
        std::find(blocks.begin(), blocks.end(), r) - blocks.begin());
    CalibrationProfile& prof = partial[slot];
    for (std::size_t s = r.begin; s < r.end; ++s) {
      float_forward(model, dataset.sample_f32(s),
                    [&](const SiteId& site, std::span<const float> v) { prof.record(site, v); });
    }
    prof.add_samples(r.size());
  });

  CalibrationProfile merged;
  for (const auto& p : partial) merged.merge(p);
  return merged;
}

// ---------------------------------------------------------------------------
// Shift planning

namespace {

struct Planner {
  const CalibrationProfile& profile;
  QuantPlan& plan;

  int frac_bits(const SiteId& site) const {
    const float peak = profile.max_abs(site);
    if (peak == 0.0f) plan.degenerate_sites.push_back(site.str());
    return find_qformat(peak).frac_bits();
  }

  void warn(const SiteId& site, const char* what, int computed, int applied) {
    plan.warnings.push_back(site.str() + ": " + what + " " + std::to_string(computed) +
                            " clamped to " + std::to_string(applied));
  }

  // Right shift taking a product in `prod` fractional bits to `target`. A
  // clamped shift moves the target format instead.
  int product_shift(const SiteId& site, int prod, int& target, const char* what) {
    int shift = prod - target;
    if (shift < 0) {
      warn(site, what, shift, 0);
      shift = 0;
    } else if (shift > kMaxShift) {
      warn(site, what, shift, kMaxShift);
      shift = kMaxShift;
    }
    target = prod - shift;
    return shift;
  }
};

}  // namespace

QuantPlan compute_shifts(const CalibrationProfile& profile, const FloatModel& model) {
  const auto geo = model.arch.geometry();
  QuantPlan plan;
  Planner pl{profile, plan};

  int f_in = pl.frac_bits({0, SiteKind::kInput, -1});
  plan.input_fmt = QFormat::with_frac_bits(f_in);

  for (std::size_t l = 0; l < geo.size(); ++l) {
    const int li = static_cast<int>(l);
    const LayerSpec& spec = model.arch.layers[l];
    const int f_w = pl.frac_bits({li, SiteKind::kWeights, -1});
    const int prod = f_in + f_w;

    if (std::holds_alternative<CapsSpec>(spec)) {
      const LayerGeometry& g = geo[l];
      CapsShifts cs;
      int f_uhat = pl.frac_bits({li, SiteKind::kUHat, -1});
      cs.inputs_hat_shift = pl.product_shift({li, SiteKind::kUHat, -1}, prod, f_uhat,
                                             "inputs_hat_shift");

      // Coupling coefficients and squash outputs are Q0.7.
      for (int r = 0; r < g.routings; ++r) {
        const SiteId s_site{li, SiteKind::kCapsSum, r};
        int f_s = std::clamp(pl.frac_bits(s_site), 0, kMaxShift);
        cs.caps_output_shift.push_back(pl.product_shift(s_site, 7 + f_uhat, f_s,
                                                        "caps_output_shift"));
        cs.squash_in_frac_bits.push_back(f_s);
      }

      // One logit format for all iterations: it must hold every b and every
      // agreement increment, since the two are added without realignment.
      float b_peak = 0.0f;
      for (int r = 0; r + 1 < g.routings; ++r) {
        b_peak = std::max(b_peak, profile.max_abs({li, SiteKind::kLogits, r}));
        b_peak = std::max(b_peak, profile.max_abs({li, SiteKind::kAgreement, r}));
      }
      const int f_b_raw = find_qformat(b_peak).frac_bits();
      const int f_b = std::clamp(f_b_raw, std::max(0, f_uhat + 7 - kMaxShift),
                                 std::min(kMaxShift, f_uhat + 7));
      if (f_b != f_b_raw && g.routings > 1) {
        pl.warn({li, SiteKind::kLogits, -1}, "logit fractional bits", f_b_raw, f_b);
      }
      cs.b_frac_bits = f_b;
      for (int r = 0; r + 1 < g.routings; ++r) {
        cs.agreement_mul_shift.push_back(output_shift(f_uhat, 7, f_b));
        cs.agreement_add_shift.push_back(f_b - f_b);  // operands already share f_b
      }

      plan.formats.push_back({QFormat::with_frac_bits(f_w), QFormat{}, QFormat{}});
      plan.schedule.emplace_back(std::move(cs));
      f_in = 7;
      continue;
    }

    int f_b = pl.frac_bits({li, SiteKind::kBias, -1});
    const bool primary = std::holds_alternative<PrimaryCapsSpec>(spec);
    const SiteId out_site{li, primary ? SiteKind::kConvOutput : SiteKind::kOutput, -1};
    int f_o = pl.frac_bits(out_site);
    if (primary) f_o = std::clamp(f_o, 0, kMaxShift);  // squash input
    const int out_s = pl.product_shift(out_site, prod, f_o, "out_shift");
    const int bias_s = pl.product_shift({li, SiteKind::kBias, -1}, prod, f_b, "bias_shift");

    if (primary) {
      plan.formats.push_back(
          {QFormat::with_frac_bits(f_w), QFormat::with_frac_bits(f_b), QFormat{}});
      plan.schedule.emplace_back(PrimaryCapsShifts{bias_s, out_s, f_o});
      f_in = 7;
    } else {
      plan.formats.push_back({QFormat::with_frac_bits(f_w), QFormat::with_frac_bits(f_b),
                              QFormat::with_frac_bits(f_o)});
      plan.schedule.emplace_back(ConvShifts{bias_s, out_s});
      f_in = f_o;
    }
  }
  return plan;
}

// ---------------------------------------------------------------------------
// Model quantization

double Footprint::saving_percent() const noexcept {
  if (float_bytes == 0) return 0.0;
  return 100.0 * (1.0 - static_cast<double>(quantized_bytes()) / static_cast<double>(float_bytes));
}

Footprint footprint(const QuantModel& model) {
  Footprint f;
  f.parameters = model.arch.parameter_count();
  f.float_bytes = 4 * f.parameters;
  f.int8_bytes = model.blob.size();
  f.shift_bytes = model.shift_metadata_bytes();
  return f;
}

QuantModel apply_plan(const FloatModel& model, const QuantPlan& plan) {
  model.validate();
  if (plan.formats.size() != model.params.size() || plan.schedule.size() != model.params.size()) {
    throw InvariantError("quantization plan does not cover every layer");
  }
  QuantModel q;
  q.arch = model.arch;
  q.input_fmt = plan.input_fmt;

  for (std::size_t l = 0; l < model.params.size(); ++l) {
    const FloatLayerParams& p = model.params[l];
    const LayerFormats& f = plan.formats[l];
    QLayer ql;
    ql.weight_fmt = f.weights;
    ql.bias_fmt = f.bias;
    ql.out_fmt = f.output;
    ql.shifts = plan.schedule[l];

    const auto w = quantize_tensor(p.weights, f.weights);
    ql.weights = {q.blob.size(), w.size()};
    q.blob.insert(q.blob.end(), w.begin(), w.end());
    const auto b = quantize_tensor(p.bias, f.bias);
    if (!b.empty()) ql.bias = {q.blob.size(), b.size()};
    q.blob.insert(q.blob.end(), b.begin(), b.end());
    q.layers.push_back(ql);
  }
  q.validate();
  return q;
}

QuantizeResult quantize_model(const FloatModel& model, const Dataset& dataset, int workers) {
  QuantizeResult r;
  r.profile = calibrate(model, dataset, workers);
  r.plan = compute_shifts(r.profile, model);
  r.model = apply_plan(model, r.plan);
  r.footprint = footprint(r.model);
  return r;
}

}  // namespace capsq

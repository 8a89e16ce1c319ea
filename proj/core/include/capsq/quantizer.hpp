// Copyright 2026 The capsq Authors
// SPDX-License-Identifier: Apache-2.0

// Post-training quantization: power-of-two Qm.n discovery per tensor site,
// activation-range calibration through the float reference, and the bias /
// output shift schedule that keeps every int-8 site in its format.

#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "capsq/dataset.hpp"
#include "capsq/model.hpp"
#include "capsq/qcore.hpp"
#include "capsq/reference.hpp"

namespace capsq {

/// Smallest-step power-of-two format that holds +-max_abs in int-8.
///
/// Starts from m = ceil(log2(max_abs)), n = 7 - m, then adds fractional bits
/// while max_abs * 2^(n+1) <= 127. max_abs == 0 yields the degenerate n = 31.
/// The result always satisfies round(max_abs * 2^n) <= 127. Throws ValueError
/// for negative or non-finite input, or magnitudes beyond 127 * 2^7.
QFormat find_qformat(double max_abs);

/// out_s = f_ia + f_ib - f_o
constexpr int output_shift(int f_ia, int f_ib, int f_o) noexcept { return f_ia + f_ib - f_o; }

/// bias_s = f_ia + f_ib - f_b
constexpr int bias_shift(int f_ia, int f_ib, int f_b) noexcept { return f_ia + f_ib - f_b; }

/// Running max |x| per site.
class CalibrationProfile {
 public:
  void record(const SiteId& site, std::span<const float> values);
  void set(const SiteId& site, float max_abs);
  /// Element-wise max; sites missing on one side are copied.
  void merge(const CalibrationProfile& other);

  std::optional<float> find(const SiteId& site) const;
  /// Throws InvariantError when the site was never recorded.
  float max_abs(const SiteId& site) const;

  const std::map<SiteId, float>& sites() const noexcept { return sites_; }
  std::size_t samples() const noexcept { return samples_; }
  void add_samples(std::size_t n) noexcept { samples_ += n; }

  friend bool operator==(const CalibrationProfile&, const CalibrationProfile&) = default;

 private:
  std::map<SiteId, float> sites_;
  std::size_t samples_ = 0;
};

/// Runs the float model over every sample and records max |x| at every site,
/// per routing iteration for capsule layers. Samples are spread over
/// `workers`. Throws ValueError on an empty or non-float dataset, ShapeError
/// when the sample shape differs from the model input.
CalibrationProfile calibrate(const FloatModel& model, const Dataset& dataset, int workers = 1);

struct LayerFormats {
  QFormat weights;
  QFormat bias;
  QFormat output;
};

/// Formats and shifts for every layer, plus the adjustments made on the way.
struct QuantPlan {
  QFormat input_fmt;
  std::vector<LayerFormats> formats;
  ShiftSchedule schedule;
  std::vector<std::string> warnings;          // clamped shifts
  std::vector<std::string> degenerate_sites;  // all-zero sites (n = 31)
};

/// Derives every site format with find_qformat and applies the shift formulas.
/// A shift that would leave [0, 31] is clamped and the target format moved
/// with it, so stored values keep meaning what their format says.
QuantPlan compute_shifts(const CalibrationProfile& profile, const FloatModel& model);

struct Footprint {
  std::size_t parameters = 0;
  std::size_t float_bytes = 0;  // 4 per parameter
  std::size_t int8_bytes = 0;   // blob, 1 per parameter
  std::size_t shift_bytes = 0;  // shift schedule and input format

  std::size_t quantized_bytes() const noexcept { return int8_bytes + shift_bytes; }
  /// 1 - quantized / float, in percent.
  double saving_percent() const noexcept;
};

Footprint footprint(const QuantModel& model);

struct QuantizeResult {
  QuantModel model;
  CalibrationProfile profile;
  QuantPlan plan;
  Footprint footprint;
};

/// Calibrates, plans shifts and quantizes weights and biases layer by layer.
QuantizeResult quantize_model(const FloatModel& model, const Dataset& dataset, int workers = 1);

/// Weights and biases as int-8 under a given plan (no calibration).
QuantModel apply_plan(const FloatModel& model, const QuantPlan& plan);

}  // namespace capsq

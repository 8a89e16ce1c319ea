// Copyright 2026 The capsq Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "capsq/qcore.hpp"

namespace capsq {

/// Height-width-channel extent; channel is the fastest-moving index.
struct FeatureShape {
  int h = 0;
  int w = 0;
  int c = 0;

  std::size_t size() const noexcept {
    return static_cast<std::size_t>(h) * static_cast<std::size_t>(w) * static_cast<std::size_t>(c);
  }
  std::string str() const;
  friend bool operator==(const FeatureShape&, const FeatureShape&) = default;
};

/// Row-major int-8 matrix view.
struct MatView {
  std::span<const q7_t> data;
  int rows = 0;
  int cols = 0;

  q7_t operator()(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
};

struct MutMatView {
  std::span<q7_t> data;
  int rows = 0;
  int cols = 0;

  q7_t& operator()(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
  operator MatView() const { return {data, rows, cols}; }
};

/// Owning row-major int-8 matrix with its fixed-point format.
class QMatrix {
 public:
  QMatrix() = default;
  QMatrix(int rows, int cols, QFormat fmt = {});
  /// Throws ShapeError when data.size() != rows * cols.
  QMatrix(int rows, int cols, std::vector<q7_t> data, QFormat fmt = {});

  int rows() const noexcept { return rows_; }
  int cols() const noexcept { return cols_; }
  QFormat fmt() const noexcept { return fmt_; }
  void set_fmt(QFormat fmt) noexcept { fmt_ = fmt; }

  std::span<const q7_t> data() const noexcept { return data_; }
  std::span<q7_t> data() noexcept { return data_; }
  std::vector<q7_t> release() && noexcept { return std::move(data_); }

  q7_t at(int r, int c) const { return data_[index(r, c)]; }
  q7_t& at(int r, int c) { return data_[index(r, c)]; }

  MatView view() const noexcept { return {data_, rows_, cols_}; }
  MutMatView mut_view() noexcept { return {data_, rows_, cols_}; }

  std::string shape_str() const;
  friend bool operator==(const QMatrix&, const QMatrix&) = default;

 private:
  std::size_t index(int r, int c) const noexcept {
    return static_cast<std::size_t>(r) * static_cast<std::size_t>(cols_) + static_cast<std::size_t>(c);
  }

  int rows_ = 0;
  int cols_ = 0;
  std::vector<q7_t> data_;
  QFormat fmt_;
};

/// HWC int-8 activation tensor.
struct QTensor {
  FeatureShape shape;
  std::vector<q7_t> data;
  QFormat fmt;

  friend bool operator==(const QTensor&, const QTensor&) = default;
};

}  // namespace capsq

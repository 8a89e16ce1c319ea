// Copyright 2026 The capsq Authors
// SPDX-License-Identifier: Apache-2.0

#include "capsq/tensor.hpp"

#include "capsq/error.hpp"

namespace capsq {

std::string FeatureShape::str() const {
  return std::to_string(h) + "x" + std::to_string(w) + "x" + std::to_string(c);
}

QMatrix::QMatrix(int rows, int cols, QFormat fmt)
    : rows_(rows), cols_(cols),
      data_(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols), 0), fmt_(fmt) {
  if (rows < 0 || cols < 0) throw ShapeError("QMatrix: negative extent " + shape_str());
}

QMatrix::QMatrix(int rows, int cols, std::vector<q7_t> data, QFormat fmt)
    : rows_(rows), cols_(cols), data_(std::move(data)), fmt_(fmt) {
  if (rows < 0 || cols < 0 ||
      data_.size() != static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols)) {
    throw ShapeError("QMatrix: " + std::to_string(data_.size()) +
                     " values do not fill a " + shape_str() + " matrix");
  }
}

std::string QMatrix::shape_str() const {
  return "[" + std::to_string(rows_) + "x" + std::to_string(cols_) + "]";
}

}  // namespace capsq

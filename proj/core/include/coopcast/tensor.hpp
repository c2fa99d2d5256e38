// Copyright (c) 2026 CoopCast Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "coopcast/errors.hpp"

namespace coopcast {

// Dense row-major f64 tensor. Everything in the model is rank 1 or 2;
// rank-2 with shape {rows, cols} is the working currency of the tape.
struct Tensor {
  std::vector<std::int64_t> shape;
  std::vector<double> data;
  bool requires_grad = false;

  Tensor() = default;
  Tensor(std::vector<std::int64_t> s, std::vector<double> d, bool rg = false)
      : shape(std::move(s)), data(std::move(d)), requires_grad(rg) {
    if (numel(shape) != static_cast<std::int64_t>(data.size()))
      throw NumericError("tensor: shape/data size mismatch");
  }

  static std::int64_t numel(const std::vector<std::int64_t>& s) {
    std::int64_t n = 1;
    for (auto e : s) {
      if (e < 0) throw NumericError("tensor: negative extent");
      n *= e;
    }
    return n;
  }

  static Tensor zeros(std::vector<std::int64_t> s) {
    auto n = numel(s);
    return Tensor(std::move(s), std::vector<double>(static_cast<std::size_t>(n), 0.0));
  }

  static Tensor full(std::vector<std::int64_t> s, double v) {
    auto n = numel(s);
    return Tensor(std::move(s), std::vector<double>(static_cast<std::size_t>(n), v));
  }

  static Tensor scalar(double v) { return Tensor({1}, {v}); }

  static Tensor row_matrix(std::int64_t rows, std::int64_t cols, std::vector<double> d) {
    return Tensor({rows, cols}, std::move(d));
  }

  std::int64_t size() const { return static_cast<std::int64_t>(data.size()); }
  std::int64_t rows() const { return shape.empty() ? 0 : shape[0]; }
  std::int64_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }

  double& at(std::int64_t r, std::int64_t c) { return data[static_cast<std::size_t>(r * cols() + c)]; }
  double at(std::int64_t r, std::int64_t c) const { return data[static_cast<std::size_t>(r * cols() + c)]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  bool all_finite() const {
    for (double v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }

  std::string shape_str() const {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
      if (i) s += ",";
      s += std::to_string(shape[i]);
    }
    return s + "]";
  }
};

// Numerically stable softmax along `axis`. Slices along the axis sum to 1.
// Throws NumericError on non-finite input.
Tensor softmax(const Tensor& x, int axis);

}  // namespace coopcast

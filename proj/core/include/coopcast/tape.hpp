// Copyright (c) 2026 CoopCast Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "coopcast/tensor.hpp"

namespace coopcast {

class Tape;

// Handle to a node on a tape. Valid only for the tape that produced it.
struct Var {
  std::int32_t id = -1;
  bool valid() const { return id >= 0; }
};

// Reverse-mode tape over rank-2 tensors. Nodes are appended in evaluation
// order, so node ids are already a topological order; backward walks ids in
// reverse and visits each node exactly once.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor value);      // grad tracked iff value.requires_grad
  Var constant(Tensor value);  // never tracked

  const Tensor& val(Var v) const { return nodes_[v.id].value; }
  // Zero tensor if the node was never reached by backward.
  Tensor grad_of(Var v) const;
  bool needs_grad(Var v) const { return nodes_[v.id].needs_grad; }
  std::size_t size() const { return nodes_.size(); }

  // ---- elementwise / shape ops ----
  Var add(Var a, Var b);        // same shape, or b broadcast as a {1,c} row
  Var sub(Var a, Var b);        // same broadcast rule
  Var mul(Var a, Var b);        // hadamard, same shape
  Var div(Var a, Var b);        // elementwise, same shape
  Var scale(Var a, double k);
  Var add_scalar(Var a, double k);
  Var relu(Var a);
  Var abs(Var a);
  Var log_floor(Var a, double floor);  // ln(max(a, floor))
  Var softplus(Var a);                 // ln(1 + e^x), overflow-safe
  Var softmax_rows(Var a);
  Var layer_norm_rows(Var x, Var gain, Var bias);  // eps 1e-5, per row

  // ---- linear algebra ----
  Var matmul(Var a, Var b);     // {m,k} x {k,n}
  Var matmul_nt(Var a, Var b);  // {m,k} x {n,k}^T -> {m,n}

  // ---- structural ----
  Var concat_cols(std::span<const Var> xs);
  Var concat_rows(std::span<const Var> xs);
  Var slice_cols(Var a, std::int64_t c0, std::int64_t len);
  Var slice_rows(Var a, std::int64_t r0, std::int64_t len);
  // out has `out_rows` rows; row i of a lands at row_map[i], the rest are 0.
  Var scatter_rows(Var a, std::vector<std::int64_t> row_map, std::int64_t out_rows);
  Var mean_rows(Var a);  // {r,c} -> {1,c}
  Var sum_all(Var a);    // {r,c} -> {1,1}

  // ---- losses ----
  // Per-element binary cross entropy from logits, numerically stable.
  // targets.size() must equal numel(a).
  Var bce_logits(Var a, std::vector<double> targets);

  // Accumulates gradients into every reachable node with needs_grad.
  // `loss` must be a scalar ({1,1} or single-element) node.
  void backward(Var loss);

 private:
  struct Node {
    Tensor value;
    Tensor grad;  // allocated lazily during backward
    bool needs_grad = false;
    bool grad_alloc = false;
    std::function<void(Tape&)> back;  // empty for leaves/constants
  };

  Var push(Tensor value, bool needs_grad, std::function<void(Tape&)> back);
  Tensor& grad_buf(std::int32_t id);
  void ensure_grad(std::int32_t id);

  std::vector<Node> nodes_;
};

}  // namespace coopcast

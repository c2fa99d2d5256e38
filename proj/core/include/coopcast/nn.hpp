// Copyright (c) 2026 CoopCast Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "coopcast/rng.hpp"
#include "coopcast/tape.hpp"
#include "coopcast/tensor.hpp"

namespace coopcast {

// Named store for every learnable tensor: weights, biases, positional
// embeddings, padding tokens and attribute tables. Iteration order is
// lexicographic by name (std::map), which fixes checkpoint layout and
// optimizer update order.
struct ParamStore {
  std::map<std::string, Tensor> entries;
  std::uint64_t rng_seed = 0;

  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  bool has(const std::string& name) const { return entries.count(name) > 0; }

  // All registration goes through these so every entry has requires_grad set.
  void add_weight(Rng& rng, const std::string& name, std::int64_t fan_in, std::int64_t fan_out);
  void add_zeros(const std::string& name, std::vector<std::int64_t> shape);
  void add_ones(const std::string& name, std::vector<std::int64_t> shape);

  std::int64_t total_params() const;
};

using GradMap = std::map<std::string, Tensor>;

// Per-forward bridge between a ParamStore and a Tape. Leaves are created on
// first use; grads() collects d(loss)/d(param) for every bound name.
class ParamBinding {
 public:
  ParamBinding(Tape& tape, const ParamStore& store) : tape_(&tape), store_(&store) {}

  Var operator[](const std::string& name);
  GradMap grads() const;
  // Zero-filled grads for every store entry, with bound entries populated.
  GradMap full_grads() const;

 private:
  Tape* tape_;
  const ParamStore* store_;
  std::map<std::string, Var> bound_;
};

// ---------------------------------------------------------------------------
// Parameter registration helpers. The names written here are the names the
// forward helpers below read back; prefix conventions are dotted paths.

void register_linear(ParamStore& ps, Rng& rng, const std::string& prefix, std::int64_t in,
                     std::int64_t out);
// widths = {in, h1, ..., out}; ReLU between layers, linear output.
void register_mlp(ParamStore& ps, Rng& rng, const std::string& prefix,
                  const std::vector<std::int64_t>& widths);
void register_layer_norm(ParamStore& ps, const std::string& prefix, std::int64_t d);
void register_mha(ParamStore& ps, Rng& rng, const std::string& prefix, std::int64_t d);
// Pre-norm residual block: x + MHA(LN(x)) followed by z + FFN(LN(z)).
// FFN hidden width is 4*d. `cross` adds a separate key-side layer norm.
void register_attention_block(ParamStore& ps, Rng& rng, const std::string& prefix, std::int64_t d,
                              bool cross, bool layer_norm);

// ---------------------------------------------------------------------------
// Forward helpers.

Var linear(Tape& t, ParamBinding& p, const std::string& prefix, Var x);
Var mlp_forward(Tape& t, ParamBinding& p, const std::string& prefix, std::size_t n_layers, Var x);

// Boolean attention mask; mask[q][k] == true means "key visible to query".
struct AttnMask {
  std::int64_t tq = 0, tk = 0;
  std::vector<char> allow;  // tq*tk
  static AttnMask full(std::int64_t tq, std::int64_t tk);
  static AttnMask causal(std::int64_t t);
  bool at(std::int64_t q, std::int64_t k) const { return allow[q * tk + k] != 0; }
};

// Scaled dot-product multi-head attention with output projection. Masked
// entries get -1e30 logits, which underflow to exactly zero weight after the
// max-subtracted softmax. A fully masked query row throws NumericError;
// callers pre-filter empty neighborhoods.
Var mha_forward(Tape& t, ParamBinding& p, const std::string& prefix, Var query_seq, Var kv_seq,
                const AttnMask& mask, std::int64_t n_heads);

// Pre-norm self-attention encoder block (see register_attention_block).
Var attention_block(Tape& t, ParamBinding& p, const std::string& prefix, Var x,
                    const AttnMask& mask, std::int64_t n_heads, bool layer_norm);
// Cross-attention block: single- or multi-row query attending to `keys`.
Var cross_attention_block(Tape& t, ParamBinding& p, const std::string& prefix, Var x, Var keys,
                          std::int64_t n_heads, bool layer_norm);

}  // namespace coopcast

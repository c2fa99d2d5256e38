// Copyright (c) 2026 CoopCast Authors
// SPDX-License-Identifier: Apache-2.0
#include "coopcast/nn.hpp"

#include <cmath>

namespace coopcast {

Tensor& ParamStore::at(const std::string& name) {
  auto it = entries.find(name);
  if (it == entries.end()) throw NumericError("param store: missing tensor '" + name + "'");
  return it->second;
}

const Tensor& ParamStore::at(const std::string& name) const {
  auto it = entries.find(name);
  if (it == entries.end()) throw NumericError("param store: missing tensor '" + name + "'");
  return it->second;
}

void ParamStore::add_weight(Rng& rng, const std::string& name, std::int64_t fan_in,
                            std::int64_t fan_out) {
  if (entries.count(name)) throw NumericError("param store: duplicate tensor '" + name + "'");
  double lim = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor t = Tensor::zeros({fan_in, fan_out});
  for (double& v : t.data) v = rng.uniform(-lim, lim);
  t.requires_grad = true;
  entries.emplace(name, std::move(t));
}

void ParamStore::add_zeros(const std::string& name, std::vector<std::int64_t> shape) {
  if (entries.count(name)) throw NumericError("param store: duplicate tensor '" + name + "'");
  Tensor t = Tensor::zeros(std::move(shape));
  t.requires_grad = true;
  entries.emplace(name, std::move(t));
}

void ParamStore::add_ones(const std::string& name, std::vector<std::int64_t> shape) {
  if (entries.count(name)) throw NumericError("param store: duplicate tensor '" + name + "'");
  Tensor t = Tensor::full(std::move(shape), 1.0);
  t.requires_grad = true;
  entries.emplace(name, std::move(t));
}

std::int64_t ParamStore::total_params() const {
  std::int64_t n = 0;
  for (const auto& [_, t] : entries) n += t.size();
  return n;
}

Var ParamBinding::operator[](const std::string& name) {
  auto it = bound_.find(name);
  if (it != bound_.end()) return it->second;
  Var v = tape_->leaf(store_->at(name));
  bound_.emplace(name, v);
  return v;
}

GradMap ParamBinding::grads() const {
  GradMap g;
  for (const auto& [name, var] : bound_) g.emplace(name, tape_->grad_of(var));
  return g;
}

GradMap ParamBinding::full_grads() const {
  GradMap g;
  for (const auto& [name, t] : store_->entries) {
    auto it = bound_.find(name);
    if (it != bound_.end())
      g.emplace(name, tape_->grad_of(it->second));
    else
      g.emplace(name, Tensor::zeros(t.shape));
  }
  return g;
}

// ---------------------------------------------------------------------------

void register_linear(ParamStore& ps, Rng& rng, const std::string& prefix, std::int64_t in,
                     std::int64_t out) {
  ps.add_weight(rng, prefix + ".w", in, out);
  ps.add_zeros(prefix + ".b", {1, out});
}

void register_mlp(ParamStore& ps, Rng& rng, const std::string& prefix,
                  const std::vector<std::int64_t>& widths) {
  if (widths.size() < 2) throw NumericError("mlp: need at least input and output widths");
  for (std::size_t l = 0; l + 1 < widths.size(); ++l)
    register_linear(ps, rng, prefix + ".l" + std::to_string(l), widths[l], widths[l + 1]);
}

void register_layer_norm(ParamStore& ps, const std::string& prefix, std::int64_t d) {
  ps.add_ones(prefix + ".g", {1, d});
  ps.add_zeros(prefix + ".b", {1, d});
}

void register_mha(ParamStore& ps, Rng& rng, const std::string& prefix, std::int64_t d) {
  register_linear(ps, rng, prefix + ".q", d, d);
  register_linear(ps, rng, prefix + ".k", d, d);
  register_linear(ps, rng, prefix + ".v", d, d);
  register_linear(ps, rng, prefix + ".o", d, d);
}

void register_attention_block(ParamStore& ps, Rng& rng, const std::string& prefix, std::int64_t d,
                              bool cross, bool layer_norm) {
  register_mha(ps, rng, prefix + ".attn", d);
  if (layer_norm) {
    register_layer_norm(ps, prefix + ".ln1", d);
    register_layer_norm(ps, prefix + ".ln2", d);
    if (cross) register_layer_norm(ps, prefix + ".lnk", d);
  }
  register_linear(ps, rng, prefix + ".ffn.l0", d, 4 * d);
  register_linear(ps, rng, prefix + ".ffn.l1", 4 * d, d);
}

// ---------------------------------------------------------------------------

Var linear(Tape& t, ParamBinding& p, const std::string& prefix, Var x) {
  const Tensor& w = t.val(p[prefix + ".w"]);
  if (t.val(x).cols() != w.rows())
    throw NumericError("linear '" + prefix + "': input width " +
                       std::to_string(t.val(x).cols()) + " vs weight " + w.shape_str());
  return t.add(t.matmul(x, p[prefix + ".w"]), p[prefix + ".b"]);
}

Var mlp_forward(Tape& t, ParamBinding& p, const std::string& prefix, std::size_t n_layers, Var x) {
  Var h = x;
  for (std::size_t l = 0; l < n_layers; ++l) {
    h = linear(t, p, prefix + ".l" + std::to_string(l), h);
    if (l + 1 < n_layers) h = t.relu(h);
  }
  return h;
}

AttnMask AttnMask::full(std::int64_t tq, std::int64_t tk) {
  return AttnMask{tq, tk, std::vector<char>(static_cast<std::size_t>(tq * tk), 1)};
}

AttnMask AttnMask::causal(std::int64_t t) {
  AttnMask m{t, t, std::vector<char>(static_cast<std::size_t>(t * t), 0)};
  for (std::int64_t q = 0; q < t; ++q)
    for (std::int64_t k = 0; k <= q; ++k) m.allow[q * t + k] = 1;
  return m;
}

Var mha_forward(Tape& t, ParamBinding& p, const std::string& prefix, Var query_seq, Var kv_seq,
                const AttnMask& mask, std::int64_t n_heads) {
  const std::int64_t d = t.val(query_seq).cols();
  const std::int64_t tq = t.val(query_seq).rows();
  const std::int64_t tk = t.val(kv_seq).rows();
  if (t.val(kv_seq).cols() != d) throw NumericError("mha: query/key width mismatch");
  if (n_heads <= 0 || d % n_heads != 0)
    throw NumericError("mha: d=" + std::to_string(d) + " not divisible by n_heads=" +
                       std::to_string(n_heads));
  if (mask.tq != tq || mask.tk != tk) throw NumericError("mha: mask shape mismatch");
  for (std::int64_t q = 0; q < tq; ++q) {
    bool any = false;
    for (std::int64_t k = 0; k < tk; ++k) any = any || mask.at(q, k);
    if (!any)
      throw NumericError("mha: query row " + std::to_string(q) +
                         " is fully masked (empty attention)");
  }

  const std::int64_t dh = d / n_heads;
  Var q = linear(t, p, prefix + ".q", query_seq);
  Var k = linear(t, p, prefix + ".k", kv_seq);
  Var v = linear(t, p, prefix + ".v", kv_seq);

  // -1e30 logits vanish exactly under the max-subtracted softmax as long as
  // the row has one visible key, which the check above guarantees.
  Tensor bias = Tensor::zeros({tq, tk});
  for (std::int64_t i = 0; i < tq; ++i)
    for (std::int64_t j = 0; j < tk; ++j)
      if (!mask.at(i, j)) bias.data[i * tk + j] = -1e30;
  Var bias_node = t.constant(std::move(bias));

  std::vector<Var> heads;
  heads.reserve(static_cast<std::size_t>(n_heads));
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  for (std::int64_t h = 0; h < n_heads; ++h) {
    Var qh = t.slice_cols(q, h * dh, dh);
    Var kh = t.slice_cols(k, h * dh, dh);
    Var vh = t.slice_cols(v, h * dh, dh);
    Var scores = t.add(t.scale(t.matmul_nt(qh, kh), inv_sqrt), bias_node);
    Var attn = t.softmax_rows(scores);
    heads.push_back(t.matmul(attn, vh));
  }
  Var merged = t.concat_cols(heads);
  return linear(t, p, prefix + ".o", merged);
}

Var attention_block(Tape& t, ParamBinding& p, const std::string& prefix, Var x,
                    const AttnMask& mask, std::int64_t n_heads, bool layer_norm) {
  Var h = layer_norm ? t.layer_norm_rows(x, p[prefix + ".ln1.g"], p[prefix + ".ln1.b"]) : x;
  Var z = t.add(x, mha_forward(t, p, prefix + ".attn", h, h, mask, n_heads));
  Var f = layer_norm ? t.layer_norm_rows(z, p[prefix + ".ln2.g"], p[prefix + ".ln2.b"]) : z;
  Var ff = linear(t, p, prefix + ".ffn.l1", t.relu(linear(t, p, prefix + ".ffn.l0", f)));
  return t.add(z, ff);
}

Var cross_attention_block(Tape& t, ParamBinding& p, const std::string& prefix, Var x, Var keys,
                          std::int64_t n_heads, bool layer_norm) {
  Var q = layer_norm ? t.layer_norm_rows(x, p[prefix + ".ln1.g"], p[prefix + ".ln1.b"]) : x;
  Var kv = layer_norm ? t.layer_norm_rows(keys, p[prefix + ".lnk.g"], p[prefix + ".lnk.b"]) : keys;
  AttnMask mask = AttnMask::full(t.val(x).rows(), t.val(keys).rows());
  Var z = t.add(x, mha_forward(t, p, prefix + ".attn", q, kv, mask, n_heads));
  Var f = layer_norm ? t.layer_norm_rows(z, p[prefix + ".ln2.g"], p[prefix + ".ln2.b"]) : z;
  Var ff = linear(t, p, prefix + ".ffn.l1", t.relu(linear(t, p, prefix + ".ffn.l0", f)));
  return t.add(z, ff);
}

}  // namespace coopcast

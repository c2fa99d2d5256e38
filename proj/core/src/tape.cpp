// Copyright (c) 2026 CoopCast Authors
// SPDX-License-Identifier: Apache-2.0
#include "coopcast/tape.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace coopcast {

namespace {

// Accumulating matmul kernels. C is always += so backward passes can stack
// contributions from several consumers; forward callers hand in zeroed
// buffers.

// C{m,n} += A{m,k} B{k,n}
void mm_nn(const double* A, const double* B, double* C, std::int64_t m, std::int64_t k,
           std::int64_t n) {
  for (std::int64_t i = 0; i < m; ++i) {
    const double* ai = A + i * k;
    double* ci = C + i * n;
    for (std::int64_t p = 0; p < k; ++p) {
      double a = ai[p];
      const double* bp = B + p * n;
      for (std::int64_t j = 0; j < n; ++j) ci[j] += a * bp[j];
    }
  }
}

// C{m,n} += A{m,k} B{n,k}^T
void mm_nt(const double* A, const double* B, double* C, std::int64_t m, std::int64_t k,
           std::int64_t n) {
  for (std::int64_t i = 0; i < m; ++i) {
    const double* ai = A + i * k;
    double* ci = C + i * n;
    for (std::int64_t j = 0; j < n; ++j) {
      const double* bj = B + j * k;
      double s = 0.0;
      for (std::int64_t p = 0; p < k; ++p) s += ai[p] * bj[p];
      ci[j] += s;
    }
  }
}

// C{k,n} += A{m,k}^T D{m,n}
void mm_tn(const double* A, const double* D, double* C, std::int64_t m, std::int64_t k,
           std::int64_t n) {
  for (std::int64_t i = 0; i < m; ++i) {
    const double* ai = A + i * k;
    const double* di = D + i * n;
    for (std::int64_t p = 0; p < k; ++p) {
      double a = ai[p];
      if (a == 0.0) continue;
      double* cp = C + p * n;
      for (std::int64_t j = 0; j < n; ++j) cp[j] += a * di[j];
    }
  }
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Tensor softmax(const Tensor& x, int axis) {
  if (!x.all_finite()) throw NumericError("softmax: non-finite input");
  int rank = static_cast<int>(x.shape.size());
  if (axis < 0) axis += rank;
  if (axis < 0 || axis >= rank) throw NumericError("softmax: axis out of range");

  std::int64_t extent = x.shape[axis];
  std::int64_t inner = 1, outer = 1;
  for (int i = axis + 1; i < rank; ++i) inner *= x.shape[i];
  for (int i = 0; i < axis; ++i) outer *= x.shape[i];

  Tensor y = Tensor::zeros(x.shape);
  for (std::int64_t o = 0; o < outer; ++o) {
    for (std::int64_t in = 0; in < inner; ++in) {
      const std::int64_t base = o * extent * inner + in;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::int64_t e = 0; e < extent; ++e) mx = std::max(mx, x.data[base + e * inner]);
      double sum = 0.0;
      for (std::int64_t e = 0; e < extent; ++e) {
        double v = std::exp(x.data[base + e * inner] - mx);
        y.data[base + e * inner] = v;
        sum += v;
      }
      for (std::int64_t e = 0; e < extent; ++e) y.data[base + e * inner] /= sum;
    }
  }
  return y;
}

Var Tape::push(Tensor value, bool needs_grad, std::function<void(Tape&)> back) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = needs_grad;
  n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::int32_t>(nodes_.size() - 1)};
}

Var Tape::leaf(Tensor value) {
  bool rg = value.requires_grad;
  return push(std::move(value), rg, nullptr);
}

Var Tape::constant(Tensor value) {
  value.requires_grad = false;
  return push(std::move(value), false, nullptr);
}

Tensor Tape::grad_of(Var v) const {
  const Node& n = nodes_[v.id];
  if (n.grad_alloc) return n.grad;
  return Tensor::zeros(n.value.shape);
}

void Tape::ensure_grad(std::int32_t id) {
  Node& n = nodes_[id];
  if (!n.grad_alloc) {
    n.grad = Tensor::zeros(n.value.shape);
    n.grad_alloc = true;
  }
}

Tensor& Tape::grad_buf(std::int32_t id) {
  ensure_grad(id);
  return nodes_[id].grad;
}

void Tape::backward(Var loss) {
  if (!loss.valid() || loss.id >= static_cast<std::int32_t>(nodes_.size()))
    throw NumericError("backward: invalid loss node");
  if (nodes_[loss.id].value.size() != 1)
    throw NumericError("backward: loss must be a scalar, got shape " +
                       nodes_[loss.id].value.shape_str());
  ensure_grad(loss.id);
  nodes_[loss.id].grad.data[0] = 1.0;
  for (std::int32_t id = loss.id; id >= 0; --id) {
    Node& n = nodes_[id];
    if (n.grad_alloc && n.back) n.back(*this);
  }
}

// ---------------------------------------------------------------------------
// elementwise / shape ops

Var Tape::add(Var a, Var b) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  bool bcast = !ta.same_shape(tb);
  if (bcast && !(tb.rows() == 1 && tb.cols() == ta.cols()))
    throw NumericError("add: shape mismatch " + ta.shape_str() + " vs " + tb.shape_str());
  Tensor out = ta;
  out.requires_grad = false;
  std::int64_t r = ta.rows(), c = ta.cols();
  for (std::int64_t i = 0; i < r; ++i)
    for (std::int64_t j = 0; j < c; ++j) out.data[i * c + j] += tb.data[(bcast ? 0 : i) * c + j];
  bool ng = needs_grad(a) || needs_grad(b);
  if (!ng) return push(std::move(out), false, nullptr);
  std::int32_t ia = a.id, ib = b.id;
  Var v;
  v = push(std::move(out), true, [ia, ib, bcast, r, c, v_id = nodes_.size()](Tape& t) {
    const Tensor& g = t.nodes_[v_id].grad;
    if (t.nodes_[ia].needs_grad) {
      Tensor& da = t.grad_buf(ia);
      for (std::size_t i = 0; i < g.data.size(); ++i) da.data[i] += g.data[i];
    }
    if (t.nodes_[ib].needs_grad) {
      Tensor& db = t.grad_buf(ib);
      if (bcast) {
        for (std::int64_t i = 0; i < r; ++i)
          for (std::int64_t j = 0; j < c; ++j) db.data[j] += g.data[i * c + j];
      } else {
        for (std::size_t i = 0; i < g.data.size(); ++i) db.data[i] += g.data[i];
      }
    }
  });
  return v;
}

Var Tape::sub(Var a, Var b) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  bool bcast = !ta.same_shape(tb);
  if (bcast && !(tb.rows() == 1 && tb.cols() == ta.cols()))
    throw NumericError("sub: shape mismatch " + ta.shape_str() + " vs " + tb.shape_str());
  Tensor out = ta;
  out.requires_grad = false;
  std::int64_t r = ta.rows(), c = ta.cols();
  for (std::int64_t i = 0; i < r; ++i)
    for (std::int64_t j = 0; j < c; ++j) out.data[i * c + j] -= tb.data[(bcast ? 0 : i) * c + j];
  bool ng = needs_grad(a) || needs_grad(b);
  if (!ng) return push(std::move(out), false, nullptr);
  std::int32_t ia = a.id, ib = b.id;
  return push(std::move(out), true, [ia, ib, bcast, r, c, v_id = nodes_.size()](Tape& t) {
    const Tensor& g = t.nodes_[v_id].grad;
    if (t.nodes_[ia].needs_grad) {
      Tensor& da = t.grad_buf(ia);
      for (std::size_t i = 0; i < g.data.size(); ++i) da.data[i] += g.data[i];
    }
    if (t.nodes_[ib].needs_grad) {
      Tensor& db = t.grad_buf(ib);
      if (bcast) {
        for (std::int64_t i = 0; i < r; ++i)
          for (std::int64_t j = 0; j < c; ++j) db.data[j] -= g.data[i * c + j];
      } else {
        for (std::size_t i = 0; i < g.data.size(); ++i) db.data[i] -= g.data[i];
      }
    }
  });
}

Var Tape::mul(Var a, Var b) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  if (!ta.same_shape(tb))
    throw NumericError("mul: shape mismatch " + ta.shape_str() + " vs " + tb.shape_str());
  Tensor out = ta;
  out.requires_grad = false;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= tb.data[i];
  if (!(needs_grad(a) || needs_grad(b))) return push(std::move(out), false, nullptr);
  std::int32_t ia = a.id, ib = b.id;
  return push(std::move(out), true, [ia, ib, v_id = nodes_.size()](Tape& t) {
    const Tensor& g = t.nodes_[v_id].grad;
    const Tensor& va = t.nodes_[ia].value;
    const Tensor& vb = t.nodes_[ib].value;
    if (t.nodes_[ia].needs_grad) {
      Tensor& da = t.grad_buf(ia);
      for (std::size_t i = 0; i < g.data.size(); ++i) da.data[i] += g.data[i] * vb.data[i];
    }
    if (t.nodes_[ib].needs_grad) {
      Tensor& db = t.grad_buf(ib);
      for (std::size_t i = 0; i < g.data.size(); ++i) db.data[i] += g.data[i] * va.data[i];
    }
  });
}

Var Tape::div(Var a, Var b) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  if (!ta.same_shape(tb))
    throw NumericError("div: shape mismatch " + ta.shape_str() + " vs " + tb.shape_str());
  Tensor out = ta;
  out.requires_grad = false;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] /= tb.data[i];
  if (!(needs_grad(a) || needs_grad(b))) return push(std::move(out), false, nullptr);
  std::int32_t ia = a.id, ib = b.id;
  return push(std::move(out), true, [ia, ib, v_id = nodes_.size()](Tape& t) {
    const Tensor& g = t.nodes_[v_id].grad;
    const Tensor& y = t.nodes_[v_id].value;
    const Tensor& vb = t.nodes_[ib].value;
    if (t.nodes_[ia].needs_grad) {
      Tensor& da = t.grad_buf(ia);
      for (std::size_t i = 0; i < g.data.size(); ++i) da.data[i] += g.data[i] / vb.data[i];
    }
    if (t.nodes_[ib].needs_grad) {
      Tensor& db = t.grad_buf(ib);
      for (std::size_t i = 0; i < g.data.size(); ++i)
        db.data[i] -= g.data[i] * y.data[i] / vb.data[i];
    }
  });
}

Var Tape::scale(Var a, double k) {
  Tensor out = val(a);
  out.requires_grad = false;
  for (double& v : out.data) v *= k;
  if (!needs_grad(a)) return push(std::move(out), false, nullptr);
  std::int32_t ia = a.id;
  return push(std::move(out), true, [ia, k, v_id = nodes_.size()](Tape& t) {
    const Tensor& g = t.nodes_[v_id].grad;
    Tensor& da = t.grad_buf(ia);
    for (std::size_t i = 0; i < g.data.size(); ++i) da.data[i] += k * g.data[i];
  });
}

Var Tape::add_scalar(Var a, double k) {
  Tensor out = val(a);
  out.requires_grad = false;
  for (double& v : out.data) v += k;
  if (!needs_grad(a)) return push(std::move(out), false, nullptr);
  std::int32_t ia = a.id;
  return push(std::move(out), true, [ia, v_id = nodes_.size()](Tape& t) {
    const Tensor& g = t.nodes_[v_id].grad;
    Tensor& da = t.grad_buf(ia);
    for (std::size_t i = 0; i < g.data.size(); ++i) da.data[i] += g.data[i];
  });
}

Var Tape::relu(Var a) {
  Tensor out = val(a);
  out.requires_grad = false;
  for (double& v : out.data) v = v > 0.0 ? v : 0.0;
  if (!needs_grad(a)) return push(std::move(out), false, nullptr);
  std::int32_t ia = a.id;
  return push(std::move(out), true, [ia, v_id = nodes_.size()](Tape& t) {
    const Tensor& g = t.nodes_[v_id].grad;
    const Tensor& x = t.nodes_[ia].value;
    Tensor& da = t.grad_buf(ia);
    for (std::size_t i = 0; i < g.data.size(); ++i)
      if (x.data[i] > 0.0) da.data[i] += g.data[i];
  });
}

Var Tape::abs(Var a) {
  Tensor out = val(a);
  out.requires_grad = false;
  for (double& v : out.data) v = std::fabs(v);
  if (!needs_grad(a)) return push(std::move(out), false, nullptr);
  std::int32_t ia = a.id;
  return push(std::move(out), true, [ia, v_id = nodes_.size()](Tape& t) {
    const Tensor& g = t.nodes_[v_id].grad;
    const Tensor& x = t.nodes_[ia].value;
    Tensor& da = t.grad_buf(ia);
    for (std::size_t i = 0; i < g.data.size(); ++i) {
      double s = x.data[i] > 0.0 ? 1.0 : (x.data[i] < 0.0 ? -1.0 : 0.0);
      da.data[i] += s * g.data[i];
    }
  });
}

Var Tape::log_floor(Var a, double floor) {
  Tensor out = val(a);
  out.requires_grad = false;
  for (double& v : out.data) v = std::log(std::max(v, floor));
  if (!needs_grad(a)) return push(std::move(out), false, nullptr);
  std::int32_t ia = a.id;
  return push(std::move(out), true, [ia, floor, v_id = nodes_.size()](Tape& t) {
    const Tensor& g = t.nodes_[v_id].grad;
    const Tensor& x = t.nodes_[ia].value;
    Tensor& da = t.grad_buf(ia);
    for (std::size_t i = 0; i < g.data.size(); ++i)
      if (x.data[i] > floor) da.data[i] += g.data[i] / x.data[i];
  });
}

Var Tape::softplus(Var a) {
  Tensor out = val(a);
  out.requires_grad = false;
  for (double& v : out.data) v = v > 0.0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v));
  if (!needs_grad(a)) return push(std::move(out), false, nullptr);
  std::int32_t ia = a.id;
  return push(std::move(out), true, [ia, v_id = nodes_.size()](Tape& t) {
    const Tensor& g = t.nodes_[v_id].grad;
    const Tensor& x = t.nodes_[ia].value;
    Tensor& da = t.grad_buf(ia);
    for (std::size_t i = 0; i < g.data.size(); ++i) da.data[i] += sigmoid(x.data[i]) * g.data[i];
  });
}

Var Tape::softmax_rows(Var a) {
  const Tensor& x = val(a);
  Tensor out = softmax(x, static_cast<int>(x.shape.size()) - 1);
  if (!needs_grad(a)) return push(std::move(out), false, nullptr);
  std::int32_t ia = a.id;
  std::int64_t r = x.rows(), c = x.cols();
  return push(std::move(out), true, [ia, r, c, v_id = nodes_.size()](Tape& t) {
    const Tensor& g = t.nodes_[v_id].grad;
    const Tensor& y = t.nodes_[v_id].value;
    Tensor& da = t.grad_buf(ia);
    for (std::int64_t i = 0; i < r; ++i) {
      double dot = 0.0;
      for (std::int64_t j = 0; j < c; ++j) dot += g.data[i * c + j] * y.data[i * c + j];
      for (std::int64_t j = 0; j < c; ++j)
        da.data[i * c + j] += y.data[i * c + j] * (g.data[i * c + j] - dot);
    }
  });
}

Var Tape::layer_norm_rows(Var x, Var gain, Var bias) {
  constexpr double kEps = 1e-5;
  const Tensor& tx = val(x);
  const Tensor& tg = val(gain);
  const Tensor& tb = val(bias);
  std::int64_t r = tx.rows(), c = tx.cols();
  if (tg.size() != c || tb.size() != c)
    throw NumericError("layer_norm: gain/bias must have " + std::to_string(c) + " entries");
  Tensor out = Tensor::zeros(tx.shape);
  for (std::int64_t i = 0; i < r; ++i) {
    double mean = 0.0;
    for (std::int64_t j = 0; j < c; ++j) mean += tx.data[i * c + j];
    mean /= static_cast<double>(c);
    double var = 0.0;
    for (std::int64_t j = 0; j < c; ++j) {
      double d = tx.data[i * c + j] - mean;
      var += d * d;
    }
    var /= static_cast<double>(c);
    double inv = 1.0 / std::sqrt(var + kEps);
    for (std::int64_t j = 0; j < c; ++j)
      out.data[i * c + j] = (tx.data[i * c + j] - mean) * inv * tg.data[j] + tb.data[j];
  }
  bool ng = needs_grad(x) || needs_grad(gain) || needs_grad(bias);
  if (!ng) return push(std::move(out), false, nullptr);
  std::int32_t ix = x.id, ig = gain.id, ib = bias.id;
  return push(std::move(out), true, [ix, ig, ib, r, c, v_id = nodes_.size()](Tape& t) {
    const Tensor& g = t.nodes_[v_id].grad;
    const Tensor& tx = t.nodes_[ix].value;
    const Tensor& tg = t.nodes_[ig].value;
    std::vector<double> xhat(static_cast<std::size_t>(c));
    for (std::int64_t i = 0; i < r; ++i) {
      double mean = 0.0;
      for (std::int64_t j = 0; j < c; ++j) mean += tx.data[i * c + j];
      mean /= static_cast<double>(c);
      double var = 0.0;
      for (std::int64_t j = 0; j < c; ++j) {
        double d = tx.data[i * c + j] - mean;
        var += d * d;
      }
      var /= static_cast<double>(c);
      double inv = 1.0 / std::sqrt(var + kEps);
      for (std::int64_t j = 0; j < c; ++j) xhat[j] = (tx.data[i * c + j] - mean) * inv;

      if (t.nodes_[ig].needs_grad) {
        Tensor& dg = t.grad_buf(ig);
        for (std::int64_t j = 0; j < c; ++j) dg.data[j] += g.data[i * c + j] * xhat[j];
      }
      if (t.nodes_[ib].needs_grad) {
        Tensor& db = t.grad_buf(ib);
        for (std::int64_t j = 0; j < c; ++j) db.data[j] += g.data[i * c + j];
      }
      if (t.nodes_[ix].needs_grad) {
        Tensor& dx = t.grad_buf(ix);
        double m1 = 0.0, m2 = 0.0;
        for (std::int64_t j = 0; j < c; ++j) {
          double dh = g.data[i * c + j] * tg.data[j];
          m1 += dh;
          m2 += dh * xhat[j];
        }
        m1 /= static_cast<double>(c);
        m2 /= static_cast<double>(c);
        for (std::int64_t j = 0; j < c; ++j) {
          double dh = g.data[i * c + j] * tg.data[j];
          dx.data[i * c + j] += inv * (dh - m1 - xhat[j] * m2);
        }
      }
    }
  });
}

// ---------------------------------------------------------------------------
// linear algebra

Var Tape::matmul(Var a, Var b) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  std::int64_t m = ta.rows(), k = ta.cols(), k2 = tb.rows(), n = tb.cols();
  if (k != k2)
    throw NumericError("matmul: inner dims " + ta.shape_str() + " x " + tb.shape_str());
  Tensor out = Tensor::zeros({m, n});
  mm_nn(ta.data.data(), tb.data.data(), out.data.data(), m, k, n);
  if (!(needs_grad(a) || needs_grad(b))) return push(std::move(out), false, nullptr);
  std::int32_t ia = a.id, ib = b.id;
  return push(std::move(out), true, [ia, ib, m, k, n, v_id = nodes_.size()](Tape& t) {
    const Tensor& g = t.nodes_[v_id].grad;
    const Tensor& va = t.nodes_[ia].value;
    const Tensor& vb = t.nodes_[ib].value;
    if (t.nodes_[ia].needs_grad)
      mm_nt(g.data.data(), vb.data.data(), t.grad_buf(ia).data.data(), m, n, k);
    if (t.nodes_[ib].needs_grad)
      mm_tn(va.data.data(), g.data.data(), t.grad_buf(ib).data.data(), m, k, n);
  });
}

Var Tape::matmul_nt(Var a, Var b) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  std::int64_t m = ta.rows(), k = ta.cols(), n = tb.rows();
  if (k != tb.cols())
    throw NumericError("matmul_nt: inner dims " + ta.shape_str() + " x " + tb.shape_str() + "^T");
  Tensor out = Tensor::zeros({m, n});
  mm_nt(ta.data.data(), tb.data.data(), out.data.data(), m, k, n);
  if (!(needs_grad(a) || needs_grad(b))) return push(std::move(out), false, nullptr);
  std::int32_t ia = a.id, ib = b.id;
  return push(std::move(out), true, [ia, ib, m, k, n, v_id = nodes_.size()](Tape& t) {
    const Tensor& g = t.nodes_[v_id].grad;
    const Tensor& va = t.nodes_[ia].value;
    const Tensor& vb = t.nodes_[ib].value;
    if (t.nodes_[ia].needs_grad)
      mm_nn(g.data.data(), vb.data.data(), t.grad_buf(ia).data.data(), m, n, k);
    if (t.nodes_[ib].needs_grad)
      mm_tn(g.data.data(), va.data.data(), t.grad_buf(ib).data.data(), m, n, k);
  });
}

// ---------------------------------------------------------------------------
// structural

Var Tape::concat_cols(std::span<const Var> xs) {
  if (xs.empty()) throw NumericError("concat_cols: empty input");
  std::int64_t r = val(xs[0]).rows(), ctot = 0;
  for (Var v : xs) {
    if (val(v).rows() != r) throw NumericError("concat_cols: row mismatch");
    ctot += val(v).cols();
  }
  Tensor out = Tensor::zeros({r, ctot});
  std::int64_t off = 0;
  bool ng = false;
  std::vector<std::int32_t> ids;
  std::vector<std::int64_t> offs;
  std::vector<std::int64_t> widths;
  for (Var v : xs) {
    const Tensor& tv = val(v);
    std::int64_t c = tv.cols();
    for (std::int64_t i = 0; i < r; ++i)
      for (std::int64_t j = 0; j < c; ++j) out.data[i * ctot + off + j] = tv.data[i * c + j];
    ids.push_back(v.id);
    offs.push_back(off);
    widths.push_back(c);
    off += c;
    ng = ng || needs_grad(v);
  }
  if (!ng) return push(std::move(out), false, nullptr);
  return push(std::move(out), true,
              [ids, offs, widths, r, ctot, v_id = nodes_.size()](Tape& t) {
                const Tensor& g = t.nodes_[v_id].grad;
                for (std::size_t s = 0; s < ids.size(); ++s) {
                  if (!t.nodes_[ids[s]].needs_grad) continue;
                  Tensor& d = t.grad_buf(ids[s]);
                  std::int64_t c = widths[s], off = offs[s];
                  for (std::int64_t i = 0; i < r; ++i)
                    for (std::int64_t j = 0; j < c; ++j)
                      d.data[i * c + j] += g.data[i * ctot + off + j];
                }
              });
}

Var Tape::concat_rows(std::span<const Var> xs) {
  if (xs.empty()) throw NumericError("concat_rows: empty input");
  std::int64_t c = val(xs[0]).cols(), rtot = 0;
  for (Var v : xs) {
    if (val(v).cols() != c) throw NumericError("concat_rows: col mismatch");
    rtot += val(v).rows();
  }
  Tensor out = Tensor::zeros({rtot, c});
  std::int64_t off = 0;
  bool ng = false;
  std::vector<std::int32_t> ids;
  std::vector<std::int64_t> offs, heights;
  for (Var v : xs) {
    const Tensor& tv = val(v);
    std::copy(tv.data.begin(), tv.data.end(), out.data.begin() + off * c);
    ids.push_back(v.id);
    offs.push_back(off);
    heights.push_back(tv.rows());
    off += tv.rows();
    ng = ng || needs_grad(v);
  }
  if (!ng) return push(std::move(out), false, nullptr);
  return push(std::move(out), true, [ids, offs, heights, c, v_id = nodes_.size()](Tape& t) {
    const Tensor& g = t.nodes_[v_id].grad;
    for (std::size_t s = 0; s < ids.size(); ++s) {
      if (!t.nodes_[ids[s]].needs_grad) continue;
      Tensor& d = t.grad_buf(ids[s]);
      std::int64_t n = heights[s] * c;
      for (std::int64_t i = 0; i < n; ++i) d.data[i] += g.data[offs[s] * c + i];
    }
  });
}

Var Tape::slice_cols(Var a, std::int64_t c0, std::int64_t len) {
  const Tensor& ta = val(a);
  std::int64_t r = ta.rows(), c = ta.cols();
  if (c0 < 0 || len < 0 || c0 + len > c) throw NumericError("slice_cols: out of range");
  Tensor out = Tensor::zeros({r, len});
  for (std::int64_t i = 0; i < r; ++i)
    for (std::int64_t j = 0; j < len; ++j) out.data[i * len + j] = ta.data[i * c + c0 + j];
  if (!needs_grad(a)) return push(std::move(out), false, nullptr);
  std::int32_t ia = a.id;
  return push(std::move(out), true, [ia, c0, len, r, c, v_id = nodes_.size()](Tape& t) {
    const Tensor& g = t.nodes_[v_id].grad;
    Tensor& d = t.grad_buf(ia);
    for (std::int64_t i = 0; i < r; ++i)
      for (std::int64_t j = 0; j < len; ++j) d.data[i * c + c0 + j] += g.data[i * len + j];
  });
}

Var Tape::slice_rows(Var a, std::int64_t r0, std::int64_t len) {
  const Tensor& ta = val(a);
  std::int64_t r = ta.rows(), c = ta.cols();
  if (r0 < 0 || len < 0 || r0 + len > r) throw NumericError("slice_rows: out of range");
  Tensor out = Tensor::zeros({len, c});
  std::copy(ta.data.begin() + r0 * c, ta.data.begin() + (r0 + len) * c, out.data.begin());
  if (!needs_grad(a)) return push(std::move(out), false, nullptr);
  std::int32_t ia = a.id;
  return push(std::move(out), true, [ia, r0, len, c, v_id = nodes_.size()](Tape& t) {
    const Tensor& g = t.nodes_[v_id].grad;
    Tensor& d = t.grad_buf(ia);
    for (std::int64_t i = 0; i < len * c; ++i) d.data[r0 * c + i] += g.data[i];
  });
}

Var Tape::scatter_rows(Var a, std::vector<std::int64_t> row_map, std::int64_t out_rows) {
  const Tensor& ta = val(a);
  std::int64_t r = ta.rows(), c = ta.cols();
  if (static_cast<std::int64_t>(row_map.size()) != r)
    throw NumericError("scatter_rows: map size mismatch");
  Tensor out = Tensor::zeros({out_rows, c});
  for (std::int64_t i = 0; i < r; ++i) {
    std::int64_t dst = row_map[i];
    if (dst < 0 || dst >= out_rows) throw NumericError("scatter_rows: destination out of range");
    for (std::int64_t j = 0; j < c; ++j) out.data[dst * c + j] += ta.data[i * c + j];
  }
  if (!needs_grad(a)) return push(std::move(out), false, nullptr);
  std::int32_t ia = a.id;
  return push(std::move(out), true,
              [ia, row_map = std::move(row_map), r, c, v_id = nodes_.size()](Tape& t) {
                const Tensor& g = t.nodes_[v_id].grad;
                Tensor& d = t.grad_buf(ia);
                for (std::int64_t i = 0; i < r; ++i)
                  for (std::int64_t j = 0; j < c; ++j)
                    d.data[i * c + j] += g.data[row_map[i] * c + j];
              });
}

Var Tape::mean_rows(Var a) {
  const Tensor& ta = val(a);
  std::int64_t r = ta.rows(), c = ta.cols();
  if (r == 0) throw NumericError("mean_rows: empty input");
  Tensor out = Tensor::zeros({1, c});
  for (std::int64_t i = 0; i < r; ++i)
    for (std::int64_t j = 0; j < c; ++j) out.data[j] += ta.data[i * c + j];
  for (std::int64_t j = 0; j < c; ++j) out.data[j] /= static_cast<double>(r);
  if (!needs_grad(a)) return push(std::move(out), false, nullptr);
  std::int32_t ia = a.id;
  return push(std::move(out), true, [ia, r, c, v_id = nodes_.size()](Tape& t) {
    const Tensor& g = t.nodes_[v_id].grad;
    Tensor& d = t.grad_buf(ia);
    double inv = 1.0 / static_cast<double>(r);
    for (std::int64_t i = 0; i < r; ++i)
      for (std::int64_t j = 0; j < c; ++j) d.data[i * c + j] += g.data[j] * inv;
  });
}

Var Tape::sum_all(Var a) {
  const Tensor& ta = val(a);
  double s = 0.0;
  for (double v : ta.data) s += v;
  Tensor out = Tensor::scalar(s);
  if (!needs_grad(a)) return push(std::move(out), false, nullptr);
  std::int32_t ia = a.id;
  return push(std::move(out), true, [ia, v_id = nodes_.size()](Tape& t) {
    double g = t.nodes_[v_id].grad.data[0];
    Tensor& d = t.grad_buf(ia);
    for (double& v : d.data) v += g;
  });
}

Var Tape::bce_logits(Var a, std::vector<double> targets) {
  const Tensor& ta = val(a);
  if (targets.size() != ta.data.size()) throw NumericError("bce_logits: target size mismatch");
  Tensor out = Tensor::zeros(ta.shape);
  for (std::size_t i = 0; i < ta.data.size(); ++i) {
    double x = ta.data[i], z = targets[i];
    out.data[i] = std::max(x, 0.0) - x * z + std::log1p(std::exp(-std::fabs(x)));
  }
  if (!needs_grad(a)) return push(std::move(out), false, nullptr);
  std::int32_t ia = a.id;
  return push(std::move(out), true,
              [ia, targets = std::move(targets), v_id = nodes_.size()](Tape& t) {
                const Tensor& g = t.nodes_[v_id].grad;
                const Tensor& x = t.nodes_[ia].value;
                Tensor& d = t.grad_buf(ia);
                for (std::size_t i = 0; i < g.data.size(); ++i)
                  d.data[i] += (sigmoid(x.data[i]) - targets[i]) * g.data[i];
              });
}

}  // namespace coopcast

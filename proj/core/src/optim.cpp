// Copyright (c) 2026 CoopCast Authors
// SPDX-License-Identifier: Apache-2.0
#include "coopcast/optim.hpp"

#include <cmath>

namespace coopcast {

void adamw_step(ParamStore& params, const GradMap& grads, AdamWState& state,
                const AdamWConfig& cfg) {
  state.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (auto& [name, theta] : params.entries) {
    auto git = grads.find(name);
    if (git == grads.end()) throw NumericError("adamw: missing gradient for '" + name + "'");
    const Tensor& g = git->second;
    if (!g.same_shape(theta)) throw NumericError("adamw: gradient shape mismatch for '" + name + "'");
    if (!g.all_finite()) throw NumericError("adamw: non-finite gradient in '" + name + "'");

    auto mit = state.m.find(name);
    if (mit == state.m.end()) mit = state.m.emplace(name, Tensor::zeros(theta.shape)).first;
    auto vit = state.v.find(name);
    if (vit == state.v.end()) vit = state.v.emplace(name, Tensor::zeros(theta.shape)).first;
    Tensor& m = mit->second;
    Tensor& v = vit->second;

    for (std::size_t i = 0; i < theta.data.size(); ++i) {
      double gi = g.data[i];
      m.data[i] = cfg.beta1 * m.data[i] + (1.0 - cfg.beta1) * gi;
      v.data[i] = cfg.beta2 * v.data[i] + (1.0 - cfg.beta2) * gi * gi;
      double mhat = m.data[i] / bc1;
      double vhat = v.data[i] / bc2;
      theta.data[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
      theta.data[i] -= cfg.lr * cfg.weight_decay * theta.data[i];
    }
  }
}

double cosine_lr(double lr0, std::int64_t t, std::int64_t t_max) {
  if (t_max <= 0) return lr0;
  if (t < 0) t = 0;
  if (t > t_max) t = t_max;
  return lr0 * 0.5 * (1.0 + std::cos(3.14159265358979323846 * static_cast<double>(t) /
                                     static_cast<double>(t_max)));
}

double clip_global_norm(GradMap& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& [_, g] : grads)
    for (double v : g.data) sq += v * v;
  double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    double s = max_norm / norm;
    for (auto& [_, g] : grads)
      for (double& v : g.data) v *= s;
  }
  return norm;
}

}  // namespace coopcast

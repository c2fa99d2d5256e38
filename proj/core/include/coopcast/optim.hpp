// Copyright (c) 2026 CoopCast Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>

#include "coopcast/nn.hpp"

namespace coopcast {

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
};

struct AdamWState {
  GradMap m;  // first moments, lazily sized to params
  GradMap v;  // second moments
  std::int64_t step = 0;
};

// One decoupled-weight-decay Adam step:
//   theta <- theta - lr * m_hat / (sqrt(v_hat) + eps) - lr * wd * theta
// The decay term is independent of the adaptive step. Throws NumericError
// naming the tensor if a gradient is non-finite.
void adamw_step(ParamStore& params, const GradMap& grads, AdamWState& state,
                const AdamWConfig& cfg);

// Cosine annealing from lr0 at t=0 to 0 at t=t_max.
double cosine_lr(double lr0, std::int64_t t, std::int64_t t_max);

// Scales grads in place so their global L2 norm is at most max_norm.
// Returns the pre-clip norm.
double clip_global_norm(GradMap& grads, double max_norm);

}  // namespace coopcast

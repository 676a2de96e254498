#pragma once

#include <span>

#include "codesum/numerics/parameter.hpp"

namespace codesum {

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// One bias-corrected Adam update on every parameter, then clears the
/// gradients. Throws ContractError naming the first parameter without a
/// gradient, before touching any parameter.
void adam_step(std::span<Parameter> params, const AdamConfig& config);

/// Global L2 norm over all present gradients.
double global_grad_norm(std::span<const Parameter> params);

/// Scales every gradient so the global norm is at most max_norm. Returns the
/// norm measured before scaling.
double clip_grad_norm(std::span<Parameter> params, double max_norm);

} // namespace codesum

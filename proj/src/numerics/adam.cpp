#include "codesum/numerics/adam.hpp"

#include <cmath>

#include "codesum/errors.hpp"

namespace codesum {

namespace {
double maybe_round(double v, Precision p) {
    return p == Precision::standard32 ? static_cast<double>(static_cast<float>(v)) : v;
}
} // namespace

void adam_step(std::span<Parameter> params, const AdamConfig& config) {
    for (const Parameter& p : params) {
        if (!p.value.has_grad()) {
            throw ContractError("adam_step: parameter '" + p.name + "' has no gradient");
        }
    }
    for (Parameter& p : params) {
        ++p.step_count;
        const auto t = static_cast<double>(p.step_count);
        const double correction1 = 1.0 - std::pow(config.beta1, t);
        const double correction2 = 1.0 - std::pow(config.beta2, t);
        const Precision prec = p.value.precision();
        auto theta = p.value.mutable_data();
        const auto g = p.value.grad();
        for (std::size_t i = 0; i < theta.size(); ++i) {
            p.adam_m[i] = maybe_round(config.beta1 * p.adam_m[i] + (1.0 - config.beta1) * g[i], prec);
            p.adam_v[i] = maybe_round(config.beta2 * p.adam_v[i] + (1.0 - config.beta2) * g[i] * g[i], prec);
            const double m_hat = p.adam_m[i] / correction1;
            const double v_hat = p.adam_v[i] / correction2;
            theta[i] = maybe_round(theta[i] - config.lr * m_hat / (std::sqrt(v_hat) + config.eps), prec);
        }
        p.value.clear_grad();
    }
}

double global_grad_norm(std::span<const Parameter> params) {
    double sq = 0.0;
    for (const Parameter& p : params) {
        for (double g : p.value.grad()) {
            sq += g * g;
        }
    }
    return std::sqrt(sq);
}

double clip_grad_norm(std::span<Parameter> params, double max_norm) {
    const double norm = global_grad_norm(params);
    if (norm > max_norm && norm > 0.0) {
        const double scale = max_norm / norm;
        for (Parameter& p : params) {
            if (p.value.has_grad()) {
                for (double& g : p.value.mutable_grad()) {
                    g *= scale;
                }
            }
        }
    }
    return norm;
}

} // namespace codesum

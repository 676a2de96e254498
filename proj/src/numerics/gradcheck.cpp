#include "codesum/numerics/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace codesum {

double GradCheckReport::max_relative_error() const {
    double worst = 0.0;
    for (const GradCheckEntry& e : entries) {
        worst = std::max(worst, e.relative_error);
    }
    return worst;
}

GradCheckReport check_gradients(const std::function<Tensor()>& loss, std::span<Parameter> params, double step) {
    for (Parameter& p : params) {
        p.value.clear_grad();
    }
    backward(loss());

    GradCheckReport report;
    for (Parameter& p : params) {
        std::vector<double> analytic(p.value.size(), 0.0);
        if (p.value.has_grad()) {
            const auto g = p.value.grad();
            std::copy(g.begin(), g.end(), analytic.begin());
        }
        auto theta = p.value.mutable_data();
        double diff_sq = 0.0;
        double a_sq = 0.0;
        double n_sq = 0.0;
        NoGradGuard no_grad;
        for (std::size_t i = 0; i < theta.size(); ++i) {
            const double saved = theta[i];
            theta[i] = saved + step;
            const double up = loss().item();
            theta[i] = saved - step;
            const double down = loss().item();
            theta[i] = saved;
            const double numeric = (up - down) / (2.0 * step);
            diff_sq += (numeric - analytic[i]) * (numeric - analytic[i]);
            a_sq += analytic[i] * analytic[i];
            n_sq += numeric * numeric;
        }
        GradCheckEntry entry{p.name, 0.0, std::sqrt(a_sq), std::sqrt(n_sq)};
        const double scale = std::max(entry.analytic_norm, entry.numeric_norm);
        entry.relative_error = scale < 1e-10 ? 0.0 : std::sqrt(diff_sq) / scale;
        report.entries.push_back(entry);
        p.value.clear_grad();
    }
    return report;
}

} // namespace codesum

#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "codesum/numerics/parameter.hpp"

namespace codesum {

struct GradCheckEntry {
    std::string name;
    double relative_error = 0.0;
    double analytic_norm = 0.0;
    double numeric_norm = 0.0;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;
    double max_relative_error() const;
    bool passed(double tolerance) const { return max_relative_error() < tolerance; }
};

/// Compares backward() against central differences, parameter by parameter.
///
/// `loss` must rebuild the graph from the current parameter values on every
/// call and be deterministic. Relative error of a parameter is
/// ||analytic - numeric|| / max(||analytic||, ||numeric||), and 0 when both
/// norms are below 1e-10. Meant for verify64 parameters.
GradCheckReport check_gradients(const std::function<Tensor()>& loss, std::span<Parameter> params, double step = 1e-3);

} // namespace codesum

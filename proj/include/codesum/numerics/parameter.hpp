#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "codesum/numerics/rng.hpp"
#include "codesum/numerics/tensor.hpp"

namespace codesum {

/// A trainable tensor with its Adam moments.
struct Parameter {
    std::string name;
    Tensor value;
    std::vector<double> adam_m;
    std::vector<double> adam_v;
    std::int64_t step_count = 0;
};

enum class Init {
    zeros,
    ones,
    glorot_uniform, ///< U(-a, a), a = sqrt(6 / (fan_in + fan_out)) over the last two axes
    scaled_normal,  ///< N(0, scale^2); scale given separately
};

/// Ordered, name-addressable set of parameters. Initial values are drawn from
/// a stream split off the store seed by parameter name, so a parameter's
/// initial value does not depend on creation order.
class ParameterStore {
  public:
    explicit ParameterStore(std::uint64_t seed = 0, Precision precision = Precision::standard32);

    Tensor create(const std::string& name, Shape shape, Init init, double scale = 1.0);

    std::vector<Parameter>& all() { return params_; }
    const std::vector<Parameter>& all() const { return params_; }
    Parameter& get(const std::string& name);
    const Parameter& get(const std::string& name) const;
    bool contains(const std::string& name) const;

    std::size_t count_scalars() const;
    Precision precision() const { return precision_; }
    void clear_grads();

    /// FNV-1a hash over names, shapes and values.
    std::uint64_t fingerprint() const;

  private:
    std::uint64_t seed_;
    Precision precision_;
    std::vector<Parameter> params_;
};

} // namespace codesum

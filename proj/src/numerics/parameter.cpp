#include "codesum/numerics/parameter.hpp"

#include <cmath>
#include <cstring>

#include "codesum/errors.hpp"

namespace codesum {

ParameterStore::ParameterStore(std::uint64_t seed, Precision precision) : seed_(seed), precision_(precision) {}

Tensor ParameterStore::create(const std::string& name, Shape shape, Init init, double scale) {
    if (contains(name)) {
        throw ContractError("duplicate parameter name '" + name + "'");
    }
    const std::size_t n = numel(shape);
    std::vector<double> values(n, 0.0);
    Rng rng = Rng(seed_).split(name);
    switch (init) {
    case Init::zeros:
        break;
    case Init::ones:
        std::fill(values.begin(), values.end(), 1.0);
        break;
    case Init::glorot_uniform: {
        const double fan_out = static_cast<double>(shape.back());
        const double fan_in = shape.size() >= 2 ? static_cast<double>(shape[shape.size() - 2]) : fan_out;
        const double bound = std::sqrt(6.0 / (fan_in + fan_out));
        for (double& v : values) {
            v = (2.0 * rng.uniform() - 1.0) * bound;
        }
        break;
    }
    case Init::scaled_normal:
        for (double& v : values) {
            v = rng.normal() * scale;
        }
        break;
    }
    Tensor t = Tensor::from_data(std::move(shape), std::move(values), precision_, true);
    params_.push_back(Parameter{name, t, std::vector<double>(n, 0.0), std::vector<double>(n, 0.0), 0});
    return t;
}

Parameter& ParameterStore::get(const std::string& name) {
    for (Parameter& p : params_) {
        if (p.name == name) {
            return p;
        }
    }
    throw ContractError("unknown parameter '" + name + "'");
}

const Parameter& ParameterStore::get(const std::string& name) const {
    return const_cast<ParameterStore*>(this)->get(name);
}

bool ParameterStore::contains(const std::string& name) const {
    for (const Parameter& p : params_) {
        if (p.name == name) {
            return true;
        }
    }
    return false;
}

std::size_t ParameterStore::count_scalars() const {
    std::size_t n = 0;
    for (const Parameter& p : params_) {
        n += p.value.size();
    }
    return n;
}

void ParameterStore::clear_grads() {
    for (Parameter& p : params_) {
        p.value.clear_grad();
    }
}

std::uint64_t ParameterStore::fingerprint() const {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    auto feed = [&h](const void* bytes, std::size_t len) {
        const auto* c = static_cast<const unsigned char*>(bytes);
        for (std::size_t i = 0; i < len; ++i) {
            h ^= c[i];
            h *= 0x100000001B3ULL;
        }
    };
    for (const Parameter& p : params_) {
        feed(p.name.data(), p.name.size());
        for (std::size_t e : p.value.shape()) {
            feed(&e, sizeof e);
        }
        const auto d = p.value.data();
        feed(d.data(), d.size() * sizeof(double));
    }
    return h;
}

} // namespace codesum

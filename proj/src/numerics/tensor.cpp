#include "codesum/numerics/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "codesum/errors.hpp"

namespace codesum {

struct Tensor::Node {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad; // empty when absent
    bool requires_grad = false;
    Precision precision = Precision::verify64;
    std::vector<Tensor> inputs;
    BackwardFn backward;
};

namespace {

thread_local bool t_grad_enabled = true;

void check_shape(const Shape& shape) {
    for (std::size_t extent : shape) {
        if (extent == 0) {
            throw DimensionError("tensor extents must be positive, got " + shape_to_string(shape));
        }
    }
}

void round_to_binary32(std::vector<double>& values) {
    for (double& v : values) {
        v = static_cast<double>(static_cast<float>(v));
    }
}

} // namespace

std::size_t numel(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t extent : shape) {
        n *= extent;
    }
    return n;
}

std::string shape_to_string(const Shape& shape) {
    std::ostringstream out;
    out << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        out << (i ? "," : "") << shape[i];
    }
    out << ']';
    return out.str();
}

Tensor Tensor::zeros(Shape shape, Precision precision, bool requires_grad) {
    check_shape(shape);
    auto node = std::make_shared<Node>();
    node->data.assign(numel(shape), 0.0);
    node->shape = std::move(shape);
    node->precision = precision;
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
}

Tensor Tensor::full(Shape shape, double value, Precision precision) {
    Tensor t = zeros(std::move(shape), precision);
    std::fill(t.node_->data.begin(), t.node_->data.end(), value);
    if (precision == Precision::standard32) {
        round_to_binary32(t.node_->data);
    }
    return t;
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data, Precision precision, bool requires_grad) {
    check_shape(shape);
    if (data.size() != numel(shape)) {
        throw DimensionError("data length " + std::to_string(data.size()) + " does not match shape " +
                             shape_to_string(shape));
    }
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->data = std::move(data);
    node->precision = precision;
    node->requires_grad = requires_grad;
    if (precision == Precision::standard32) {
        round_to_binary32(node->data);
    }
    return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, Precision precision) { return from_data({}, {value}, precision); }

Tensor Tensor::make_result(std::string_view op, Shape shape, std::vector<double> data, std::vector<Tensor> inputs,
                           BackwardFn backward) {
    check_shape(shape);
    if (data.size() != numel(shape)) {
        throw DimensionError(std::string(op) + ": produced " + std::to_string(data.size()) +
                             " values for shape " + shape_to_string(shape));
    }
    Precision precision = Precision::verify64;
    bool needs_grad = false;
    for (const Tensor& in : inputs) {
        if (in.node_->precision == Precision::standard32) {
            precision = Precision::standard32;
        }
        needs_grad = needs_grad || in.node_->requires_grad;
    }
    if (precision == Precision::standard32) {
        round_to_binary32(data);
    }
    for (double v : data) {
        if (!std::isfinite(v)) {
            throw NumericError(std::string(op) + ": non-finite value in forward result");
        }
    }
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->data = std::move(data);
    node->precision = precision;
    if (needs_grad && t_grad_enabled) {
        node->requires_grad = true;
        node->inputs = std::move(inputs);
        node->backward = std::move(backward);
    }
    return Tensor(std::move(node));
}

const Shape& Tensor::shape() const { return node_->shape; }

std::size_t Tensor::dim(int axis) const {
    const int r = static_cast<int>(node_->shape.size());
    const int a = axis < 0 ? axis + r : axis;
    if (a < 0 || a >= r) {
        throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " +
                             shape_to_string(node_->shape));
    }
    return node_->shape[static_cast<std::size_t>(a)];
}

std::size_t Tensor::size() const { return node_->data.size(); }

std::span<const double> Tensor::data() const { return node_->data; }

std::span<double> Tensor::mutable_data() const { return node_->data; }

double Tensor::item() const {
    if (node_->data.size() != 1) {
        throw ContractError("item() on tensor of shape " + shape_to_string(node_->shape));
    }
    return node_->data[0];
}

double Tensor::at(std::initializer_list<std::size_t> index) const {
    if (index.size() != node_->shape.size()) {
        throw DimensionError("index rank does not match shape " + shape_to_string(node_->shape));
    }
    std::size_t flat = 0;
    std::size_t axis = 0;
    for (std::size_t i : index) {
        if (i >= node_->shape[axis]) {
            throw DimensionError("index out of range for shape " + shape_to_string(node_->shape));
        }
        flat = flat * node_->shape[axis] + i;
        ++axis;
    }
    return node_->data[flat];
}

bool Tensor::requires_grad() const { return node_->requires_grad; }

Precision Tensor::precision() const { return node_->precision; }

void Tensor::set_precision(Precision precision) {
    node_->precision = precision;
    if (precision == Precision::standard32) {
        round_to_binary32(node_->data);
    }
}

bool Tensor::has_grad() const { return !node_->grad.empty(); }

std::span<const double> Tensor::grad() const { return node_->grad; }

std::span<double> Tensor::mutable_grad() const {
    if (node_->grad.empty()) {
        node_->grad.assign(node_->data.size(), 0.0);
    }
    return node_->grad;
}

void Tensor::clear_grad() const {
    node_->grad.clear();
    node_->grad.shrink_to_fit();
}

void backward(const Tensor& loss) {
    if (!loss.defined() || loss.size() != 1) {
        throw ContractError("backward() needs a scalar loss, got shape " +
                            (loss.defined() ? shape_to_string(loss.shape()) : std::string("<undefined>")));
    }
    if (!loss.requires_grad()) {
        throw ContractError("backward() on a loss that does not depend on any trainable tensor");
    }

    // Iterative post-order DFS gives a topological order of the recorded tape.
    std::vector<Tensor::Node*> order;
    std::unordered_set<Tensor::Node*> visited;
    std::vector<std::pair<Tensor::Node*, std::size_t>> stack;
    stack.emplace_back(loss.node_.get(), 0);
    visited.insert(loss.node_.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->inputs.size()) {
            Tensor::Node* child = node->inputs[next++].node_.get();
            if (child->requires_grad && visited.insert(child).second) {
                stack.emplace_back(child, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    for (Tensor::Node* node : order) {
        if (node->backward) {
            node->grad.assign(node->data.size(), 0.0);
        }
    }
    Tensor root(loss.node_);
    root.mutable_grad()[0] += 1.0;

    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Tensor::Node* node = *it;
        if (node->backward) {
            const Tensor out(std::shared_ptr<Tensor::Node>(std::shared_ptr<Tensor::Node>{}, node));
            node->backward(out);
        }
    }
}

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }

NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

} // namespace codesum

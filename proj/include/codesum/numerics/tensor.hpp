#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace codesum {

using Shape = std::vector<std::size_t>;

/// standard32 rounds every stored value to binary32; verify64 keeps full
/// double precision and exists for finite-difference gradient checks.
enum class Precision { standard32, verify64 };

std::size_t numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

/// Reference-counted handle to a node of the dynamic autodiff graph.
///
/// Copies share the same node. A tensor produced by an operation keeps its
/// inputs alive until it is destroyed; backward() walks that graph in reverse
/// creation order.
class Tensor {
  public:
    /// Propagates `out.grad()` into the inputs captured by the closure.
    using BackwardFn = std::function<void(const Tensor& out)>;

    Tensor() = default;

    static Tensor zeros(Shape shape, Precision precision = Precision::verify64, bool requires_grad = false);
    static Tensor full(Shape shape, double value, Precision precision = Precision::verify64);
    static Tensor from_data(Shape shape, std::vector<double> data, Precision precision = Precision::verify64,
                            bool requires_grad = false);
    static Tensor scalar(double value, Precision precision = Precision::verify64);

    /// Builds an operation result. Rounds to binary32 when any input is
    /// standard32, rejects non-finite values, and records `backward` only when
    /// grad mode is on and some input requires a gradient.
    static Tensor make_result(std::string_view op, Shape shape, std::vector<double> data,
                              std::vector<Tensor> inputs, BackwardFn backward);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const;
    std::size_t rank() const { return shape().size(); }
    /// Extent of `axis`; negative axes count from the end.
    std::size_t dim(int axis) const;
    std::size_t size() const;

    std::span<const double> data() const;
    /// Write access through the handle (copies share the buffer); for
    /// initialisers and optimisers.
    std::span<double> mutable_data() const;
    double item() const;
    double at(std::initializer_list<std::size_t> index) const;

    bool requires_grad() const;
    Precision precision() const;
    void set_precision(Precision precision);

    bool has_grad() const;
    std::span<const double> grad() const;
    /// Gradient buffer, allocated as zeros on first access.
    std::span<double> mutable_grad() const;
    void clear_grad() const;

    /// Identity of the underlying node.
    const void* id() const { return node_.get(); }

  private:
    struct Node;
    friend void backward(const Tensor& loss);
    explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}
    std::shared_ptr<Node> node_;
};

/// Reverse-mode sweep from a scalar. Leaf gradients accumulate across calls;
/// intermediate gradients are reset at the start of every sweep.
void backward(const Tensor& loss);

/// Whether operations currently record backward closures (per thread).
bool grad_enabled();

/// Disables graph recording on this thread for its lifetime.
class NoGradGuard {
  public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

  private:
    bool previous_;
};

/// Non-differentiable boolean tensor; true keeps an entry.
struct Mask {
    Shape shape;
    std::vector<std::uint8_t> keep;
};

/// Non-differentiable integer tensor.
struct IndexTensor {
    Shape shape;
    std::vector<std::int64_t> values;
};

} // namespace codesum

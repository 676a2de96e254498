#include "codesum/numerics/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>
#include <string>

#include "codesum/errors.hpp"

namespace codesum::ops {

namespace {

using IndexMap = std::vector<std::size_t>;

std::size_t normalize_axis(int axis, std::size_t rank, const char* op) {
    const int r = static_cast<int>(rank);
    const int a = axis < 0 ? axis + r : axis;
    if (a < 0 || a >= r) {
        throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) + " out of range for rank " +
                             std::to_string(rank));
    }
    return static_cast<std::size_t>(a);
}

Shape broadcast_shapes(const Shape& a, const Shape& b, const char* op) {
    const std::size_t rank = std::max(a.size(), b.size());
    Shape out(rank, 1);
    for (std::size_t i = 0; i < rank; ++i) {
        const std::size_t da = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
        const std::size_t db = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
        if (da != db && da != 1 && db != 1) {
            throw DimensionError(std::string(op) + ": cannot broadcast " + shape_to_string(a) + " with " +
                                 shape_to_string(b));
        }
        out[i] = std::max(da, db);
    }
    return out;
}

// For each flat position of `out`, the flat position of the broadcast source.
IndexMap broadcast_index_map(const Shape& in, const Shape& out) {
    const std::size_t rank = out.size();
    const std::size_t offset = rank - in.size();
    std::vector<std::size_t> strides(rank, 0);
    std::size_t stride = 1;
    for (std::size_t i = in.size(); i-- > 0;) {
        strides[i + offset] = in[i] == 1 ? 0 : stride;
        stride *= in[i];
    }
    IndexMap map(numel(out));
    std::vector<std::size_t> counter(rank, 0);
    std::size_t src = 0;
    for (std::size_t flat = 0; flat < map.size(); ++flat) {
        map[flat] = src;
        for (std::size_t ax = rank; ax-- > 0;) {
            if (++counter[ax] < out[ax]) {
                src += strides[ax];
                break;
            }
            src -= strides[ax] * (out[ax] - 1);
            counter[ax] = 0;
        }
    }
    return map;
}

Shape leading(const Shape& s) { return Shape(s.begin(), s.end() - 1); }

Shape with_last(Shape s, std::size_t last) {
    s.push_back(last);
    return s;
}

struct Broadcast {
    Shape out;
    std::shared_ptr<const IndexMap> ia;
    std::shared_ptr<const IndexMap> ib;
};

Broadcast plan_broadcast(const Tensor& a, const Tensor& b, const char* op) {
    Broadcast plan;
    plan.out = broadcast_shapes(a.shape(), b.shape(), op);
    if (a.shape() != plan.out) {
        plan.ia = std::make_shared<const IndexMap>(broadcast_index_map(a.shape(), plan.out));
    }
    if (b.shape() != plan.out) {
        plan.ib = std::make_shared<const IndexMap>(broadcast_index_map(b.shape(), plan.out));
    }
    return plan;
}

inline std::size_t at(const std::shared_ptr<const IndexMap>& map, std::size_t i) { return map ? (*map)[i] : i; }

enum class BinaryKind { add, sub, mul };

Tensor binary(const Tensor& a, const Tensor& b, BinaryKind kind, const char* op) {
    Broadcast plan = plan_broadcast(a, b, op);
    const std::size_t n = numel(plan.out);
    std::vector<double> out(n);
    const auto ad = a.data();
    const auto bd = b.data();
    for (std::size_t i = 0; i < n; ++i) {
        const double x = ad[at(plan.ia, i)];
        const double y = bd[at(plan.ib, i)];
        out[i] = kind == BinaryKind::add ? x + y : kind == BinaryKind::sub ? x - y : x * y;
    }
    auto ia = plan.ia;
    auto ib = plan.ib;
    return Tensor::make_result(op, plan.out, std::move(out), {a, b}, [a, b, ia, ib, kind](const Tensor& res) mutable {
        const auto g = res.grad();
        if (a.requires_grad()) {
            auto ga = a.mutable_grad();
            const auto bd = b.data();
            for (std::size_t i = 0; i < g.size(); ++i) {
                ga[at(ia, i)] += kind == BinaryKind::mul ? g[i] * bd[at(ib, i)] : g[i];
            }
        }
        if (b.requires_grad()) {
            auto gb = b.mutable_grad();
            const auto ad = a.data();
            for (std::size_t i = 0; i < g.size(); ++i) {
                gb[at(ib, i)] += kind == BinaryKind::mul ? g[i] * ad[at(ia, i)]
                                 : kind == BinaryKind::sub ? -g[i]
                                                           : g[i];
            }
        }
    });
}

} // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary(a, b, BinaryKind::add, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(a, b, BinaryKind::sub, "sub"); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(a, b, BinaryKind::mul, "mul"); }

Tensor affine(const Tensor& x, double scale, double shift) {
    const auto xd = x.data();
    std::vector<double> out(xd.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = scale * xd[i] + shift;
    }
    return Tensor::make_result("affine", x.shape(), std::move(out), {x}, [x, scale](const Tensor& res) mutable {
        const auto g = res.grad();
        auto gx = x.mutable_grad();
        for (std::size_t i = 0; i < g.size(); ++i) {
            gx[i] += scale * g[i];
        }
    });
}

namespace {
thread_local double t_relu_margin = std::numeric_limits<double>::infinity();
}

void reset_relu_margin() { t_relu_margin = std::numeric_limits<double>::infinity(); }

double relu_margin() { return t_relu_margin; }

Tensor relu(const Tensor& x) {
    const auto xd = x.data();
    std::vector<double> out(xd.size());
    double margin = t_relu_margin;
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = xd[i] > 0.0 ? xd[i] : 0.0;
        margin = std::min(margin, std::abs(xd[i]));
    }
    t_relu_margin = margin;
    return Tensor::make_result("relu", x.shape(), std::move(out), {x}, [x](const Tensor& res) mutable {
        const auto g = res.grad();
        const auto xd = x.data();
        auto gx = x.mutable_grad();
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (xd[i] > 0.0) {
                gx[i] += g[i];
            }
        }
    });
}

Tensor sigmoid(const Tensor& x) {
    const auto xd = x.data();
    std::vector<double> out(xd.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double v = xd[i];
        if (v >= 0.0) {
            out[i] = 1.0 / (1.0 + std::exp(-v));
        } else {
            const double e = std::exp(v);
            out[i] = e / (1.0 + e);
        }
    }
    return Tensor::make_result("sigmoid", x.shape(), std::move(out), {x}, [x](const Tensor& res) mutable {
        const auto g = res.grad();
        const auto y = res.data();
        auto gx = x.mutable_grad();
        for (std::size_t i = 0; i < g.size(); ++i) {
            gx[i] += g[i] * y[i] * (1.0 - y[i]);
        }
    });
}

Tensor sum(const Tensor& x) {
    const auto xd = x.data();
    const double total = std::accumulate(xd.begin(), xd.end(), 0.0);
    return Tensor::make_result("sum", {}, {total}, {x}, [x](const Tensor& res) mutable {
        const double g = res.grad()[0];
        for (double& v : x.mutable_grad()) {
            v += g;
        }
    });
}

Tensor mean(const Tensor& x) { return affine(sum(x), 1.0 / static_cast<double>(x.size())); }

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() < 2 || b.rank() < 2) {
        throw DimensionError("matmul needs rank >= 2 operands, got " + shape_to_string(a.shape()) + " and " +
                             shape_to_string(b.shape()));
    }
    const std::size_t m = a.dim(-2);
    const std::size_t k = a.dim(-1);
    const std::size_t n = b.dim(-1);
    if (b.dim(-2) != k) {
        throw DimensionError("matmul: inner dimensions differ for " + shape_to_string(a.shape()) + " x " +
                             shape_to_string(b.shape()));
    }
    const Shape batch_a(a.shape().begin(), a.shape().end() - 2);
    const Shape batch_b(b.shape().begin(), b.shape().end() - 2);
    const Shape batch = broadcast_shapes(batch_a, batch_b, "matmul");
    auto map_a = std::make_shared<const IndexMap>(broadcast_index_map(batch_a, batch));
    auto map_b = std::make_shared<const IndexMap>(broadcast_index_map(batch_b, batch));
    const std::size_t batches = numel(batch);

    Shape out_shape = batch;
    out_shape.push_back(m);
    out_shape.push_back(n);
    std::vector<double> out(batches * m * n, 0.0);
    const double* ad = a.data().data();
    const double* bd = b.data().data();
    for (std::size_t bi = 0; bi < batches; ++bi) {
        const double* A = ad + (*map_a)[bi] * m * k;
        const double* B = bd + (*map_b)[bi] * k * n;
        double* C = out.data() + bi * m * n;
        for (std::size_t i = 0; i < m; ++i) {
            double* crow = C + i * n;
            for (std::size_t p = 0; p < k; ++p) {
                const double av = A[i * k + p];
                const double* brow = B + p * n;
                for (std::size_t j = 0; j < n; ++j) {
                    crow[j] += av * brow[j];
                }
            }
        }
    }
    return Tensor::make_result(
        "matmul", std::move(out_shape), std::move(out), {a, b},
        [a, b, map_a, map_b, batches, m, k, n](const Tensor& res) mutable {
            const double* g = res.grad().data();
            const double* ad = a.data().data();
            const double* bd = b.data().data();
            if (a.requires_grad()) {
                double* ga = a.mutable_grad().data();
                for (std::size_t bi = 0; bi < batches; ++bi) {
                    const double* G = g + bi * m * n;
                    const double* B = bd + (*map_b)[bi] * k * n;
                    double* GA = ga + (*map_a)[bi] * m * k;
                    for (std::size_t i = 0; i < m; ++i) {
                        const double* grow = G + i * n;
                        for (std::size_t p = 0; p < k; ++p) {
                            const double* brow = B + p * n;
                            double acc = 0.0;
                            for (std::size_t j = 0; j < n; ++j) {
                                acc += grow[j] * brow[j];
                            }
                            GA[i * k + p] += acc;
                        }
                    }
                }
            }
            if (b.requires_grad()) {
                double* gb = b.mutable_grad().data();
                for (std::size_t bi = 0; bi < batches; ++bi) {
                    const double* G = g + bi * m * n;
                    const double* A = ad + (*map_a)[bi] * m * k;
                    double* GB = gb + (*map_b)[bi] * k * n;
                    for (std::size_t i = 0; i < m; ++i) {
                        const double* grow = G + i * n;
                        for (std::size_t p = 0; p < k; ++p) {
                            const double av = A[i * k + p];
                            double* gbrow = GB + p * n;
                            for (std::size_t j = 0; j < n; ++j) {
                                gbrow[j] += av * grow[j];
                            }
                        }
                    }
                }
            }
        });
}

Tensor permute(const Tensor& x, const std::vector<std::size_t>& axes) {
    const std::size_t rank = x.rank();
    if (axes.size() != rank) {
        throw DimensionError("permute: axes do not match shape " + shape_to_string(x.shape()));
    }
    std::vector<bool> seen(rank, false);
    Shape out_shape(rank);
    for (std::size_t i = 0; i < rank; ++i) {
        if (axes[i] >= rank || seen[axes[i]]) {
            throw DimensionError("permute: invalid axis permutation");
        }
        seen[axes[i]] = true;
        out_shape[i] = x.shape()[axes[i]];
    }
    std::vector<std::size_t> in_strides(rank, 1);
    for (std::size_t i = rank; i-- > 1;) {
        in_strides[i - 1] = in_strides[i] * x.shape()[i];
    }
    Shape perm_strides(rank);
    for (std::size_t i = 0; i < rank; ++i) {
        perm_strides[i] = in_strides[axes[i]];
    }
    auto map = std::make_shared<IndexMap>(x.size());
    std::vector<std::size_t> counter(rank, 0);
    std::size_t src = 0;
    for (std::size_t flat = 0; flat < map->size(); ++flat) {
        (*map)[flat] = src;
        for (std::size_t ax = rank; ax-- > 0;) {
            if (++counter[ax] < out_shape[ax]) {
                src += perm_strides[ax];
                break;
            }
            src -= perm_strides[ax] * (out_shape[ax] - 1);
            counter[ax] = 0;
        }
    }
    const auto xd = x.data();
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = xd[(*map)[i]];
    }
    return Tensor::make_result("permute", std::move(out_shape), std::move(out), {x}, [x, map](const Tensor& res) mutable {
        const auto g = res.grad();
        auto gx = x.mutable_grad();
        for (std::size_t i = 0; i < g.size(); ++i) {
            gx[(*map)[i]] += g[i];
        }
    });
}

Tensor transpose_last2(const Tensor& x) {
    if (x.rank() < 2) {
        throw DimensionError("transpose_last2 needs rank >= 2, got " + shape_to_string(x.shape()));
    }
    std::vector<std::size_t> axes(x.rank());
    std::iota(axes.begin(), axes.end(), std::size_t{0});
    std::swap(axes[x.rank() - 1], axes[x.rank() - 2]);
    return permute(x, axes);
}

Tensor reshape(const Tensor& x, Shape shape) {
    if (numel(shape) != x.size()) {
        throw DimensionError("reshape: cannot view " + shape_to_string(x.shape()) + " as " + shape_to_string(shape));
    }
    std::vector<double> out(x.data().begin(), x.data().end());
    return Tensor::make_result("reshape", std::move(shape), std::move(out), {x}, [x](const Tensor& res) mutable {
        const auto g = res.grad();
        auto gx = x.mutable_grad();
        for (std::size_t i = 0; i < g.size(); ++i) {
            gx[i] += g[i];
        }
    });
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
    if (parts.empty()) {
        throw ContractError("concat of zero tensors");
    }
    const Shape& first = parts.front().shape();
    const std::size_t ax = normalize_axis(axis, first.size(), "concat");
    Shape out_shape = first;
    out_shape[ax] = 0;
    for (const Tensor& p : parts) {
        if (p.rank() != first.size()) {
            throw DimensionError("concat: rank mismatch " + shape_to_string(first) + " vs " + shape_to_string(p.shape()));
        }
        for (std::size_t i = 0; i < first.size(); ++i) {
            if (i != ax && p.shape()[i] != first[i]) {
                throw DimensionError("concat: shape mismatch " + shape_to_string(first) + " vs " +
                                     shape_to_string(p.shape()));
            }
        }
        out_shape[ax] += p.shape()[ax];
    }
    std::size_t outer = 1;
    for (std::size_t i = 0; i < ax; ++i) {
        outer *= first[i];
    }
    std::size_t inner = 1;
    for (std::size_t i = ax + 1; i < first.size(); ++i) {
        inner *= first[i];
    }
    const std::size_t out_block = out_shape[ax] * inner;
    std::vector<double> out(numel(out_shape));
    std::size_t offset = 0;
    for (const Tensor& p : parts) {
        const std::size_t block = p.shape()[ax] * inner;
        const auto pd = p.data();
        for (std::size_t o = 0; o < outer; ++o) {
            std::copy_n(pd.begin() + static_cast<std::ptrdiff_t>(o * block), block,
                        out.begin() + static_cast<std::ptrdiff_t>(o * out_block + offset));
        }
        offset += block;
    }
    return Tensor::make_result("concat", std::move(out_shape), std::move(out), parts,
                               [parts, ax, outer, inner, out_block](const Tensor& res) mutable {
                                   const auto g = res.grad();
                                   std::size_t offset = 0;
                                   for (const Tensor& p : parts) {
                                       const std::size_t block = p.shape()[ax] * inner;
                                       if (p.requires_grad()) {
                                           auto gp = p.mutable_grad();
                                           for (std::size_t o = 0; o < outer; ++o) {
                                               for (std::size_t i = 0; i < block; ++i) {
                                                   gp[o * block + i] += g[o * out_block + offset + i];
                                               }
                                           }
                                       }
                                       offset += block;
                                   }
                               });
}

Tensor slice(const Tensor& x, int axis, std::size_t start, std::size_t length) {
    const std::size_t ax = normalize_axis(axis, x.rank(), "slice");
    if (length == 0 || start + length > x.shape()[ax]) {
        throw DimensionError("slice [" + std::to_string(start) + ", " + std::to_string(start + length) +
                             ") out of range for shape " + shape_to_string(x.shape()));
    }
    Shape out_shape = x.shape();
    out_shape[ax] = length;
    std::size_t outer = 1;
    for (std::size_t i = 0; i < ax; ++i) {
        outer *= x.shape()[i];
    }
    std::size_t inner = 1;
    for (std::size_t i = ax + 1; i < x.rank(); ++i) {
        inner *= x.shape()[i];
    }
    const std::size_t in_block = x.shape()[ax] * inner;
    const std::size_t out_block = length * inner;
    const auto xd = x.data();
    std::vector<double> out(outer * out_block);
    for (std::size_t o = 0; o < outer; ++o) {
        std::copy_n(xd.begin() + static_cast<std::ptrdiff_t>(o * in_block + start * inner), out_block,
                    out.begin() + static_cast<std::ptrdiff_t>(o * out_block));
    }
    return Tensor::make_result("slice", std::move(out_shape), std::move(out), {x},
                               [x, outer, in_block, out_block, start, inner](const Tensor& res) mutable {
                                   const auto g = res.grad();
                                   auto gx = x.mutable_grad();
                                   for (std::size_t o = 0; o < outer; ++o) {
                                       for (std::size_t i = 0; i < out_block; ++i) {
                                           gx[o * in_block + start * inner + i] += g[o * out_block + i];
                                       }
                                   }
                               });
}

Tensor index_select0(const Tensor& x, const std::vector<std::size_t>& rows) {
    if (x.rank() < 1 || rows.empty()) {
        throw DimensionError("index_select0: empty selection or scalar input");
    }
    const std::size_t row = x.size() / x.shape()[0];
    Shape out_shape = x.shape();
    out_shape[0] = rows.size();
    const auto xd = x.data();
    std::vector<double> out(rows.size() * row);
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r] >= x.shape()[0]) {
            throw DimensionError("index_select0: row " + std::to_string(rows[r]) + " out of range for " +
                                 shape_to_string(x.shape()));
        }
        std::copy_n(xd.begin() + static_cast<std::ptrdiff_t>(rows[r] * row), row,
                    out.begin() + static_cast<std::ptrdiff_t>(r * row));
    }
    return Tensor::make_result("index_select0", std::move(out_shape), std::move(out), {x},
                               [x, rows, row](const Tensor& res) mutable {
                                   const auto g = res.grad();
                                   auto gx = x.mutable_grad();
                                   for (std::size_t r = 0; r < rows.size(); ++r) {
                                       for (std::size_t i = 0; i < row; ++i) {
                                           gx[rows[r] * row + i] += g[r * row + i];
                                       }
                                   }
                               });
}

Tensor softmax_lastdim(const Tensor& x, const Mask* mask) {
    if (x.rank() < 1) {
        throw DimensionError("softmax_lastdim needs rank >= 1");
    }
    const std::size_t n = x.dim(-1);
    const std::size_t rows = x.size() / n;
    IndexMap mask_map;
    if (mask != nullptr) {
        if (mask->keep.size() != numel(mask->shape)) {
            throw DimensionError("softmax_lastdim: malformed mask");
        }
        const Shape b = broadcast_shapes(mask->shape, x.shape(), "softmax_lastdim");
        if (b != x.shape()) {
            throw DimensionError("softmax_lastdim: mask " + shape_to_string(mask->shape) + " does not broadcast to " +
                                 shape_to_string(x.shape()));
        }
        mask_map = broadcast_index_map(mask->shape, x.shape());
    }
    const auto xd = x.data();
    std::vector<double> out(x.size(), 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
        const std::size_t base = r * n;
        double peak = -std::numeric_limits<double>::infinity();
        bool any = false;
        for (std::size_t j = 0; j < n; ++j) {
            if (mask == nullptr || mask->keep[mask_map[base + j]]) {
                peak = std::max(peak, xd[base + j]);
                any = true;
            }
        }
        if (!any) {
            throw DegenerateMaskError("softmax_lastdim: row " + std::to_string(r) + " is fully masked");
        }
        double total = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            if (mask == nullptr || mask->keep[mask_map[base + j]]) {
                out[base + j] = std::exp(xd[base + j] - peak);
                total += out[base + j];
            }
        }
        for (std::size_t j = 0; j < n; ++j) {
            out[base + j] /= total;
        }
    }
    return Tensor::make_result("softmax_lastdim", x.shape(), std::move(out), {x}, [x, n, rows](const Tensor& res) mutable {
        const auto g = res.grad();
        const auto y = res.data();
        auto gx = x.mutable_grad();
        for (std::size_t r = 0; r < rows; ++r) {
            const std::size_t base = r * n;
            double dot = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                dot += g[base + j] * y[base + j];
            }
            for (std::size_t j = 0; j < n; ++j) {
                gx[base + j] += y[base + j] * (g[base + j] - dot);
            }
        }
    });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
    const std::size_t d = x.dim(-1);
    if (gain.shape() != Shape{d} || bias.shape() != Shape{d}) {
        throw DimensionError("layer_norm: gain " + shape_to_string(gain.shape()) + " / bias " +
                             shape_to_string(bias.shape()) + " do not match input " + shape_to_string(x.shape()));
    }
    const std::size_t rows = x.size() / d;
    auto xhat = std::make_shared<std::vector<double>>(x.size());
    auto rstd = std::make_shared<std::vector<double>>(rows);
    const auto xd = x.data();
    const auto gd = gain.data();
    const auto bd = bias.data();
    std::vector<double> out(x.size());
    for (std::size_t r = 0; r < rows; ++r) {
        const double* row = xd.data() + r * d;
        double mu = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            mu += row[j];
        }
        mu /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            var += (row[j] - mu) * (row[j] - mu);
        }
        var /= static_cast<double>(d);
        const double denom = var + eps;
        // Zero-variance rows normalise to zeros.
        const double s = denom > 0.0 ? 1.0 / std::sqrt(denom) : 0.0;
        (*rstd)[r] = s;
        for (std::size_t j = 0; j < d; ++j) {
            const double h = (row[j] - mu) * s;
            (*xhat)[r * d + j] = h;
            out[r * d + j] = gd[j] * h + bd[j];
        }
    }
    return Tensor::make_result(
        "layer_norm", x.shape(), std::move(out), {x, gain, bias},
        [x, gain, bias, xhat, rstd, rows, d](const Tensor& res) mutable {
            const auto g = res.grad();
            const auto gd = gain.data();
            if (gain.requires_grad() || bias.requires_grad()) {
                auto gg = gain.requires_grad() ? gain.mutable_grad() : std::span<double>{};
                auto gb = bias.requires_grad() ? bias.mutable_grad() : std::span<double>{};
                for (std::size_t r = 0; r < rows; ++r) {
                    for (std::size_t j = 0; j < d; ++j) {
                        if (!gg.empty()) {
                            gg[j] += g[r * d + j] * (*xhat)[r * d + j];
                        }
                        if (!gb.empty()) {
                            gb[j] += g[r * d + j];
                        }
                    }
                }
            }
            if (x.requires_grad()) {
                auto gx = x.mutable_grad();
                const double inv_d = 1.0 / static_cast<double>(d);
                for (std::size_t r = 0; r < rows; ++r) {
                    double mean_dh = 0.0;
                    double mean_dh_h = 0.0;
                    for (std::size_t j = 0; j < d; ++j) {
                        const double dh = g[r * d + j] * gd[j];
                        mean_dh += dh;
                        mean_dh_h += dh * (*xhat)[r * d + j];
                    }
                    mean_dh *= inv_d;
                    mean_dh_h *= inv_d;
                    for (std::size_t j = 0; j < d; ++j) {
                        const double dh = g[r * d + j] * gd[j];
                        gx[r * d + j] += (*rstd)[r] * (dh - mean_dh - (*xhat)[r * d + j] * mean_dh_h);
                    }
                }
            }
        });
}

Tensor dropout(const Tensor& x, double rate, bool training, Rng& rng) {
    if (!(rate >= 0.0 && rate < 1.0)) {
        throw ConfigError("dropout rate must lie in [0, 1), got " + std::to_string(rate));
    }
    if (!training || rate == 0.0) {
        return x;
    }
    const double scale = 1.0 / (1.0 - rate);
    auto keep = std::make_shared<std::vector<double>>(x.size());
    for (double& k : *keep) {
        k = rng.uniform() >= rate ? scale : 0.0;
    }
    const auto xd = x.data();
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = xd[i] * (*keep)[i];
    }
    return Tensor::make_result("dropout", x.shape(), std::move(out), {x}, [x, keep](const Tensor& res) mutable {
        const auto g = res.grad();
        auto gx = x.mutable_grad();
        for (std::size_t i = 0; i < g.size(); ++i) {
            gx[i] += g[i] * (*keep)[i];
        }
    });
}

Tensor embedding(const Tensor& table, const IndexTensor& ids) {
    if (table.rank() != 2) {
        throw DimensionError("embedding table must be rank 2, got " + shape_to_string(table.shape()));
    }
    if (ids.values.size() != numel(ids.shape)) {
        throw DimensionError("embedding: malformed id tensor");
    }
    const std::size_t vocab = table.dim(0);
    const std::size_t d = table.dim(1);
    const auto td = table.data();
    std::vector<double> out(ids.values.size() * d);
    for (std::size_t i = 0; i < ids.values.size(); ++i) {
        const std::int64_t id = ids.values[i];
        if (id < 0 || static_cast<std::size_t>(id) >= vocab) {
            throw ContractError("embedding: id " + std::to_string(id) + " outside table of " + std::to_string(vocab) +
                                " rows");
        }
        std::copy_n(td.begin() + id * static_cast<std::ptrdiff_t>(d), d, out.begin() + static_cast<std::ptrdiff_t>(i * d));
    }
    auto ids_copy = std::make_shared<const std::vector<std::int64_t>>(ids.values);
    return Tensor::make_result("embedding", with_last(ids.shape, d), std::move(out), {table},
                               [table, ids_copy, d](const Tensor& res) mutable {
                                   const auto g = res.grad();
                                   auto gt = table.mutable_grad();
                                   for (std::size_t i = 0; i < ids_copy->size(); ++i) {
                                       const auto row = static_cast<std::size_t>((*ids_copy)[i]);
                                       for (std::size_t j = 0; j < d; ++j) {
                                           gt[row * d + j] += g[i * d + j];
                                       }
                                   }
                               });
}

namespace {

struct LastDimIndexPlan {
    Shape lead;
    std::size_t width = 0; // last extent of the index
    IndexMap index_row;    // per leading position, flat row offset into index
};

LastDimIndexPlan plan_index(const Shape& data_lead, const IndexTensor& index, const char* op) {
    if (index.shape.empty() || index.values.size() != numel(index.shape)) {
        throw DimensionError(std::string(op) + ": malformed index tensor");
    }
    LastDimIndexPlan plan;
    plan.lead = data_lead;
    plan.width = index.shape.back();
    const Shape index_lead = leading(index.shape);
    if (broadcast_shapes(index_lead, data_lead, op) != data_lead) {
        throw DimensionError(std::string(op) + ": index " + shape_to_string(index.shape) +
                             " does not broadcast to leading shape " + shape_to_string(data_lead));
    }
    plan.index_row = broadcast_index_map(index_lead, data_lead);
    return plan;
}

} // namespace

Tensor gather_lastdim(const Tensor& x, const IndexTensor& index) {
    if (x.rank() < 1) {
        throw DimensionError("gather_lastdim needs rank >= 1");
    }
    const std::size_t R = x.dim(-1);
    auto plan = std::make_shared<LastDimIndexPlan>(plan_index(leading(x.shape()), index, "gather_lastdim"));
    for (std::int64_t v : index.values) {
        if (v < 0 || static_cast<std::size_t>(v) >= R) {
            throw ContractError("gather_lastdim: index " + std::to_string(v) + " outside [0, " + std::to_string(R) + ")");
        }
    }
    auto values = std::make_shared<const std::vector<std::int64_t>>(index.values);
    const std::size_t m = plan->width;
    const std::size_t rows = plan->index_row.size();
    const auto xd = x.data();
    std::vector<double> out(rows * m);
    for (std::size_t p = 0; p < rows; ++p) {
        const std::size_t irow = plan->index_row[p] * m;
        for (std::size_t j = 0; j < m; ++j) {
            out[p * m + j] = xd[p * R + static_cast<std::size_t>((*values)[irow + j])];
        }
    }
    return Tensor::make_result("gather_lastdim", with_last(plan->lead, m), std::move(out), {x},
                               [x, plan, values, R, m, rows](const Tensor& res) mutable {
                                   const auto g = res.grad();
                                   auto gx = x.mutable_grad();
                                   for (std::size_t p = 0; p < rows; ++p) {
                                       const std::size_t irow = plan->index_row[p] * m;
                                       for (std::size_t j = 0; j < m; ++j) {
                                           gx[p * R + static_cast<std::size_t>((*values)[irow + j])] += g[p * m + j];
                                       }
                                   }
                               });
}

Tensor scatter_add_lastdim(const Tensor& x, const IndexTensor& index, std::size_t out_size) {
    if (x.rank() < 1) {
        throw DimensionError("scatter_add_lastdim needs rank >= 1");
    }
    const std::size_t m = x.dim(-1);
    auto plan = std::make_shared<LastDimIndexPlan>(plan_index(leading(x.shape()), index, "scatter_add_lastdim"));
    if (plan->width != m) {
        throw DimensionError("scatter_add_lastdim: index " + shape_to_string(index.shape) + " does not match input " +
                             shape_to_string(x.shape()));
    }
    for (std::int64_t v : index.values) {
        if (v < 0 || static_cast<std::size_t>(v) >= out_size) {
            throw ContractError("scatter_add_lastdim: index " + std::to_string(v) + " outside [0, " +
                                std::to_string(out_size) + ")");
        }
    }
    auto values = std::make_shared<const std::vector<std::int64_t>>(index.values);
    const std::size_t rows = plan->index_row.size();
    const auto xd = x.data();
    std::vector<double> out(rows * out_size, 0.0);
    for (std::size_t p = 0; p < rows; ++p) {
        const std::size_t irow = plan->index_row[p] * m;
        for (std::size_t j = 0; j < m; ++j) {
            out[p * out_size + static_cast<std::size_t>((*values)[irow + j])] += xd[p * m + j];
        }
    }
    return Tensor::make_result("scatter_add_lastdim", with_last(plan->lead, out_size), std::move(out), {x},
                               [x, plan, values, out_size, m, rows](const Tensor& res) mutable {
                                   const auto g = res.grad();
                                   auto gx = x.mutable_grad();
                                   for (std::size_t p = 0; p < rows; ++p) {
                                       const std::size_t irow = plan->index_row[p] * m;
                                       for (std::size_t j = 0; j < m; ++j) {
                                           gx[p * m + j] += g[p * out_size + static_cast<std::size_t>((*values)[irow + j])];
                                       }
                                   }
                               });
}

Tensor nll_from_probs(const Tensor& probs, const IndexTensor& targets, const std::vector<double>& weights, double floor) {
    const std::size_t C = probs.dim(-1);
    const std::size_t positions = probs.size() / C;
    if (targets.values.size() != positions || weights.size() != positions) {
        throw DimensionError("nll_from_probs: " + std::to_string(targets.values.size()) + " targets for " +
                             std::to_string(positions) + " positions of " + shape_to_string(probs.shape()));
    }
    double total_weight = 0.0;
    for (double w : weights) {
        total_weight += w;
    }
    if (!(total_weight > 0.0)) {
        throw DegenerateMaskError("nll_from_probs: every target position is padding");
    }
    const auto pd = probs.data();
    double loss = 0.0;
    for (std::size_t i = 0; i < positions; ++i) {
        if (weights[i] == 0.0) {
            continue;
        }
        const std::int64_t t = targets.values[i];
        if (t < 0 || static_cast<std::size_t>(t) >= C) {
            throw ContractError("nll_from_probs: target " + std::to_string(t) + " outside [0, " + std::to_string(C) + ")");
        }
        loss -= weights[i] * std::log(std::max(pd[i * C + static_cast<std::size_t>(t)], floor));
    }
    loss /= total_weight;
    auto tv = std::make_shared<const std::vector<std::int64_t>>(targets.values);
    auto wv = std::make_shared<const std::vector<double>>(weights);
    return Tensor::make_result("nll_from_probs", {}, {loss}, {probs},
                               [probs, tv, wv, total_weight, C, floor](const Tensor& res) mutable {
                                   const double g = res.grad()[0];
                                   const auto pd = probs.data();
                                   auto gp = probs.mutable_grad();
                                   for (std::size_t i = 0; i < wv->size(); ++i) {
                                       if ((*wv)[i] == 0.0) {
                                           continue;
                                       }
                                       const std::size_t at = i * C + static_cast<std::size_t>((*tv)[i]);
                                       if (pd[at] > floor) {
                                           gp[at] -= g * (*wv)[i] / (pd[at] * total_weight);
                                       }
                                   }
                               });
}

} // namespace codesum::ops

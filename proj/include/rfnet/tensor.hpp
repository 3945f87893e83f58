#pragma once

// Dense row-major tensors with reverse-mode differentiation. Single-sample
// C×H×W convention: no batch axis, training loops over samples. The scalar
// type is a template parameter; training runs float, gradient verification
// reruns the same graphs in double.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "rfnet/kernels.hpp"
#include "rfnet/random.hpp"

namespace rfnet {

class ShapeError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

using Shape = std::vector<int>;

inline int numel(const Shape& s) {
    int n = 1;
    for (int e : s) n *= e;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
    os << ")";
    return os.str();
}

inline void check_shape(bool ok, const std::string& msg) {
    if (!ok) throw ShapeError(msg);
}

template <class T>
struct Node {
    Shape shape;
    std::vector<T> value;
    std::vector<T> grad;  // empty until needed; same length as value once allocated
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node<T>>> parents;
    std::function<void(Node<T>&)> backprop;  // pulls this->grad into parents' grads

    void ensure_grad() {
        if (grad.size() != value.size()) grad.assign(value.size(), T(0));
    }
};

template <class T>
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false) {
        return from_data(shape, std::vector<T>(static_cast<std::size_t>(numel(shape)), T(0)), requires_grad);
    }

    static Tensor full(Shape shape, T v, bool requires_grad = false) {
        return from_data(shape, std::vector<T>(static_cast<std::size_t>(numel(shape)), v), requires_grad);
    }

    static Tensor from_data(Shape shape, std::vector<T> data, bool requires_grad = false) {
        check_shape(!shape.empty(), "tensor shape must be non-empty");
        for (int e : shape) check_shape(e > 0, "tensor extents must be positive, got " + shape_str(shape));
        check_shape(static_cast<int>(data.size()) == numel(shape),
                    "data length " + std::to_string(data.size()) + " does not match shape " + shape_str(shape));
        auto n = std::make_shared<Node<T>>();
        n->shape = std::move(shape);
        n->value = std::move(data);
        n->requires_grad = requires_grad;
        Tensor t;
        t.node_ = std::move(n);
        return t;
    }

    static Tensor scalar(T v, bool requires_grad = false) { return from_data({1}, {v}, requires_grad); }

    static Tensor wrap(std::shared_ptr<Node<T>> n) {
        Tensor t;
        t.node_ = std::move(n);
        return t;
    }

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    int rank() const { return static_cast<int>(node_->shape.size()); }
    int dim(int i) const { return node_->shape[static_cast<std::size_t>(i)]; }
    int size() const { return static_cast<int>(node_->value.size()); }
    bool requires_grad() const { return node_->requires_grad; }

    std::vector<T>& data() { return node_->value; }
    const std::vector<T>& data() const { return node_->value; }
    bool has_grad() const { return node_->grad.size() == node_->value.size(); }
    std::vector<T>& grad() {
        node_->ensure_grad();
        return node_->grad;
    }
    const std::vector<T>& grad() const {
        node_->ensure_grad();
        return node_->grad;
    }

    T item() const {
        check_shape(size() == 1, "item() requires a single-element tensor, got " + shape_str(shape()));
        return node_->value[0];
    }

    void zero_grad() {
        if (node_->grad.size() == node_->value.size()) {
            std::fill(node_->grad.begin(), node_->grad.end(), T(0));
        }
    }

    std::shared_ptr<Node<T>> node() const { return node_; }

private:
    std::shared_ptr<Node<T>> node_;
};

// ---------------------------------------------------------------------------
// Autograd driver

// Forward-topological record of the nodes reachable from a root through
// gradient-requiring edges. Replaying it back-to-front visits each executed
// operation exactly once.
template <class T>
struct Tape {
    std::vector<std::shared_ptr<Node<T>>> order;
};

template <class T>
Tape<T> build_tape(const Tensor<T>& root) {
    Tape<T> tape;
    if (!root.requires_grad()) return tape;
    std::unordered_set<const Node<T>*> seen;
    // Iterative post-order DFS.
    std::vector<std::pair<std::shared_ptr<Node<T>>, std::size_t>> stack;
    stack.emplace_back(root.node(), 0);
    seen.insert(root.node().get());
    while (!stack.empty()) {
        auto& [node, next_child] = stack.back();
        bool descended = false;
        while (next_child < node->parents.size()) {
            auto& p = node->parents[next_child++];
            if (p->requires_grad && !seen.count(p.get())) {
                seen.insert(p.get());
                stack.emplace_back(p, 0);
                descended = true;
                break;
            }
        }
        if (!descended && stack.back().second >= stack.back().first->parents.size()) {
            tape.order.push_back(stack.back().first);
            stack.pop_back();
        }
    }
    return tape;
}

// Reverse-mode sweep from a scalar loss: every requires_grad tensor reachable
// from the loss accumulates d loss / d tensor.
template <class T>
void backward(const Tensor<T>& loss) {
    check_shape(loss.size() == 1, "backward() requires a scalar loss, got " + shape_str(loss.shape()));
    if (!loss.requires_grad()) {
        throw std::runtime_error("backward() called on a loss that is not connected to tracked tensors");
    }
    Tape<T> tape = build_tape(loss);
    for (auto& n : tape.order) n->ensure_grad();
    loss.node()->grad[0] += T(1);
    for (auto it = tape.order.rbegin(); it != tape.order.rend(); ++it) {
        if ((*it)->backprop) (*it)->backprop(**it);
    }
}

namespace detail {

template <class T>
Tensor<T> make_result(Shape shape, std::vector<T> value, std::vector<Tensor<T>> inputs,
                      std::function<void(Node<T>&)> backprop) {
    auto out = Tensor<T>::from_data(std::move(shape), std::move(value), false);
    bool needs = false;
    for (const auto& in : inputs) needs = needs || in.requires_grad();
    if (needs) {
        out.node()->requires_grad = true;
        out.node()->parents.reserve(inputs.size());
        for (auto& in : inputs) out.node()->parents.push_back(in.node());
        out.node()->backprop = std::move(backprop);
    }
    return out;
}

// Strides for reading tensor `from` at coordinates of broadcast shape `to`:
// extent-1 axes get stride 0.
inline std::vector<std::int64_t> broadcast_strides(const Shape& from, const Shape& to) {
    std::vector<std::int64_t> strides(to.size(), 0);
    std::int64_t s = 1;
    for (int i = static_cast<int>(from.size()) - 1; i >= 0; --i) {
        strides[static_cast<std::size_t>(i)] = (from[static_cast<std::size_t>(i)] == 1) ? 0 : s;
        s *= from[static_cast<std::size_t>(i)];
    }
    return strides;
}

inline Shape broadcast_shape(const Shape& a, const Shape& b, const char* op) {
    check_shape(a.size() == b.size(), std::string(op) + ": rank mismatch " + shape_str(a) + " vs " + shape_str(b));
    Shape out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i] == b[i] || a[i] == 1 || b[i] == 1) {
            out[i] = std::max(a[i], b[i]);
        } else {
            throw ShapeError(std::string(op) + ": shapes " + shape_str(a) + " and " + shape_str(b) +
                             " are not broadcastable");
        }
    }
    return out;
}

// Calls fn(out_flat, a_flat, b_flat) for every element of the broadcast shape.
template <class F>
void broadcast_iterate(const Shape& out, const std::vector<std::int64_t>& sa, const std::vector<std::int64_t>& sb,
                       F&& fn) {
    const int rank = static_cast<int>(out.size());
    std::vector<int> idx(static_cast<std::size_t>(rank), 0);
    const std::int64_t total = numel(out);
    std::int64_t ia = 0, ib = 0;
    for (std::int64_t flat = 0; flat < total; ++flat) {
        fn(flat, ia, ib);
        for (int d = rank - 1; d >= 0; --d) {
            idx[static_cast<std::size_t>(d)]++;
            ia += sa[static_cast<std::size_t>(d)];
            ib += sb[static_cast<std::size_t>(d)];
            if (idx[static_cast<std::size_t>(d)] < out[static_cast<std::size_t>(d)]) break;
            ia -= sa[static_cast<std::size_t>(d)] * out[static_cast<std::size_t>(d)];
            ib -= sb[static_cast<std::size_t>(d)] * out[static_cast<std::size_t>(d)];
            idx[static_cast<std::size_t>(d)] = 0;
        }
    }
}

enum class BinOp { Add, Sub, Mul, Div, Max };

template <class T>
Tensor<T> binary_op(const Tensor<T>& a, const Tensor<T>& b, BinOp op, const char* name) {
    const Shape out_shape = broadcast_shape(a.shape(), b.shape(), name);
    const auto sa = broadcast_strides(a.shape(), out_shape);
    const auto sb = broadcast_strides(b.shape(), out_shape);
    std::vector<T> value(static_cast<std::size_t>(numel(out_shape)));
    const auto& av = a.data();
    const auto& bv = b.data();
    broadcast_iterate(out_shape, sa, sb, [&](std::int64_t o, std::int64_t ia, std::int64_t ib) {
        const T x = av[static_cast<std::size_t>(ia)];
        const T y = bv[static_cast<std::size_t>(ib)];
        switch (op) {
            case BinOp::Add: value[static_cast<std::size_t>(o)] = x + y; break;
            case BinOp::Sub: value[static_cast<std::size_t>(o)] = x - y; break;
            case BinOp::Mul: value[static_cast<std::size_t>(o)] = x * y; break;
            case BinOp::Div: value[static_cast<std::size_t>(o)] = x / y; break;
            case BinOp::Max: value[static_cast<std::size_t>(o)] = (x >= y) ? x : y; break;
        }
    });
    auto backprop = [out_shape, sa, sb, op](Node<T>& out) {
        auto& pa = *out.parents[0];
        auto& pb = *out.parents[1];
        if (pa.requires_grad) pa.ensure_grad();
        if (pb.requires_grad) pb.ensure_grad();
        broadcast_iterate(out_shape, sa, sb, [&](std::int64_t o, std::int64_t ia, std::int64_t ib) {
            const T g = out.grad[static_cast<std::size_t>(o)];
            const T x = pa.value[static_cast<std::size_t>(ia)];
            const T y = pb.value[static_cast<std::size_t>(ib)];
            switch (op) {
                case BinOp::Add:
                    if (pa.requires_grad) pa.grad[static_cast<std::size_t>(ia)] += g;
                    if (pb.requires_grad) pb.grad[static_cast<std::size_t>(ib)] += g;
                    break;
                case BinOp::Sub:
                    if (pa.requires_grad) pa.grad[static_cast<std::size_t>(ia)] += g;
                    if (pb.requires_grad) pb.grad[static_cast<std::size_t>(ib)] -= g;
                    break;
                case BinOp::Mul:
                    if (pa.requires_grad) pa.grad[static_cast<std::size_t>(ia)] += g * y;
                    if (pb.requires_grad) pb.grad[static_cast<std::size_t>(ib)] += g * x;
                    break;
                case BinOp::Div:
                    if (pa.requires_grad) pa.grad[static_cast<std::size_t>(ia)] += g / y;
                    if (pb.requires_grad) pb.grad[static_cast<std::size_t>(ib)] -= g * x / (y * y);
                    break;
                case BinOp::Max:
                    if (x >= y) {
                        if (pa.requires_grad) pa.grad[static_cast<std::size_t>(ia)] += g;
                    } else {
                        if (pb.requires_grad) pb.grad[static_cast<std::size_t>(ib)] += g;
                    }
                    break;
            }
        });
    };
    return make_result<T>(out_shape, std::move(value), {a, b}, std::move(backprop));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise and broadcasting ops

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    return detail::binary_op(a, b, detail::BinOp::Add, "add");
}
template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    return detail::binary_op(a, b, detail::BinOp::Sub, "sub");
}
template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    return detail::binary_op(a, b, detail::BinOp::Mul, "mul");
}
template <class T>
Tensor<T> divide(const Tensor<T>& a, const Tensor<T>& b) {
    return detail::binary_op(a, b, detail::BinOp::Div, "div");
}
template <class T>
Tensor<T> maximum(const Tensor<T>& a, const Tensor<T>& b) {
    return detail::binary_op(a, b, detail::BinOp::Max, "maximum");
}

template <class T>
Tensor<T> scale(const Tensor<T>& a, T c) {
    std::vector<T> value(a.data().size());
    for (std::size_t i = 0; i < value.size(); ++i) value[i] = a.data()[i] * c;
    auto backprop = [c](Node<T>& out) {
        auto& p = *out.parents[0];
        p.ensure_grad();
        for (std::size_t i = 0; i < out.grad.size(); ++i) p.grad[i] += out.grad[i] * c;
    };
    return detail::make_result<T>(a.shape(), std::move(value), {a}, std::move(backprop));
}

template <class T>
Tensor<T> add_scalar(const Tensor<T>& a, T c) {
    std::vector<T> value(a.data().size());
    for (std::size_t i = 0; i < value.size(); ++i) value[i] = a.data()[i] + c;
    auto backprop = [](Node<T>& out) {
        auto& p = *out.parents[0];
        p.ensure_grad();
        for (std::size_t i = 0; i < out.grad.size(); ++i) p.grad[i] += out.grad[i];
    };
    return detail::make_result<T>(a.shape(), std::move(value), {a}, std::move(backprop));
}

template <class T>
Tensor<T> sigmoid(const Tensor<T>& a) {
    std::vector<T> value(a.data().size());
    for (std::size_t i = 0; i < value.size(); ++i) {
        const T x = a.data()[i];
        // Branch on sign so exp never overflows.
        value[i] = (x >= T(0)) ? T(1) / (T(1) + std::exp(-x)) : std::exp(x) / (T(1) + std::exp(x));
    }
    auto backprop = [](Node<T>& out) {
        auto& p = *out.parents[0];
        p.ensure_grad();
        for (std::size_t i = 0; i < out.grad.size(); ++i) {
            const T s = out.value[i];
            p.grad[i] += out.grad[i] * s * (T(1) - s);
        }
    };
    return detail::make_result<T>(a.shape(), std::move(value), {a}, std::move(backprop));
}

template <class T>
Tensor<T> relu(const Tensor<T>& a) {
    std::vector<T> value(a.data().size());
    for (std::size_t i = 0; i < value.size(); ++i) value[i] = std::max(a.data()[i], T(0));
    auto backprop = [](Node<T>& out) {
        auto& p = *out.parents[0];
        p.ensure_grad();
        for (std::size_t i = 0; i < out.grad.size(); ++i) {
            if (p.value[i] > T(0)) p.grad[i] += out.grad[i];
        }
    };
    return detail::make_result<T>(a.shape(), std::move(value), {a}, std::move(backprop));
}

// Max-subtraction before exponentiation; each slice along `axis` sums to 1.
template <class T>
Tensor<T> softmax(const Tensor<T>& a, int axis) {
    check_shape(axis >= 0 && axis < a.rank(), "softmax: axis " + std::to_string(axis) + " out of range for " +
                                                  shape_str(a.shape()));
    const Shape& s = a.shape();
    int outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= s[static_cast<std::size_t>(i)];
    for (int i = axis + 1; i < a.rank(); ++i) inner *= s[static_cast<std::size_t>(i)];
    const int n = s[static_cast<std::size_t>(axis)];
    std::vector<T> value(a.data().size());
    const auto& av = a.data();
    for (int o = 0; o < outer; ++o) {
        for (int in = 0; in < inner; ++in) {
            const std::int64_t base = static_cast<std::int64_t>(o) * n * inner + in;
            T mx = -std::numeric_limits<T>::infinity();
            for (int j = 0; j < n; ++j) mx = std::max(mx, av[static_cast<std::size_t>(base + j * inner)]);
            T sum = T(0);
            for (int j = 0; j < n; ++j) {
                const T e = std::exp(av[static_cast<std::size_t>(base + j * inner)] - mx);
                value[static_cast<std::size_t>(base + j * inner)] = e;
                sum += e;
            }
            for (int j = 0; j < n; ++j) value[static_cast<std::size_t>(base + j * inner)] /= sum;
        }
    }
    auto backprop = [outer, inner, n](Node<T>& out) {
        auto& p = *out.parents[0];
        p.ensure_grad();
        for (int o = 0; o < outer; ++o) {
            for (int in = 0; in < inner; ++in) {
                const std::int64_t base = static_cast<std::int64_t>(o) * n * inner + in;
                T dot = T(0);
                for (int j = 0; j < n; ++j) {
                    const auto k = static_cast<std::size_t>(base + j * inner);
                    dot += out.grad[k] * out.value[k];
                }
                for (int j = 0; j < n; ++j) {
                    const auto k = static_cast<std::size_t>(base + j * inner);
                    p.grad[k] += out.value[k] * (out.grad[k] - dot);
                }
            }
        }
    };
    return detail::make_result<T>(a.shape(), std::move(value), {a}, std::move(backprop));
}

// ---------------------------------------------------------------------------
// Shape ops

template <class T>
Tensor<T> reshape(const Tensor<T>& a, Shape new_shape) {
    check_shape(numel(new_shape) == a.size(),
                "reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(new_shape));
    std::vector<T> value = a.data();
    auto backprop = [](Node<T>& out) {
        auto& p = *out.parents[0];
        p.ensure_grad();
        for (std::size_t i = 0; i < out.grad.size(); ++i) p.grad[i] += out.grad[i];
    };
    return detail::make_result<T>(std::move(new_shape), std::move(value), {a}, std::move(backprop));
}

template <class T>
Tensor<T> transpose2d(const Tensor<T>& a) {
    check_shape(a.rank() == 2, "transpose2d: rank-2 tensor required, got " + shape_str(a.shape()));
    const int m = a.dim(0), n = a.dim(1);
    std::vector<T> value(a.data().size());
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
            value[static_cast<std::size_t>(j) * m + i] = a.data()[static_cast<std::size_t>(i) * n + j];
    auto backprop = [m, n](Node<T>& out) {
        auto& p = *out.parents[0];
        p.ensure_grad();
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j)
                p.grad[static_cast<std::size_t>(i) * n + j] += out.grad[static_cast<std::size_t>(j) * m + i];
    };
    return detail::make_result<T>({n, m}, std::move(value), {a}, std::move(backprop));
}

template <class T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, int axis) {
    check_shape(!parts.empty(), "concat: needs at least one tensor");
    const Shape& first = parts[0].shape();
    check_shape(axis >= 0 && axis < parts[0].rank(), "concat: axis out of range");
    Shape out_shape = first;
    int axis_total = 0;
    for (const auto& p : parts) {
        check_shape(p.rank() == parts[0].rank(), "concat: rank mismatch");
        for (int d = 0; d < p.rank(); ++d) {
            if (d != axis) {
                check_shape(p.dim(d) == first[static_cast<std::size_t>(d)],
                            "concat: shape mismatch " + shape_str(p.shape()) + " vs " + shape_str(first));
            }
        }
        axis_total += p.dim(axis);
    }
    out_shape[static_cast<std::size_t>(axis)] = axis_total;

    int outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= first[static_cast<std::size_t>(i)];
    for (int i = axis + 1; i < parts[0].rank(); ++i) inner *= first[static_cast<std::size_t>(i)];

    std::vector<T> value(static_cast<std::size_t>(numel(out_shape)));
    std::vector<int> extents;
    extents.reserve(parts.size());
    for (const auto& p : parts) extents.push_back(p.dim(axis));

    std::int64_t offset = 0;
    for (std::size_t pi = 0; pi < parts.size(); ++pi) {
        const auto& src = parts[pi].data();
        const int e = extents[pi];
        for (int o = 0; o < outer; ++o) {
            std::copy_n(src.begin() + static_cast<std::int64_t>(o) * e * inner, static_cast<std::int64_t>(e) * inner,
                        value.begin() + static_cast<std::int64_t>(o) * axis_total * inner + offset * inner);
        }
        offset += e;
    }

    auto backprop = [outer, inner, axis_total, extents](Node<T>& out) {
        std::int64_t off = 0;
        for (std::size_t pi = 0; pi < out.parents.size(); ++pi) {
            auto& p = *out.parents[pi];
            const int e = extents[pi];
            if (p.requires_grad) {
                p.ensure_grad();
                for (int o = 0; o < outer; ++o) {
                    const std::int64_t src = static_cast<std::int64_t>(o) * axis_total * inner + off * inner;
                    const std::int64_t dst = static_cast<std::int64_t>(o) * e * inner;
                    for (std::int64_t i = 0; i < static_cast<std::int64_t>(e) * inner; ++i) {
                        p.grad[static_cast<std::size_t>(dst + i)] += out.grad[static_cast<std::size_t>(src + i)];
                    }
                }
            }
            off += e;
        }
    };
    return detail::make_result<T>(std::move(out_shape), std::move(value), parts, std::move(backprop));
}

// Single element of a rank-1 tensor, kept differentiable.
template <class T>
Tensor<T> select(const Tensor<T>& a, int index) {
    check_shape(a.rank() == 1, "select: rank-1 tensor required, got " + shape_str(a.shape()));
    check_shape(index >= 0 && index < a.dim(0), "select: index out of range");
    std::vector<T> value{a.data()[static_cast<std::size_t>(index)]};
    auto backprop = [index](Node<T>& out) {
        auto& p = *out.parents[0];
        p.ensure_grad();
        p.grad[static_cast<std::size_t>(index)] += out.grad[0];
    };
    return detail::make_result<T>({1}, std::move(value), {a}, std::move(backprop));
}

// ---------------------------------------------------------------------------
// Matrix product and convolution

template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    check_shape(a.rank() == 2 && b.rank() == 2, "matmul: rank-2 tensors required");
    check_shape(a.dim(1) == b.dim(0),
                "matmul: inner dimensions disagree, " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
    std::vector<T> value(static_cast<std::size_t>(m) * n);
    kernels::matmul_forward(a.data().data(), b.data().data(), value.data(), m, k, n);
    auto backprop = [m, k, n](Node<T>& out) {
        auto& pa = *out.parents[0];
        auto& pb = *out.parents[1];
        if (pa.requires_grad) {
            pa.ensure_grad();
            kernels::matmul_backward_a(out.grad.data(), pb.value.data(), pa.grad.data(), m, k, n);
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            kernels::matmul_backward_b(out.grad.data(), pa.value.data(), pb.grad.data(), m, k, n);
        }
    };
    return detail::make_result<T>({m, n}, std::move(value), {a, b}, std::move(backprop));
}

// Cross-correlation over C×H×W with dilation; pad = dilation*(k-1)/2 keeps
// the resolution for odd k at stride 1.
template <class T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias, int stride = 1,
                 int padding = 0, int dilation = 1) {
    check_shape(input.rank() == 3, "conv2d: input must be C×H×W, got " + shape_str(input.shape()));
    check_shape(weight.rank() == 4, "conv2d: weight must be K×C×kh×kw, got " + shape_str(weight.shape()));
    check_shape(bias.rank() == 1 && bias.dim(0) == weight.dim(0), "conv2d: bias must be K");
    check_shape(input.dim(0) == weight.dim(1), "conv2d: input channels " + std::to_string(input.dim(0)) +
                                                   " do not match weight channels " + std::to_string(weight.dim(1)));
    check_shape(stride >= 1 && dilation >= 1 && padding >= 0, "conv2d: invalid stride/padding/dilation");
    Conv2dGeom g;
    g.in_c = input.dim(0);
    g.in_h = input.dim(1);
    g.in_w = input.dim(2);
    g.out_c = weight.dim(0);
    g.kh = weight.dim(2);
    g.kw = weight.dim(3);
    g.stride = stride;
    g.padding = padding;
    g.dilation = dilation;
    g.out_h = conv2d_out_extent(g.in_h, g.kh, stride, padding, dilation);
    g.out_w = conv2d_out_extent(g.in_w, g.kw, stride, padding, dilation);
    check_shape(g.out_h >= 1 && g.out_w >= 1, "conv2d: kernel does not fit input " + shape_str(input.shape()));
    std::vector<T> value(static_cast<std::size_t>(g.out_c) * g.out_h * g.out_w);
    kernels::conv2d_forward(input.data().data(), weight.data().data(), bias.data().data(), value.data(), g);
    auto backprop = [g](Node<T>& out) {
        auto& in = *out.parents[0];
        auto& w = *out.parents[1];
        auto& b = *out.parents[2];
        if (in.requires_grad) {
            in.ensure_grad();
            kernels::conv2d_backward_input(out.grad.data(), w.value.data(), in.grad.data(), g);
        }
        if (w.requires_grad) {
            w.ensure_grad();
            kernels::conv2d_backward_weight(out.grad.data(), in.value.data(), w.grad.data(), g);
        }
        if (b.requires_grad) {
            b.ensure_grad();
            kernels::conv2d_backward_bias(out.grad.data(), b.grad.data(), g);
        }
    };
    return detail::make_result<T>({g.out_c, g.out_h, g.out_w}, std::move(value), {input, weight, bias},
                                  std::move(backprop));
}

// ---------------------------------------------------------------------------
// Pooling and resampling

template <class T>
Tensor<T> global_avg_pool(const Tensor<T>& f) {
    check_shape(f.rank() == 3, "global_avg_pool: C×H×W required, got " + shape_str(f.shape()));
    const int c = f.dim(0), hw = f.dim(1) * f.dim(2);
    std::vector<T> value(static_cast<std::size_t>(c));
    for (int i = 0; i < c; ++i) {
        T acc = T(0);
        for (int j = 0; j < hw; ++j) acc += f.data()[static_cast<std::size_t>(i) * hw + j];
        value[static_cast<std::size_t>(i)] = acc / static_cast<T>(hw);
    }
    auto backprop = [c, hw](Node<T>& out) {
        auto& p = *out.parents[0];
        p.ensure_grad();
        for (int i = 0; i < c; ++i) {
            const T g = out.grad[static_cast<std::size_t>(i)] / static_cast<T>(hw);
            for (int j = 0; j < hw; ++j) p.grad[static_cast<std::size_t>(i) * hw + j] += g;
        }
    };
    return detail::make_result<T>({c}, std::move(value), {f}, std::move(backprop));
}

template <class T>
Tensor<T> global_max_pool(const Tensor<T>& f) {
    check_shape(f.rank() == 3, "global_max_pool: C×H×W required, got " + shape_str(f.shape()));
    const int c = f.dim(0), hw = f.dim(1) * f.dim(2);
    std::vector<T> value(static_cast<std::size_t>(c));
    std::vector<int> arg(static_cast<std::size_t>(c));
    for (int i = 0; i < c; ++i) {
        int best = 0;
        for (int j = 1; j < hw; ++j) {
            if (f.data()[static_cast<std::size_t>(i) * hw + j] > f.data()[static_cast<std::size_t>(i) * hw + best])
                best = j;
        }
        arg[static_cast<std::size_t>(i)] = best;
        value[static_cast<std::size_t>(i)] = f.data()[static_cast<std::size_t>(i) * hw + best];
    }
    auto backprop = [c, hw, arg](Node<T>& out) {
        auto& p = *out.parents[0];
        p.ensure_grad();
        for (int i = 0; i < c; ++i) {
            p.grad[static_cast<std::size_t>(i) * hw + arg[static_cast<std::size_t>(i)]] +=
                out.grad[static_cast<std::size_t>(i)];
        }
    };
    return detail::make_result<T>({c}, std::move(value), {f}, std::move(backprop));
}

template <class T>
Tensor<T> channel_avg_pool(const Tensor<T>& f) {
    check_shape(f.rank() == 3, "channel_avg_pool: C×H×W required, got " + shape_str(f.shape()));
    const int c = f.dim(0), hw = f.dim(1) * f.dim(2);
    std::vector<T> value(static_cast<std::size_t>(hw), T(0));
    for (int i = 0; i < c; ++i)
        for (int j = 0; j < hw; ++j) value[static_cast<std::size_t>(j)] += f.data()[static_cast<std::size_t>(i) * hw + j];
    for (int j = 0; j < hw; ++j) value[static_cast<std::size_t>(j)] /= static_cast<T>(c);
    auto backprop = [c, hw](Node<T>& out) {
        auto& p = *out.parents[0];
        p.ensure_grad();
        for (int i = 0; i < c; ++i)
            for (int j = 0; j < hw; ++j)
                p.grad[static_cast<std::size_t>(i) * hw + j] += out.grad[static_cast<std::size_t>(j)] / static_cast<T>(c);
    };
    return detail::make_result<T>({1, f.dim(1), f.dim(2)}, std::move(value), {f}, std::move(backprop));
}

template <class T>
Tensor<T> channel_max_pool(const Tensor<T>& f) {
    check_shape(f.rank() == 3, "channel_max_pool: C×H×W required, got " + shape_str(f.shape()));
    const int c = f.dim(0), hw = f.dim(1) * f.dim(2);
    std::vector<T> value(static_cast<std::size_t>(hw));
    std::vector<int> arg(static_cast<std::size_t>(hw));
    for (int j = 0; j < hw; ++j) {
        int best = 0;
        for (int i = 1; i < c; ++i) {
            if (f.data()[static_cast<std::size_t>(i) * hw + j] > f.data()[static_cast<std::size_t>(best) * hw + j])
                best = i;
        }
        arg[static_cast<std::size_t>(j)] = best;
        value[static_cast<std::size_t>(j)] = f.data()[static_cast<std::size_t>(best) * hw + j];
    }
    auto backprop = [hw, arg](Node<T>& out) {
        auto& p = *out.parents[0];
        p.ensure_grad();
        for (int j = 0; j < hw; ++j) {
            p.grad[static_cast<std::size_t>(arg[static_cast<std::size_t>(j)]) * hw + j] +=
                out.grad[static_cast<std::size_t>(j)];
        }
    };
    return detail::make_result<T>({1, f.dim(1), f.dim(2)}, std::move(value), {f}, std::move(backprop));
}

template <class T>
Tensor<T> spatial_max_pool(const Tensor<T>& f, int kernel, int stride) {
    check_shape(f.rank() == 3, "spatial_max_pool: C×H×W required, got " + shape_str(f.shape()));
    check_shape(kernel >= 1 && stride >= 1, "spatial_max_pool: invalid kernel/stride");
    const int c = f.dim(0), h = f.dim(1), w = f.dim(2);
    check_shape(kernel <= h && kernel <= w, "spatial_max_pool: kernel larger than input " + shape_str(f.shape()));
    const int oh = (h - kernel) / stride + 1;
    const int ow = (w - kernel) / stride + 1;
    std::vector<T> value(static_cast<std::size_t>(c) * oh * ow);
    std::vector<int> arg(value.size());
    for (int ch = 0; ch < c; ++ch) {
        const T* src = f.data().data() + static_cast<std::int64_t>(ch) * h * w;
        for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox) {
                int best = (oy * stride) * w + ox * stride;
                for (int ky = 0; ky < kernel; ++ky) {
                    for (int kx = 0; kx < kernel; ++kx) {
                        const int idx = (oy * stride + ky) * w + ox * stride + kx;
                        if (src[idx] > src[best]) best = idx;
                    }
                }
                const auto o = static_cast<std::size_t>((static_cast<std::int64_t>(ch) * oh + oy) * ow + ox);
                value[o] = src[best];
                arg[o] = ch * h * w + best;
            }
        }
    }
    auto backprop = [arg](Node<T>& out) {
        auto& p = *out.parents[0];
        p.ensure_grad();
        for (std::size_t o = 0; o < out.grad.size(); ++o) p.grad[static_cast<std::size_t>(arg[o])] += out.grad[o];
    };
    return detail::make_result<T>({c, oh, ow}, std::move(value), {f}, std::move(backprop));
}

template <class T>
Tensor<T> upsample_bilinear(const Tensor<T>& f, int out_h, int out_w) {
    check_shape(f.rank() == 3, "upsample_bilinear: C×H×W required, got " + shape_str(f.shape()));
    check_shape(out_h >= 1 && out_w >= 1, "upsample_bilinear: invalid output size");
    const int c = f.dim(0), h = f.dim(1), w = f.dim(2);
    const T sy = static_cast<T>(h) / static_cast<T>(out_h);
    const T sx = static_cast<T>(w) / static_cast<T>(out_w);
    // Per-axis source coordinates (half-pixel convention), shared by all channels.
    std::vector<int> y0(static_cast<std::size_t>(out_h)), y1(static_cast<std::size_t>(out_h));
    std::vector<T> wy(static_cast<std::size_t>(out_h));
    for (int oy = 0; oy < out_h; ++oy) {
        T src = (static_cast<T>(oy) + T(0.5)) * sy - T(0.5);
        src = std::min(std::max(src, T(0)), static_cast<T>(h - 1));
        const int lo = static_cast<int>(std::floor(src));
        y0[static_cast<std::size_t>(oy)] = lo;
        y1[static_cast<std::size_t>(oy)] = std::min(lo + 1, h - 1);
        wy[static_cast<std::size_t>(oy)] = src - static_cast<T>(lo);
    }
    std::vector<int> x0(static_cast<std::size_t>(out_w)), x1(static_cast<std::size_t>(out_w));
    std::vector<T> wx(static_cast<std::size_t>(out_w));
    for (int ox = 0; ox < out_w; ++ox) {
        T src = (static_cast<T>(ox) + T(0.5)) * sx - T(0.5);
        src = std::min(std::max(src, T(0)), static_cast<T>(w - 1));
        const int lo = static_cast<int>(std::floor(src));
        x0[static_cast<std::size_t>(ox)] = lo;
        x1[static_cast<std::size_t>(ox)] = std::min(lo + 1, w - 1);
        wx[static_cast<std::size_t>(ox)] = src - static_cast<T>(lo);
    }
    std::vector<T> value(static_cast<std::size_t>(c) * out_h * out_w);
    for (int ch = 0; ch < c; ++ch) {
        const T* src = f.data().data() + static_cast<std::int64_t>(ch) * h * w;
        T* dst = value.data() + static_cast<std::int64_t>(ch) * out_h * out_w;
        for (int oy = 0; oy < out_h; ++oy) {
            for (int ox = 0; ox < out_w; ++ox) {
                const T fy = wy[static_cast<std::size_t>(oy)], fx = wx[static_cast<std::size_t>(ox)];
                const T v00 = src[y0[static_cast<std::size_t>(oy)] * w + x0[static_cast<std::size_t>(ox)]];
                const T v01 = src[y0[static_cast<std::size_t>(oy)] * w + x1[static_cast<std::size_t>(ox)]];
                const T v10 = src[y1[static_cast<std::size_t>(oy)] * w + x0[static_cast<std::size_t>(ox)]];
                const T v11 = src[y1[static_cast<std::size_t>(oy)] * w + x1[static_cast<std::size_t>(ox)]];
                dst[oy * out_w + ox] =
                    (T(1) - fy) * ((T(1) - fx) * v00 + fx * v01) + fy * ((T(1) - fx) * v10 + fx * v11);
            }
        }
    }
    auto backprop = [c, h, w, out_h, out_w, y0, y1, wy, x0, x1, wx](Node<T>& out) {
        auto& p = *out.parents[0];
        p.ensure_grad();
        for (int ch = 0; ch < c; ++ch) {
            T* gin = p.grad.data() + static_cast<std::int64_t>(ch) * h * w;
            const T* gout = out.grad.data() + static_cast<std::int64_t>(ch) * out_h * out_w;
            for (int oy = 0; oy < out_h; ++oy) {
                for (int ox = 0; ox < out_w; ++ox) {
                    const T g = gout[oy * out_w + ox];
                    const T fy = wy[static_cast<std::size_t>(oy)], fx = wx[static_cast<std::size_t>(ox)];
                    gin[y0[static_cast<std::size_t>(oy)] * w + x0[static_cast<std::size_t>(ox)]] +=
                        g * (T(1) - fy) * (T(1) - fx);
                    gin[y0[static_cast<std::size_t>(oy)] * w + x1[static_cast<std::size_t>(ox)]] += g * (T(1) - fy) * fx;
                    gin[y1[static_cast<std::size_t>(oy)] * w + x0[static_cast<std::size_t>(ox)]] += g * fy * (T(1) - fx);
                    gin[y1[static_cast<std::size_t>(oy)] * w + x1[static_cast<std::size_t>(ox)]] += g * fy * fx;
                }
            }
        }
    };
    return detail::make_result<T>({c, out_h, out_w}, std::move(value), {f}, std::move(backprop));
}

// ---------------------------------------------------------------------------
// Reductions

template <class T>
Tensor<T> sum(const Tensor<T>& a) {
    T acc = T(0);
    for (T v : a.data()) acc += v;
    auto backprop = [](Node<T>& out) {
        auto& p = *out.parents[0];
        p.ensure_grad();
        for (auto& g : p.grad) g += out.grad[0];
    };
    return detail::make_result<T>({1}, {acc}, {a}, std::move(backprop));
}

template <class T>
Tensor<T> mean(const Tensor<T>& a) {
    return scale(sum(a), T(1) / static_cast<T>(a.size()));
}

namespace detail {
template <class T>
Tensor<T> reduce_extreme(const Tensor<T>& a, bool want_max) {
    int best = 0;
    for (int i = 1; i < a.size(); ++i) {
        const bool better = want_max ? a.data()[static_cast<std::size_t>(i)] > a.data()[static_cast<std::size_t>(best)]
                                     : a.data()[static_cast<std::size_t>(i)] < a.data()[static_cast<std::size_t>(best)];
        if (better) best = i;
    }
    auto backprop = [best](Node<T>& out) {
        auto& p = *out.parents[0];
        p.ensure_grad();
        p.grad[static_cast<std::size_t>(best)] += out.grad[0];
    };
    return make_result<T>({1}, {a.data()[static_cast<std::size_t>(best)]}, {a}, std::move(backprop));
}
}  // namespace detail

template <class T>
Tensor<T> reduce_max(const Tensor<T>& a) {
    return detail::reduce_extreme(a, true);
}
template <class T>
Tensor<T> reduce_min(const Tensor<T>& a) {
    return detail::reduce_extreme(a, false);
}

// ---------------------------------------------------------------------------
// Losses

// Mean binary cross-entropy from logits in log-sum-exp form:
// max(z,0) - z*y + log(1 + exp(-|z|)), finite for all finite logits.
template <class T>
Tensor<T> bce_with_logits(const Tensor<T>& logits, const Tensor<T>& target) {
    check_shape(logits.shape() == target.shape(), "bce_with_logits: shape mismatch " + shape_str(logits.shape()) +
                                                      " vs " + shape_str(target.shape()));
    const auto& z = logits.data();
    const auto& y = target.data();
    T acc = T(0);
    for (std::size_t i = 0; i < z.size(); ++i) {
        acc += std::max(z[i], T(0)) - z[i] * y[i] + std::log1p(std::exp(-std::abs(z[i])));
    }
    const T n = static_cast<T>(z.size());
    auto backprop = [n](Node<T>& out) {
        auto& pz = *out.parents[0];
        auto& py = *out.parents[1];
        const T g = out.grad[0] / n;
        if (pz.requires_grad) {
            pz.ensure_grad();
            for (std::size_t i = 0; i < pz.value.size(); ++i) {
                const T x = pz.value[i];
                const T s = (x >= T(0)) ? T(1) / (T(1) + std::exp(-x)) : std::exp(x) / (T(1) + std::exp(x));
                pz.grad[i] += g * (s - py.value[i]);
            }
        }
        if (py.requires_grad) {
            py.ensure_grad();
            for (std::size_t i = 0; i < py.value.size(); ++i) py.grad[i] += -g * pz.value[i];
        }
    };
    return detail::make_result<T>({1}, {acc / n}, {logits, target}, std::move(backprop));
}

// ---------------------------------------------------------------------------
// Initialization and conversion helpers

template <class T>
Tensor<T> uniform_init(Shape shape, T lo, T hi, Rng& rng, bool requires_grad = true) {
    std::vector<T> data(static_cast<std::size_t>(numel(shape)));
    for (auto& v : data) v = static_cast<T>(rng.uniform(static_cast<double>(lo), static_cast<double>(hi)));
    return Tensor<T>::from_data(std::move(shape), std::move(data), requires_grad);
}

// Uniform ±sqrt(1/fan_in); the standard substitute for pretrained weights.
template <class T>
Tensor<T> fanin_init(Shape shape, int fan_in, Rng& rng, bool requires_grad = true) {
    const T bound = static_cast<T>(std::sqrt(1.0 / static_cast<double>(fan_in)));
    return uniform_init<T>(std::move(shape), -bound, bound, rng, requires_grad);
}

template <class To, class From>
Tensor<To> cast(const Tensor<From>& a, bool requires_grad = false) {
    std::vector<To> data(a.data().size());
    for (std::size_t i = 0; i < data.size(); ++i) data[i] = static_cast<To>(a.data()[i]);
    return Tensor<To>::from_data(a.shape(), std::move(data), requires_grad);
}

template <class T>
bool all_finite(const Tensor<T>& a) {
    for (T v : a.data())
        if (!std::isfinite(v)) return false;
    return true;
}

}  // namespace rfnet

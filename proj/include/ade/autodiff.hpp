#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "ade/tensor.hpp"

namespace ade {

/// Define-by-run tape. Primitives execute forward eagerly and, when the
/// result carries gradients, push a closure that propagates adjoints from
/// the output into the inputs. backward() replays the closures in exact
/// reverse execution order and consumes the tape.
class Tape {
public:
    void record(std::function<void()> backward_op) { ops_.push_back(std::move(backward_op)); }
    size_t size() const { return ops_.size(); }

    /// loss must be a scalar (one element) with gradients enabled.
    void backward(const TensorPtr& loss) {
        if (loss->numel() != 1)
            throw ShapeError("backward: loss must be scalar, got shape " +
                             shape_string(loss->shape()));
        if (!loss->requires_grad())
            throw std::invalid_argument("backward: loss does not depend on any gradient tensor");
        loss->grad()[0] += real(1);
        for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
        ops_.clear();
    }

private:
    std::vector<std::function<void()>> ops_;
};

namespace detail {

inline bool same_shape(const TensorPtr& a, const TensorPtr& b) {
    return a->shape() == b->shape();
}

inline TensorPtr result_like(const std::vector<size_t>& shape,
                             std::initializer_list<const TensorPtr*> inputs) {
    bool rg = false;
    for (const TensorPtr* t : inputs) rg = rg || (*t)->requires_grad();
    return make_tensor(shape, rg);
}

[[noreturn]] inline void shape_fail(const char* op, const TensorPtr& a, const TensorPtr& b) {
    throw ShapeError(std::string(op) + ": incompatible shapes " + shape_string(a->shape()) +
                     " and " + shape_string(b->shape()));
}

}  // namespace detail

// ---- elementwise binary ----

inline TensorPtr add(Tape& tape, const TensorPtr& a, const TensorPtr& b) {
    if (!detail::same_shape(a, b)) detail::shape_fail("add", a, b);
    auto out = detail::result_like(a->shape(), {&a, &b});
    const size_t n = out->numel();
    for (size_t i = 0; i < n; ++i) out->at(i) = a->at(i) + b->at(i);
    if (out->requires_grad())
        tape.record([a, b, out] {
            const size_t n = out->numel();
            if (a->requires_grad())
                for (size_t i = 0; i < n; ++i) a->grad()[i] += out->grad()[i];
            if (b->requires_grad())
                for (size_t i = 0; i < n; ++i) b->grad()[i] += out->grad()[i];
        });
    return out;
}

inline TensorPtr sub(Tape& tape, const TensorPtr& a, const TensorPtr& b) {
    if (!detail::same_shape(a, b)) detail::shape_fail("sub", a, b);
    auto out = detail::result_like(a->shape(), {&a, &b});
    const size_t n = out->numel();
    for (size_t i = 0; i < n; ++i) out->at(i) = a->at(i) - b->at(i);
    if (out->requires_grad())
        tape.record([a, b, out] {
            const size_t n = out->numel();
            if (a->requires_grad())
                for (size_t i = 0; i < n; ++i) a->grad()[i] += out->grad()[i];
            if (b->requires_grad())
                for (size_t i = 0; i < n; ++i) b->grad()[i] -= out->grad()[i];
        });
    return out;
}

/// Elementwise (Hadamard) product.
inline TensorPtr mul(Tape& tape, const TensorPtr& a, const TensorPtr& b) {
    if (!detail::same_shape(a, b)) detail::shape_fail("mul", a, b);
    auto out = detail::result_like(a->shape(), {&a, &b});
    const size_t n = out->numel();
    for (size_t i = 0; i < n; ++i) out->at(i) = a->at(i) * b->at(i);
    if (out->requires_grad())
        tape.record([a, b, out] {
            const size_t n = out->numel();
            if (a->requires_grad())
                for (size_t i = 0; i < n; ++i) a->grad()[i] += out->grad()[i] * b->at(i);
            if (b->requires_grad())
                for (size_t i = 0; i < n; ++i) b->grad()[i] += out->grad()[i] * a->at(i);
        });
    return out;
}

inline TensorPtr scalar_mul(Tape& tape, const TensorPtr& a, real c) {
    auto out = detail::result_like(a->shape(), {&a});
    const size_t n = out->numel();
    for (size_t i = 0; i < n; ++i) out->at(i) = a->at(i) * c;
    if (out->requires_grad())
        tape.record([a, out, c] {
            const size_t n = out->numel();
            for (size_t i = 0; i < n; ++i) a->grad()[i] += out->grad()[i] * c;
        });
    return out;
}

// ---- matrix products ----
// Rank dispatch: {m,n}x{n,p} -> {m,p}; {m,n}x{n} -> {m}; {m}x{m,n} -> {n};
// {n}x{n} -> {1} (dot product).

inline TensorPtr matmul(Tape& tape, const TensorPtr& a, const TensorPtr& b) {
    const size_t ra = a->rank(), rb = b->rank();
    if (ra == 2 && rb == 2) {
        if (a->dim(1) != b->dim(0)) detail::shape_fail("matmul", a, b);
        const size_t m = a->dim(0), n = a->dim(1), p = b->dim(1);
        auto out = detail::result_like({m, p}, {&a, &b});
        for (size_t i = 0; i < m; ++i)
            for (size_t k = 0; k < n; ++k) {
                const real aik = a->at(i, k);
                for (size_t j = 0; j < p; ++j) out->at(i, j) += aik * b->at(k, j);
            }
        if (out->requires_grad())
            tape.record([a, b, out, m, n, p] {
                if (a->requires_grad())
                    for (size_t i = 0; i < m; ++i)
                        for (size_t j = 0; j < p; ++j) {
                            const real g = out->grad()[i * p + j];
                            for (size_t k = 0; k < n; ++k)
                                a->grad()[i * n + k] += g * b->at(k, j);
                        }
                if (b->requires_grad())
                    for (size_t i = 0; i < m; ++i)
                        for (size_t k = 0; k < n; ++k) {
                            const real av = a->at(i, k);
                            for (size_t j = 0; j < p; ++j)
                                b->grad()[k * p + j] += av * out->grad()[i * p + j];
                        }
            });
        return out;
    }
    if (ra == 2 && rb == 1) {
        if (a->dim(1) != b->dim(0)) detail::shape_fail("matmul", a, b);
        const size_t m = a->dim(0), n = a->dim(1);
        auto out = detail::result_like({m}, {&a, &b});
        for (size_t i = 0; i < m; ++i) {
            real s = 0;
            const real* row = a->data() + i * n;
            for (size_t k = 0; k < n; ++k) s += row[k] * b->at(k);
            out->at(i) = s;
        }
        if (out->requires_grad())
            tape.record([a, b, out, m, n] {
                if (a->requires_grad())
                    for (size_t i = 0; i < m; ++i) {
                        const real g = out->grad()[i];
                        for (size_t k = 0; k < n; ++k) a->grad()[i * n + k] += g * b->at(k);
                    }
                if (b->requires_grad())
                    for (size_t i = 0; i < m; ++i) {
                        const real g = out->grad()[i];
                        const real* row = a->data() + i * n;
                        for (size_t k = 0; k < n; ++k) b->grad()[k] += g * row[k];
                    }
            });
        return out;
    }
    if (ra == 1 && rb == 2) {
        if (a->dim(0) != b->dim(0)) detail::shape_fail("matmul", a, b);
        const size_t m = b->dim(0), n = b->dim(1);
        auto out = detail::result_like({n}, {&a, &b});
        for (size_t k = 0; k < m; ++k) {
            const real av = a->at(k);
            for (size_t j = 0; j < n; ++j) out->at(j) += av * b->at(k, j);
        }
        if (out->requires_grad())
            tape.record([a, b, out, m, n] {
                if (a->requires_grad())
                    for (size_t k = 0; k < m; ++k) {
                        real s = 0;
                        for (size_t j = 0; j < n; ++j) s += b->at(k, j) * out->grad()[j];
                        a->grad()[k] += s;
                    }
                if (b->requires_grad())
                    for (size_t k = 0; k < m; ++k) {
                        const real av = a->at(k);
                        for (size_t j = 0; j < n; ++j) b->grad()[k * n + j] += av * out->grad()[j];
                    }
            });
        return out;
    }
    if (ra == 1 && rb == 1) {
        if (a->dim(0) != b->dim(0)) detail::shape_fail("matmul", a, b);
        const size_t n = a->dim(0);
        auto out = detail::result_like({1}, {&a, &b});
        real s = 0;
        for (size_t k = 0; k < n; ++k) s += a->at(k) * b->at(k);
        out->at(0) = s;
        if (out->requires_grad())
            tape.record([a, b, out, n] {
                const real g = out->grad()[0];
                if (a->requires_grad())
                    for (size_t k = 0; k < n; ++k) a->grad()[k] += g * b->at(k);
                if (b->requires_grad())
                    for (size_t k = 0; k < n; ++k) b->grad()[k] += g * a->at(k);
            });
        return out;
    }
    detail::shape_fail("matmul", a, b);
}

// ---- structure ----

/// Concatenation of rank-1 tensors.
inline TensorPtr concat(Tape& tape, const std::vector<TensorPtr>& parts) {
    if (parts.empty()) throw ShapeError("concat: no inputs");
    size_t total = 0;
    bool rg = false;
    for (const TensorPtr& p : parts) {
        if (p->rank() != 1)
            throw ShapeError("concat: expects rank-1 inputs, got " + shape_string(p->shape()));
        total += p->dim(0);
        rg = rg || p->requires_grad();
    }
    auto out = make_tensor({total}, rg);
    size_t off = 0;
    for (const TensorPtr& p : parts) {
        std::copy(p->data(), p->data() + p->numel(), out->data() + off);
        off += p->numel();
    }
    if (rg)
        tape.record([parts, out] {
            size_t off = 0;
            for (const TensorPtr& p : parts) {
                if (p->requires_grad())
                    for (size_t i = 0; i < p->numel(); ++i) p->grad()[i] += out->grad()[off + i];
                off += p->numel();
            }
        });
    return out;
}

inline TensorPtr concat(Tape& tape, const TensorPtr& a, const TensorPtr& b) {
    return concat(tape, std::vector<TensorPtr>{a, b});
}

/// Stacks T rank-1 tensors of length m into an {m, T} matrix (one column each).
inline TensorPtr stack_cols(Tape& tape, const std::vector<TensorPtr>& cols) {
    if (cols.empty()) throw ShapeError("stack_cols: no inputs");
    const size_t m = cols.front()->dim(0);
    bool rg = false;
    for (const TensorPtr& c : cols) {
        if (c->rank() != 1 || c->dim(0) != m)
            throw ShapeError("stack_cols: expects rank-1 inputs of equal length, got " +
                             shape_string(c->shape()));
        rg = rg || c->requires_grad();
    }
    const size_t t = cols.size();
    auto out = make_tensor({m, t}, rg);
    for (size_t j = 0; j < t; ++j)
        for (size_t i = 0; i < m; ++i) out->at(i, j) = cols[j]->at(i);
    if (rg)
        tape.record([cols, out, m, t] {
            for (size_t j = 0; j < t; ++j)
                if (cols[j]->requires_grad())
                    for (size_t i = 0; i < m; ++i) cols[j]->grad()[i] += out->grad()[i * t + j];
        });
    return out;
}

inline TensorPtr slice(Tape& tape, const TensorPtr& a, size_t start, size_t len) {
    if (a->rank() != 1 || start + len > a->dim(0))
        throw ShapeError("slice: [" + std::to_string(start) + "," + std::to_string(start + len) +
                         ") out of range for shape " + shape_string(a->shape()));
    auto out = detail::result_like({len}, {&a});
    for (size_t i = 0; i < len; ++i) out->at(i) = a->at(start + i);
    if (out->requires_grad())
        tape.record([a, out, start, len] {
            for (size_t i = 0; i < len; ++i) a->grad()[start + i] += out->grad()[i];
        });
    return out;
}

// ---- elementwise unary ----

inline TensorPtr tanh(Tape& tape, const TensorPtr& a) {
    auto out = detail::result_like(a->shape(), {&a});
    const size_t n = out->numel();
    for (size_t i = 0; i < n; ++i) out->at(i) = std::tanh(a->at(i));
    if (out->requires_grad())
        tape.record([a, out] {
            const size_t n = out->numel();
            for (size_t i = 0; i < n; ++i) {
                const real y = out->at(i);
                a->grad()[i] += out->grad()[i] * (real(1) - y * y);
            }
        });
    return out;
}

inline TensorPtr sigmoid(Tape& tape, const TensorPtr& a) {
    auto out = detail::result_like(a->shape(), {&a});
    const size_t n = out->numel();
    for (size_t i = 0; i < n; ++i) {
        const real x = a->at(i);
        if (x >= 0) {
            out->at(i) = real(1) / (real(1) + std::exp(-x));
        } else {
            const real e = std::exp(x);
            out->at(i) = e / (real(1) + e);
        }
    }
    if (out->requires_grad())
        tape.record([a, out] {
            const size_t n = out->numel();
            for (size_t i = 0; i < n; ++i) {
                const real y = out->at(i);
                a->grad()[i] += out->grad()[i] * y * (real(1) - y);
            }
        });
    return out;
}

/// Natural log; caller guarantees positive inputs.
inline TensorPtr log(Tape& tape, const TensorPtr& a) {
    auto out = detail::result_like(a->shape(), {&a});
    const size_t n = out->numel();
    for (size_t i = 0; i < n; ++i) out->at(i) = std::log(a->at(i));
    if (out->requires_grad())
        tape.record([a, out] {
            const size_t n = out->numel();
            for (size_t i = 0; i < n; ++i) a->grad()[i] += out->grad()[i] / a->at(i);
        });
    return out;
}

// ---- softmax ----

namespace detail {

inline void softmax_span(const real* x, real* y, size_t n, size_t stride) {
    real mx = x[0];
    for (size_t i = 1; i < n; ++i) mx = std::max(mx, x[i * stride]);
    real sum = 0;
    for (size_t i = 0; i < n; ++i) {
        const real e = std::exp(x[i * stride] - mx);
        y[i * stride] = e;
        sum += e;
    }
    for (size_t i = 0; i < n; ++i) y[i * stride] /= sum;
}

// dx_i += y_i * (g_i - sum_j g_j y_j)
inline void softmax_backward_span(const real* y, const real* g, real* dx, size_t n,
                                  size_t stride) {
    real dot = 0;
    for (size_t i = 0; i < n; ++i) dot += g[i * stride] * y[i * stride];
    for (size_t i = 0; i < n; ++i) dx[i * stride] += y[i * stride] * (g[i * stride] - dot);
}

}  // namespace detail

/// Softmax over a rank-1 tensor, or over the designated axis of a rank-2
/// tensor (axis 0 normalizes each column, axis 1 each row).
inline TensorPtr softmax(Tape& tape, const TensorPtr& a, size_t axis = 0) {
    auto out = detail::result_like(a->shape(), {&a});
    if (a->rank() == 1) {
        detail::softmax_span(a->data(), out->data(), a->dim(0), 1);
    } else if (a->rank() == 2) {
        const size_t rows = a->dim(0), cols = a->dim(1);
        if (axis == 0) {
            for (size_t j = 0; j < cols; ++j)
                detail::softmax_span(a->data() + j, out->data() + j, rows, cols);
        } else if (axis == 1) {
            for (size_t i = 0; i < rows; ++i)
                detail::softmax_span(a->data() + i * cols, out->data() + i * cols, cols, 1);
        } else {
            throw ShapeError("softmax: axis must be 0 or 1 for rank-2 input");
        }
    } else {
        throw ShapeError("softmax: expects rank-1 or rank-2 input, got " +
                         shape_string(a->shape()));
    }
    if (out->requires_grad())
        tape.record([a, out, axis] {
            if (out->rank() == 1) {
                detail::softmax_backward_span(out->data(), out->grad(), a->grad(), out->dim(0), 1);
            } else {
                const size_t rows = out->dim(0), cols = out->dim(1);
                if (axis == 0)
                    for (size_t j = 0; j < cols; ++j)
                        detail::softmax_backward_span(out->data() + j, out->grad() + j,
                                                      a->grad() + j, rows, cols);
                else
                    for (size_t i = 0; i < rows; ++i)
                        detail::softmax_backward_span(out->data() + i * cols,
                                                      out->grad() + i * cols,
                                                      a->grad() + i * cols, cols, 1);
            }
        });
    return out;
}

// ---- reductions ----

inline TensorPtr sum(Tape& tape, const TensorPtr& a) {
    auto out = detail::result_like({1}, {&a});
    real s = 0;
    const size_t n = a->numel();
    for (size_t i = 0; i < n; ++i) s += a->at(i);
    out->at(0) = s;
    if (out->requires_grad())
        tape.record([a, out] {
            const real g = out->grad()[0];
            const size_t n = a->numel();
            for (size_t i = 0; i < n; ++i) a->grad()[i] += g;
        });
    return out;
}

inline TensorPtr mean(Tape& tape, const TensorPtr& a) {
    return scalar_mul(tape, sum(tape, a), real(1) / static_cast<real>(a->numel()));
}

// ---- loss ----

/// Binary cross-entropy of a scalar probability against a +1/-1 label, with
/// the probability clamped to [1e-12, 1 - 1e-12]. The clamp zeroes the
/// gradient outside its range.
inline TensorPtr bce(Tape& tape, const TensorPtr& prob, int label) {
    if (prob->numel() != 1)
        throw ShapeError("bce: probability must be scalar, got shape " +
                         shape_string(prob->shape()));
    if (label != 1 && label != -1) throw std::invalid_argument("bce: label must be +1 or -1");
    constexpr real kClamp = real(1e-12);
    const real y = label == 1 ? real(1) : real(0);
    const real p_raw = prob->at(0);
    const real p = std::min(std::max(p_raw, kClamp), real(1) - kClamp);
    auto out = detail::result_like({1}, {&prob});
    out->at(0) = -(y * std::log(p) + (real(1) - y) * std::log(real(1) - p));
    if (out->requires_grad())
        tape.record([prob, out, y, p, p_raw] {
            if (p_raw != p) return;  // clamped: locally flat
            prob->grad()[0] += out->grad()[0] * (p - y) / (p * (real(1) - p));
        });
    return out;
}

}  // namespace ade

#pragma once

#include <cstddef>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace ade {

#ifdef ADE_SINGLE_PRECISION
using real = float;
#else
using real = double;
#endif

class ShapeError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline std::string shape_string(const std::vector<size_t>& shape) {
    std::string s = "{";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ',';
        s += std::to_string(shape[i]);
    }
    return s + "}";
}

/// Dense row-major tensor. When requires_grad is set, grad holds the
/// accumulated adjoint with the same shape.
class Tensor {
public:
    Tensor(std::vector<size_t> shape, bool requires_grad)
        : shape_(std::move(shape)), requires_grad_(requires_grad) {
        size_t n = 1;
        for (size_t d : shape_) n *= d;
        value_.assign(n, real(0));
        if (requires_grad_) grad_.assign(n, real(0));
    }

    const std::vector<size_t>& shape() const { return shape_; }
    size_t rank() const { return shape_.size(); }
    size_t dim(size_t i) const { return shape_[i]; }
    size_t numel() const { return value_.size(); }
    bool requires_grad() const { return requires_grad_; }

    real* data() { return value_.data(); }
    const real* data() const { return value_.data(); }
    real* grad() { return grad_.data(); }
    const real* grad() const { return grad_.data(); }
    std::vector<real>& values() { return value_; }
    const std::vector<real>& values() const { return value_; }
    std::vector<real>& grads() { return grad_; }
    const std::vector<real>& grads() const { return grad_; }

    real& at(size_t i) { return value_[i]; }
    real at(size_t i) const { return value_[i]; }
    real& at(size_t i, size_t j) { return value_[i * shape_[1] + j]; }
    real at(size_t i, size_t j) const { return value_[i * shape_[1] + j]; }

    void zero_grad() { std::fill(grad_.begin(), grad_.end(), real(0)); }

private:
    std::vector<size_t> shape_;
    std::vector<real> value_;
    std::vector<real> grad_;
    bool requires_grad_;
};

using TensorPtr = std::shared_ptr<Tensor>;

inline TensorPtr make_tensor(std::vector<size_t> shape, bool requires_grad = false) {
    return std::make_shared<Tensor>(std::move(shape), requires_grad);
}

inline TensorPtr make_param(std::vector<size_t> shape) { return make_tensor(std::move(shape), true); }

inline TensorPtr make_constant(std::vector<size_t> shape, std::vector<real> values) {
    auto t = make_tensor(std::move(shape), false);
    if (values.size() != t->numel())
        throw ShapeError("constant: " + std::to_string(values.size()) + " values for shape " +
                         shape_string(t->shape()));
    t->values() = std::move(values);
    return t;
}

inline TensorPtr make_vector(std::vector<real> values) {
    const size_t n = values.size();
    return make_constant({n}, std::move(values));
}

}  // namespace ade

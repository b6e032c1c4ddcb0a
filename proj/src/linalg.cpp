// SPDX-License-Identifier: Apache-2.0
#include "rnnlab/linalg.hpp"

#include <cmath>
#include <stdexcept>

namespace rnnlab {

Vector affine(const Matrix& w, const std::vector<Vector>& inputs, const Vector& b) {
    Eigen::Index total = 0;
    for (const auto& x : inputs) total += x.size();
    if (total != w.cols()) {
        throw std::invalid_argument("affine: concat(inputs) has length " + std::to_string(total) +
                                    " but W has " + std::to_string(w.cols()) + " columns");
    }
    if (b.size() != w.rows()) {
        throw std::invalid_argument("affine: b has length " + std::to_string(b.size()) +
                                    " but W has " + std::to_string(w.rows()) + " rows");
    }
    Vector concat(total);
    Eigen::Index at = 0;
    for (const auto& x : inputs) {
        concat.segment(at, x.size()) = x;
        at += x.size();
    }
    return w * concat + b;
}

double activation_scalar(Activation kind, double x) {
    switch (kind) {
        case Activation::sigmoid: return 1.0 / (1.0 + std::exp(-x));
        case Activation::tanh: return std::tanh(x);
        case Activation::relu: return x > 0.0 ? x : 0.0;
    }
    return 0.0;
}

Vector activation(Activation kind, const Vector& x) {
    Vector y(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) y[i] = activation_scalar(kind, x[i]);
    return y;
}

double activation_grad_from_value(Activation kind, double y) {
    switch (kind) {
        case Activation::sigmoid: return y * (1.0 - y);
        case Activation::tanh: return 1.0 - y * y;
        case Activation::relu: return y > 0.0 ? 1.0 : 0.0;
    }
    return 0.0;
}

Vector elementwise(ElementwiseOp op, const Vector& a, const Vector& b) {
    if (a.size() != b.size()) {
        throw std::invalid_argument("elementwise: operand lengths differ (" + std::to_string(a.size()) +
                                    " vs " + std::to_string(b.size()) + ")");
    }
    switch (op) {
        case ElementwiseOp::mul: return a.cwiseProduct(b);
        case ElementwiseOp::add: return a + b;
        case ElementwiseOp::sub: return a - b;
    }
    return a;
}

bool all_finite(const Matrix& m) { return m.allFinite(); }
bool all_finite(const Vector& v) { return v.allFinite(); }

Activation parse_activation(const std::string& name) {
    if (name == "sigmoid") return Activation::sigmoid;
    if (name == "tanh") return Activation::tanh;
    if (name == "relu") return Activation::relu;
    throw std::invalid_argument("unknown activation: " + name);
}

std::string activation_name(Activation kind) {
    switch (kind) {
        case Activation::sigmoid: return "sigmoid";
        case Activation::tanh: return "tanh";
        case Activation::relu: return "relu";
    }
    return "?";
}

}  // namespace rnnlab

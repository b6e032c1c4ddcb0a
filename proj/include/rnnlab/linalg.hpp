// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace rnnlab {

// Dense row-major doubles. Eigen supplies the storage and the matrix
// products; everything the rest of the library needs goes through the
// small set of operations below.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

enum class Activation { sigmoid, tanh, relu };

// W * concat(inputs) + b. Inputs are concatenated in the given order.
// Throws std::invalid_argument naming the offending operand on a
// dimension mismatch.
Vector affine(const Matrix& w, const std::vector<Vector>& inputs, const Vector& b);

Vector activation(Activation kind, const Vector& x);
double activation_scalar(Activation kind, double x);

// Derivative expressed through the activation value y = f(x).
double activation_grad_from_value(Activation kind, double y);

enum class ElementwiseOp { mul, add, sub };

Vector elementwise(ElementwiseOp op, const Vector& a, const Vector& b);

bool all_finite(const Matrix& m);
bool all_finite(const Vector& v);

Activation parse_activation(const std::string& name);
std::string activation_name(Activation kind);

}  // namespace rnnlab

#pragma once

#include "landscape/core.hpp"

namespace landscape::kernels {

/// Full-batch gradient of the loss under the training convention: the
/// activation derivative takes the alpha_plus branch for z > 0 and the
/// alpha_minus branch for z <= 0.
struct Gradient {
  Matrix dW;  // |I| x d
  Matrix dH;  // |J| x |I|
};

// Serial reference implementations. These are the ground truth the parallel
// kernels are tested against and the baseline the benchmark compares with.
namespace serial {
Matrix residuals(const Network& net, const Dataset& data);
double loss(const Network& net, const Dataset& data);
Gradient loss_gradient(const Network& net, const Dataset& data);
}  // namespace serial

// OpenMP kernels. Every parallel loop writes to disjoint slots and final
// reductions run serially in index order, so results are bit-identical to
// the serial reference for any thread count. Small inputs skip the fork.
Matrix residuals(const Network& net, const Dataset& data);
double loss(const Network& net, const Dataset& data);
Gradient loss_gradient(const Network& net, const Dataset& data);

/// Gradient from precomputed residuals; lets a training loop share one
/// residual evaluation between the loss record and the step.
Gradient loss_gradient(const Network& net, const Dataset& data, const Matrix& e);

}  // namespace landscape::kernels

#pragma once

#include <cstdint>
#include <span>
#include <string>

#include "landscape/linalg.hpp"

namespace landscape {

/// Piecewise-linear activation with slope alpha_plus for z >= 0 and
/// alpha_minus for z < 0. The two slopes must differ.
struct Activation {
  double alpha_plus = 1.0;
  double alpha_minus = 0.0;

  double operator()(double z) const { return z >= 0.0 ? alpha_plus * z : alpha_minus * z; }

  /// Slope used by the training gradient; z <= 0 takes the negative branch,
  /// so a unit sitting exactly on a kink does not move under ReLU training.
  double train_slope(double z) const { return z > 0.0 ? alpha_plus : alpha_minus; }

  /// Slope selected by the sign of a reference value: alpha_plus when the
  /// reference is positive, alpha_minus when negative, the activation's own
  /// branch choice when the reference is zero.
  double branch_slope(int ref_sign, double z) const {
    if (ref_sign > 0) return alpha_plus;
    if (ref_sign < 0) return alpha_minus;
    return z >= 0.0 ? alpha_plus : alpha_minus;
  }
};

/// One-hidden-layer network y = H * act(W x).
/// Row i of W is the input weight of hidden neuron i; column i of H holds its
/// output weights.
struct Network {
  Matrix W;  // |I| x d
  Matrix H;  // |J| x |I|
  Activation act;

  std::size_t input_dim() const { return W.cols(); }
  std::size_t hidden_count() const { return W.rows(); }
  std::size_t output_dim() const { return H.rows(); }

  Vec h_col(std::size_t i) const {
    Vec v(H.rows());
    for (std::size_t j = 0; j < H.rows(); ++j) v[j] = H(j, i);
    return v;
  }
};

struct Dataset {
  Matrix X;  // |K| x d
  Matrix Y;  // |K| x |J|

  std::size_t sample_count() const { return X.rows(); }
  std::size_t input_dim() const { return X.cols(); }
  std::size_t output_dim() const { return Y.cols(); }
};

/// Throws std::invalid_argument on violated structural invariants
/// (input dimension must exceed 1, equal activation slopes, non-finite
/// entries, H/W shape disagreement).
void validate(const Network& net);
void validate(const Dataset& data);
void validate(const Network& net, const Dataset& data);

inline constexpr double kDefaultTolAct = 1e-12;

/// Sign of w_i . x_k per (neuron, sample) under a relative tolerance:
/// 0 when |w_i . x_k| <= tol * ||w_i|| * ||x_k||, else the strict sign.
/// Zero weights produce all-zero rows. The zero entries mark the samples on
/// whose orthogonal hyperplane the neuron sits, which is where the loss
/// stops being differentiable.
struct ActivationPattern {
  std::size_t neurons = 0, samples = 0;
  std::vector<std::int8_t> signs;  // row-major neurons x samples, values -1/0/+1

  std::int8_t at(std::size_t i, std::size_t k) const { return signs[i * samples + k]; }
};

int sign_with_tol(double value, double scale, double tol);

Vec forward(const Network& net, std::span<const double> x);
Matrix forward_all(const Network& net, const Dataset& data);  // |K| x |J|

/// 1/2 sum_k ||yhat_k - y_k||^2
double loss(const Network& net, const Dataset& data);

/// Entry (k, j) = yhat_kj - y_kj.
Matrix residuals(const Network& net, const Dataset& data);

ActivationPattern activation_pattern(const Network& net, const Dataset& data,
                                     double tol_act = kDefaultTolAct);

// Versioned JSON checkpoint. Finite values round-trip bit-exactly.
std::string save_checkpoint(const Network& net);
Network load_checkpoint(const std::string& bytes);

std::string save_dataset(const Dataset& data);
Dataset load_dataset(const std::string& bytes);

/// Parameter-space displacement, same shapes as the network weights.
struct Direction {
  Matrix dW;
  Matrix dH;

  bool zero() const;
  double norm() const;
  Direction& operator*=(double c);
};

Network displaced(const Network& net, const Direction& delta, double step);

std::string format17(double x);  // shortest 17-significant-digit decimal

}  // namespace landscape

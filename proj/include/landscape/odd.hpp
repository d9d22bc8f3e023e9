#pragma once

#include <optional>

#include "landscape/core.hpp"

namespace landscape::odd {

/// Decomposition of an input-weight perturbation into a signed radial part
/// along w/||w|| and a nonnegative tangential part orthogonal to it. For a
/// zero weight the radial part is zero by convention and the whole
/// perturbation counts as tangential.
struct RadialTangentialSplit {
  double delta_r = 0.0;
  double delta_s = 0.0;
  std::optional<Vec> u;  // radial direction, absent when w = 0
  std::optional<Vec> v;  // tangential direction, absent when the perturbation is radial
};

RadialTangentialSplit decompose(std::span<const double> w, std::span<const double> delta_w);

/// Residuals and activation pattern computed once and shared across the ODD
/// formulas, so every quantity keys off one consistent sector assignment.
struct Workspace {
  Matrix e;  // |K| x |J| residuals
  ActivationPattern pattern;
  double tol_act = kDefaultTolAct;

  static Workspace make(const Network& net, const Dataset& data,
                        double tol_act = kDefaultTolAct);
};

/// Sum over strictly active samples of alpha^(sign) * e_kj * x_k; samples on
/// the boundary (pattern 0) are excluded.
Vec d_vector(const Network& net, const Dataset& data, std::size_t j, std::size_t i,
             double tol_act = kDefaultTolAct);
Vec d_vector(const Network& net, const Dataset& data, const Workspace& ws, std::size_t j,
             std::size_t i);

/// d_vector plus the boundary samples assigned to the side selected by the
/// sign of v . x_k; samples with v . x_k = 0 contribute nothing.
/// v must be a unit tangential direction of w_i.
Vec d_vector_limit(const Network& net, const Dataset& data, std::size_t j, std::size_t i,
                   std::span<const double> v, double tol_act = kDefaultTolAct);
Vec d_vector_limit(const Network& net, const Dataset& data, const Workspace& ws, std::size_t j,
                   std::size_t i, std::span<const double> v);

/// Exact partial derivatives of the loss in the output weights:
/// entry (j, i) = w_i . d_ji.
Matrix grad_h(const Network& net, const Dataset& data, double tol_act = kDefaultTolAct);
Matrix grad_h(const Network& net, const Dataset& data, const Workspace& ws);

/// One-sided derivative along the radial direction of w_i; zero by
/// convention when w_i = 0.
double radial_derivative(const Network& net, const Dataset& data, std::size_t i,
                         double tol_act = kDefaultTolAct);
double radial_derivative(const Network& net, const Dataset& data, const Workspace& ws,
                         std::size_t i);

/// One-sided derivative along unit tangential direction v of w_i.
double tangential_derivative(const Network& net, const Dataset& data, std::size_t i,
                             std::span<const double> v, double tol_act = kDefaultTolAct);
double tangential_derivative(const Network& net, const Dataset& data, const Workspace& ws,
                             std::size_t i, std::span<const double> v);

/// First-order one-sided directional derivative of the loss along Delta,
/// assembled from the output-weight, radial and tangential parts.
double directional_odd(const Network& net, const Dataset& data, const Direction& delta,
                       double tol_act = kDefaultTolAct);

/// Largest step along delta for which no strictly-signed sample changes side,
/// i.e. the loss restricted to [P, P + step*delta] is a polynomial.
/// Returns +infinity when nothing can flip.
double sector_radius(const Network& net, const Dataset& data, const Direction& delta,
                     double tol_act = kDefaultTolAct);

struct OracleInconclusive : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// One-sided difference quotient (L(P + h*Delta) - L(P)) / h, with h halved
/// from `step` until the activation pattern is constant along the segment.
/// Throws OracleInconclusive if h underflows first. `used_step` reports the
/// accepted h.
double fd_oracle(const Network& net, const Dataset& data, const Direction& delta, double step,
                 double* used_step = nullptr, double tol_act = kDefaultTolAct);

/// Richardson-extrapolated limit of the one-sided quotient. Within a sector
/// the loss is a quartic polynomial of the step, so a few levels recover the
/// first-order coefficient to near machine precision.
double fd_limit(const Network& net, const Dataset& data, const Direction& delta,
                double initial_step = 1e-2, int levels = 3, double tol_act = kDefaultTolAct);

}  // namespace landscape::odd

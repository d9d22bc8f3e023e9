#include "landscape/odd.hpp"

#include <limits>

namespace landscape::odd {

namespace {

constexpr double kUnitTol = 1e-9;

bool is_zero_weight(std::span<const double> w) {
  for (double x : w)
    if (x != 0.0) return false;
  return true;
}

void require_unit_tangential(const Network& net, std::size_t i, std::span<const double> v,
                             double tol_act) {
  if (v.size() != net.input_dim())
    throw std::invalid_argument("tangential direction has wrong dimension");
  if (std::abs(norm(v) - 1.0) > kUnitTol)
    throw std::invalid_argument("tangential direction must be a unit vector");
  const auto w = net.W.row(i);
  const double wn = norm(w);
  if (wn > 0.0 && std::abs(dot(w, v)) > std::max(tol_act, kUnitTol) * wn)
    throw std::invalid_argument("direction is not tangential to the input weight");
}

}  // namespace

RadialTangentialSplit decompose(std::span<const double> w, std::span<const double> delta_w) {
  if (w.size() != delta_w.size()) throw std::invalid_argument("decompose: dimension mismatch");
  RadialTangentialSplit split;
  const double dn = norm(delta_w);
  if (dn == 0.0) return split;
  if (is_zero_weight(w)) {
    split.delta_s = dn;
    split.v = scaled(delta_w, 1.0 / dn);
    return split;
  }
  Vec u = normalized(w);
  split.delta_r = dot(u, delta_w);
  Vec t(delta_w.begin(), delta_w.end());
  axpy(-split.delta_r, u, t);
  split.u = std::move(u);
  const double tn = norm(t);
  if (tn > 0.0) {
    split.delta_s = tn;
    scale_inplace(t, 1.0 / tn);
    split.v = std::move(t);
  }
  return split;
}

Workspace Workspace::make(const Network& net, const Dataset& data, double tol_act) {
  return Workspace{landscape::residuals(net, data), activation_pattern(net, data, tol_act),
                   tol_act};
}

Vec d_vector(const Network& net, const Dataset& data, const Workspace& ws, std::size_t j,
             std::size_t i) {
  const std::size_t K = data.sample_count(), d = net.input_dim();
  Vec out(d, 0.0);
  for (std::size_t k = 0; k < K; ++k) {
    const int s = ws.pattern.at(i, k);
    if (s == 0) continue;
    const double a = s > 0 ? net.act.alpha_plus : net.act.alpha_minus;
    axpy(a * ws.e(k, j), data.X.row(k), out);
  }
  return out;
}

Vec d_vector(const Network& net, const Dataset& data, std::size_t j, std::size_t i,
             double tol_act) {
  return d_vector(net, data, Workspace::make(net, data, tol_act), j, i);
}

Vec d_vector_limit(const Network& net, const Dataset& data, const Workspace& ws, std::size_t j,
                   std::size_t i, std::span<const double> v) {
  require_unit_tangential(net, i, v, ws.tol_act);
  Vec out = d_vector(net, data, ws, j, i);
  const std::size_t K = data.sample_count();
  for (std::size_t k = 0; k < K; ++k) {
    if (ws.pattern.at(i, k) != 0) continue;
    const auto x = data.X.row(k);
    const int s = sign_with_tol(dot(v, x), norm(x), ws.tol_act);
    if (s == 0) continue;
    const double a = s > 0 ? net.act.alpha_plus : net.act.alpha_minus;
    axpy(a * ws.e(k, j), x, out);
  }
  return out;
}

Vec d_vector_limit(const Network& net, const Dataset& data, std::size_t j, std::size_t i,
                   std::span<const double> v, double tol_act) {
  return d_vector_limit(net, data, Workspace::make(net, data, tol_act), j, i, v);
}

Matrix grad_h(const Network& net, const Dataset& data, const Workspace& ws) {
  const std::size_t I = net.hidden_count(), J = net.output_dim();
  Matrix g(J, I);
  for (std::size_t i = 0; i < I; ++i)
    for (std::size_t j = 0; j < J; ++j)
      g(j, i) = dot(net.W.row(i), d_vector(net, data, ws, j, i));
  return g;
}

Matrix grad_h(const Network& net, const Dataset& data, double tol_act) {
  return grad_h(net, data, Workspace::make(net, data, tol_act));
}

double radial_derivative(const Network& net, const Dataset& data, const Workspace& ws,
                         std::size_t i) {
  const auto w = net.W.row(i);
  if (is_zero_weight(w)) return 0.0;
  Vec u = normalized(w);
  double out = 0.0;
  for (std::size_t j = 0; j < net.output_dim(); ++j)
    out += net.H(j, i) * dot(d_vector(net, data, ws, j, i), u);
  return out;
}

double radial_derivative(const Network& net, const Dataset& data, std::size_t i, double tol_act) {
  return radial_derivative(net, data, Workspace::make(net, data, tol_act), i);
}

double tangential_derivative(const Network& net, const Dataset& data, const Workspace& ws,
                             std::size_t i, std::span<const double> v) {
  double out = 0.0;
  for (std::size_t j = 0; j < net.output_dim(); ++j)
    out += net.H(j, i) * dot(d_vector_limit(net, data, ws, j, i, v), v);
  return out;
}

double tangential_derivative(const Network& net, const Dataset& data, std::size_t i,
                             std::span<const double> v, double tol_act) {
  return tangential_derivative(net, data, Workspace::make(net, data, tol_act), i, v);
}

double directional_odd(const Network& net, const Dataset& data, const Direction& delta,
                       double tol_act) {
  validate(net, data);
  if (delta.dW.rows() != net.W.rows() || delta.dW.cols() != net.W.cols() ||
      delta.dH.rows() != net.H.rows() || delta.dH.cols() != net.H.cols())
    throw std::invalid_argument("directional_odd: direction shape mismatch");
  if (delta.zero()) throw std::invalid_argument("directional_odd: zero direction");

  Workspace ws = Workspace::make(net, data, tol_act);
  double total = 0.0;
  const Matrix gh = grad_h(net, data, ws);
  for (std::size_t j = 0; j < gh.rows(); ++j)
    for (std::size_t i = 0; i < gh.cols(); ++i) total += delta.dH(j, i) * gh(j, i);
  for (std::size_t i = 0; i < net.hidden_count(); ++i) {
    const RadialTangentialSplit split = decompose(net.W.row(i), delta.dW.row(i));
    if (split.delta_r != 0.0) total += split.delta_r * radial_derivative(net, data, ws, i);
    if (split.delta_s > 0.0 && split.v)
      total += split.delta_s * tangential_derivative(net, data, ws, i, *split.v);
  }
  return total;
}

double sector_radius(const Network& net, const Dataset& data, const Direction& delta,
                     double tol_act) {
  const ActivationPattern pattern = activation_pattern(net, data, tol_act);
  double bound = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < net.hidden_count(); ++i) {
    for (std::size_t k = 0; k < data.sample_count(); ++k) {
      if (pattern.at(i, k) == 0) continue;
      const double z = dot(net.W.row(i), data.X.row(k));
      const double dz = dot(delta.dW.row(i), data.X.row(k));
      if (dz == 0.0) continue;
      const double t = -z / dz;
      if (t > 0.0) bound = std::min(bound, t);
    }
  }
  return bound;
}

double fd_oracle(const Network& net, const Dataset& data, const Direction& delta, double step,
                 double* used_step, double tol_act) {
  if (step <= 0.0) throw std::invalid_argument("fd_oracle: step must be positive");
  if (delta.zero()) throw std::invalid_argument("fd_oracle: zero direction");
  const double bound = sector_radius(net, data, delta, tol_act);
  double h = step;
  while (h >= bound) {
    h *= 0.5;
    if (h < 1e-300) throw OracleInconclusive("fd_oracle: step underflow before the pattern stabilized");
  }
  if (used_step) *used_step = h;
  const double base = loss(net, data);
  return (loss(displaced(net, delta, h), data) - base) / h;
}

double fd_limit(const Network& net, const Dataset& data, const Direction& delta,
                double initial_step, int levels, double tol_act) {
  double h0 = 0.0;
  double q = fd_oracle(net, data, delta, initial_step, &h0, tol_act);
  // Richardson table over step halvings; the quotient is a cubic polynomial
  // of the step inside the sector, so each level removes one power.
  std::vector<double> row{q};
  for (int m = 1; m <= levels; ++m)
    row.push_back(fd_oracle(net, data, delta, h0 / static_cast<double>(1 << m), nullptr, tol_act));
  for (int n = 1; n <= levels; ++n) {
    const double f = static_cast<double>(1 << n);
    for (int m = 0; m + n <= levels; ++m) row[m] = (f * row[m + 1] - row[m]) / (f - 1.0);
  }
  return row[0];
}

}  // namespace landscape::odd

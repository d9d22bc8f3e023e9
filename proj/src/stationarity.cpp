#include "landscape/stationarity.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "json.hpp"
#include "landscape/kernels.hpp"
#include "landscape/rng.hpp"

namespace landscape::stationarity {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;
constexpr double kAngleTol = 1e-12;
constexpr int kM3ExhaustiveCap = 14;

double wrap_angle(double a) {
  a = std::fmod(a, kTwoPi);
  if (a < 0.0) a += kTwoPi;
  return a;
}

}  // namespace

Vec ConeBundle::g_for(std::size_t mask, std::size_t j) const {
  Vec g = a.row_vec(j);
  for (std::size_t k = 0; k < boundary.size(); ++k) {
    const double alpha = (mask >> k) & 1 ? act.alpha_plus : act.alpha_minus;
    axpy(alpha * boundary_e(k, j), boundary_x.row(k), g);
  }
  return g;
}

Vec ConeBundle::g_combined(std::size_t mask, double sign) const {
  Vec g(dim(), 0.0);
  for (std::size_t j = 0; j < outputs(); ++j) {
    const double c = sign * h_col[j];
    if (c == 0.0) continue;
    axpy(c, g_for(mask, j), g);
  }
  return g;
}

double ConeBundle::slope(std::span<const double> v, double h_sign) const {
  double out = 0.0;
  for (std::size_t j = 0; j < outputs(); ++j) out += h_sign * h_col[j] * dot(a.row(j), v);
  for (std::size_t k = 0; k < boundary.size(); ++k) {
    const auto x = boundary_x.row(k);
    const double z = dot(v, x);
    const int s = sign_with_tol(z, norm(x), tol_act);
    if (s == 0) continue;
    const double alpha = s > 0 ? act.alpha_plus : act.alpha_minus;
    double c = 0.0;
    for (std::size_t j = 0; j < outputs(); ++j) c += h_sign * h_col[j] * boundary_e(k, j);
    out += alpha * z * c;
  }
  return out;
}

double ConeBundle::witness_value(std::size_t j, std::span<const double> v) const {
  double out = dot(a.row(j), v);
  for (std::size_t k = 0; k < boundary.size(); ++k) {
    const auto x = boundary_x.row(k);
    const double z = dot(v, x);
    const int s = sign_with_tol(z, norm(x), tol_act);
    if (s == 0) continue;
    out += (s > 0 ? act.alpha_plus : act.alpha_minus) * boundary_e(k, j) * z;
  }
  return out;
}

ConeBundle cone_bundle(const Network& net, const Dataset& data, const odd::Workspace& ws,
                       std::size_t i, int cap) {
  const std::size_t J = net.output_dim(), K = data.sample_count(), d = net.input_dim();
  ConeBundle b;
  b.neuron = i;
  b.act = net.act;
  b.tol_act = ws.tol_act;
  b.h_col = net.h_col(i);
  for (std::size_t k = 0; k < K; ++k)
    if (ws.pattern.at(i, k) == 0) b.boundary.push_back(k);
  if (cap > 0 && b.boundary.size() > static_cast<std::size_t>(cap))
    throw ConeCapError("cone_bundle: boundary set of size " + std::to_string(b.boundary.size()) +
                       " exceeds the enumeration cap " + std::to_string(cap) +
                       "; use the sampling fallback");
  b.a = Matrix(J, d);
  for (std::size_t j = 0; j < J; ++j) b.a.set_row(j, odd::d_vector(net, data, ws, j, i));
  b.boundary_x = Matrix(b.boundary.size(), d);
  b.boundary_e = Matrix(b.boundary.size(), J);
  for (std::size_t k = 0; k < b.boundary.size(); ++k) {
    b.boundary_x.set_row(k, data.X.row(b.boundary[k]));
    for (std::size_t j = 0; j < J; ++j) b.boundary_e(k, j) = ws.e(b.boundary[k], j);
  }
  const auto w = net.W.row(i);
  if (norm(w) > 0.0) b.u = normalized(w);
  return b;
}

ConeBundle cone_bundle(const Network& net, const Dataset& data, std::size_t i, double tol_act,
                       int cap) {
  return cone_bundle(net, data, odd::Workspace::make(net, data, tol_act), i, cap);
}

std::vector<Vec> tangential_basis(const std::optional<Vec>& u, std::size_t d) {
  std::vector<Vec> basis;
  if (!u) {
    for (std::size_t c = 0; c < d; ++c) {
      Vec e(d, 0.0);
      e[c] = 1.0;
      basis.push_back(std::move(e));
    }
    return basis;
  }
  for (std::size_t c = 0; c < d && basis.size() + 1 < d; ++c) {
    Vec r(d, 0.0);
    r[c] = 1.0;
    axpy(-(*u)[c], *u, r);
    for (const Vec& bvec : basis) axpy(-dot(bvec, r), bvec, r);
    const double n = norm(r);
    if (n > 1e-10) {
      scale_inplace(r, 1.0 / n);
      basis.push_back(std::move(r));
    }
  }
  return basis;
}

namespace {

Vec ambient2(const std::vector<Vec>& basis, double theta) {
  Vec v = scaled(basis[0], std::cos(theta));
  axpy(std::sin(theta), basis[1], v);
  return v;
}

// Boundary samples with a nonzero projection into the tangential plane,
// together with the arc endpoints their orthogonality lines cut out of the
// tangential unit circle.
struct ArcLayout {
  std::vector<std::size_t> cutters;              // indices into bundle.boundary
  std::vector<std::array<double, 2>> proj;       // their plane coordinates
  std::vector<double> cuts;                      // sorted angles in [0, 2pi)
};

ArcLayout arc_layout(const ConeBundle& b, const std::vector<Vec>& basis) {
  ArcLayout lay;
  for (std::size_t k = 0; k < b.boundary.size(); ++k) {
    const auto x = b.boundary_x.row(k);
    const std::array<double, 2> p{dot(x, basis[0]), dot(x, basis[1])};
    if (std::hypot(p[0], p[1]) > b.tol_act * norm(x)) {
      lay.cutters.push_back(k);
      lay.proj.push_back(p);
    }
  }
  for (const auto& p : lay.proj) {
    const double phi = std::atan2(p[1], p[0]);
    lay.cuts.push_back(wrap_angle(phi + kTwoPi / 4.0));
    lay.cuts.push_back(wrap_angle(phi - kTwoPi / 4.0));
  }
  std::sort(lay.cuts.begin(), lay.cuts.end());
  lay.cuts.erase(std::unique(lay.cuts.begin(), lay.cuts.end(),
                             [](double x, double y) { return std::abs(x - y) < kAngleTol; }),
                 lay.cuts.end());
  if (lay.cuts.size() >= 2 && lay.cuts.back() - lay.cuts.front() > kTwoPi - kAngleTol)
    lay.cuts.pop_back();
  return lay;
}

std::size_t mask_at(const ConeBundle& b, std::span<const double> v) {
  std::size_t mask = 0;
  for (std::size_t k = 0; k < b.boundary.size(); ++k) {
    const auto x = b.boundary_x.row(k);
    if (sign_with_tol(dot(v, x), norm(x), b.tol_act) > 0) mask |= std::size_t{1} << k;
  }
  return mask;
}

// Arcs of the tangential unit circle on which the slope is a fixed linear
// form; first = start angle, second = end angle (end > start, may pass 2pi).
std::vector<std::array<double, 2>> arcs_of(const ArcLayout& lay) {
  std::vector<std::array<double, 2>> arcs;
  if (lay.cuts.empty()) {
    arcs.push_back({0.0, kTwoPi});
    return arcs;
  }
  for (std::size_t c = 0; c < lay.cuts.size(); ++c) {
    const double a = lay.cuts[c];
    const double bnd = c + 1 < lay.cuts.size() ? lay.cuts[c + 1] : lay.cuts.front() + kTwoPi;
    arcs.push_back({a, bnd});
  }
  return arcs;
}

bool angle_in(double theta, double lo, double hi) {
  double t = wrap_angle(theta);
  if (t < lo) t += kTwoPi;
  return t >= lo - kAngleTol && t <= hi + kAngleTol;
}

SlopeExtremum extremum_m1(const ConeBundle& b, const std::vector<Vec>& basis, double h_sign) {
  SlopeExtremum best{std::numeric_limits<double>::infinity(), {}, true};
  for (double s : {1.0, -1.0}) {
    Vec v = scaled(basis[0], s);
    const double val = b.slope(v, h_sign);
    if (val < best.value) best = {val, std::move(v), true};
  }
  return best;
}

SlopeExtremum extremum_m2(const ConeBundle& b, const std::vector<Vec>& basis, double h_sign) {
  const ArcLayout lay = arc_layout(b, basis);
  std::vector<double> candidates = lay.cuts;
  for (const auto& arc : arcs_of(lay)) {
    const double mid = 0.5 * (arc[0] + arc[1]);
    const std::size_t mask = mask_at(b, ambient2(basis, mid));
    const Vec g = b.g_combined(mask, h_sign);
    const double g1 = dot(g, basis[0]), g2 = dot(g, basis[1]);
    if (g1 == 0.0 && g2 == 0.0) {
      candidates.push_back(mid);
      continue;
    }
    const double aligned = std::atan2(-g2, -g1);
    if (angle_in(aligned, arc[0], arc[1])) candidates.push_back(wrap_angle(aligned));
  }
  if (candidates.empty()) candidates.push_back(0.0);
  SlopeExtremum best{std::numeric_limits<double>::infinity(), {}, true};
  for (double theta : candidates) {
    Vec v = ambient2(basis, theta);
    const double val = b.slope(v, h_sign);
    if (val < best.value) best = {val, std::move(v), true};
  }
  return best;
}

Vec combine3(const std::vector<Vec>& basis, const std::array<double, 3>& c) {
  Vec v = scaled(basis[0], c[0]);
  axpy(c[1], basis[1], v);
  axpy(c[2], basis[2], v);
  return v;
}

// Candidate directions for extrema of a piecewise-linear form over the unit
// sphere of a 3-dimensional tangential space: region vertices (two active
// boundary planes), per-region aligned points on each plane, and per-region
// free minimizers. Evaluating the exact slope at a superset of candidates is
// harmless, so no feasibility filtering is needed.
std::vector<Vec> sphere_candidates_m3(const ConeBundle& b, const std::vector<Vec>& basis,
                                      const std::vector<Vec>& gs) {
  std::vector<std::array<double, 3>> planes;
  for (std::size_t k = 0; k < b.boundary.size(); ++k) {
    const auto x = b.boundary_x.row(k);
    std::array<double, 3> p{dot(x, basis[0]), dot(x, basis[1]), dot(x, basis[2])};
    const double n = std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]);
    if (n > b.tol_act * norm(x)) {
      for (double& c : p) c /= n;
      planes.push_back(p);
    }
  }
  std::vector<Vec> out;
  auto push = [&](std::array<double, 3> c) {
    const double n = std::sqrt(c[0] * c[0] + c[1] * c[1] + c[2] * c[2]);
    if (n < 1e-12) return;
    for (double& x : c) x /= n;
    out.push_back(combine3(basis, c));
    out.push_back(combine3(basis, {-c[0], -c[1], -c[2]}));
  };
  for (std::size_t a = 0; a < planes.size(); ++a)
    for (std::size_t c = a + 1; c < planes.size(); ++c)
      push({planes[a][1] * planes[c][2] - planes[a][2] * planes[c][1],
            planes[a][2] * planes[c][0] - planes[a][0] * planes[c][2],
            planes[a][0] * planes[c][1] - planes[a][1] * planes[c][0]});
  for (const Vec& g : gs) {
    const std::array<double, 3> gc{dot(g, basis[0]), dot(g, basis[1]), dot(g, basis[2])};
    push(gc);
    for (const auto& p : planes) {
      const double along = gc[0] * p[0] + gc[1] * p[1] + gc[2] * p[2];
      push({gc[0] - along * p[0], gc[1] - along * p[1], gc[2] - along * p[2]});
    }
  }
  push({1.0, 0.0, 0.0});
  return out;
}

std::vector<Vec> all_pattern_gs(const ConeBundle& b, double h_sign) {
  std::vector<Vec> gs;
  for (std::size_t mask = 0; mask < b.pattern_count(); ++mask)
    gs.push_back(b.g_combined(mask, h_sign));
  return gs;
}

SlopeExtremum best_of(const ConeBundle& b, const std::vector<Vec>& candidates, double h_sign,
                      bool exact) {
  SlopeExtremum best{std::numeric_limits<double>::infinity(), {}, exact};
  for (const Vec& v : candidates) {
    const double val = b.slope(v, h_sign);
    if (val < best.value) best = {val, v, exact};
  }
  return best;
}

SlopeExtremum extremum_m3(const ConeBundle& b, const std::vector<Vec>& basis, double h_sign) {
  if (b.boundary.size() <= kM3ExhaustiveCap) {
    return best_of(b, sphere_candidates_m3(b, basis, all_pattern_gs(b, h_sign)), h_sign, true);
  }
  // Too many boundary planes to enumerate sign patterns; sample instead.
  RandomStream rng(0x51ed2c0dULL ^ b.neuron);
  std::vector<Vec> candidates;
  candidates.reserve(kMcDirections);
  for (long n = 0; n < kMcDirections; ++n) {
    Vec c = rng.normal_vec(3);
    const double cn = norm(c);
    if (cn < 1e-12) continue;
    scale_inplace(c, 1.0 / cn);
    candidates.push_back(combine3(basis, {c[0], c[1], c[2]}));
  }
  return best_of(b, candidates, h_sign, false);
}

Vec random_tangential(RandomStream& rng, const std::vector<Vec>& basis) {
  const std::size_t d = basis.front().size();
  for (;;) {
    Vec v(d, 0.0);
    for (const Vec& bvec : basis) axpy(rng.normal(), bvec, v);
    const double n = norm(v);
    if (n > 1e-12) {
      scale_inplace(v, 1.0 / n);
      return v;
    }
  }
}

SlopeExtremum extremum_sampled(const ConeBundle& b, const std::vector<Vec>& basis, double h_sign) {
  RandomStream rng(0xd17ec710ULL ^ b.neuron);
  const long n_dirs = kMcDirections;
  std::vector<Vec> dirs(n_dirs);
  for (long n = 0; n < n_dirs; ++n) dirs[n] = random_tangential(rng, basis);
  Vec values(n_dirs);
#pragma omp parallel for schedule(static) if (n_dirs > 4096)
  for (long n = 0; n < n_dirs; ++n) values[n] = b.slope(dirs[n], h_sign);
  std::size_t best = 0;
  for (long n = 1; n < n_dirs; ++n)
    if (values[n] < values[best]) best = n;

  // Local polish: walk downhill on the sphere along the projected linear form
  // of the current sign pattern.
  Vec v = dirs[best];
  double val = values[best];
  double eta = 0.5;
  for (int it = 0; it < 200 && eta > 1e-12; ++it) {
    const Vec g = b.g_combined(mask_at(b, v), h_sign);
    Vec gt(v.size(), 0.0);
    for (const Vec& bvec : basis) axpy(dot(g, bvec), bvec, gt);
    axpy(-dot(gt, v), v, gt);
    Vec trial = v;
    axpy(-eta, gt, trial);
    const double tn = norm(trial);
    if (tn < 1e-12) break;
    scale_inplace(trial, 1.0 / tn);
    const double tval = b.slope(trial, h_sign);
    if (tval < val) {
      v = std::move(trial);
      val = tval;
    } else {
      eta *= 0.5;
    }
  }
  return {val, v, false};
}

SlopeExtremum dispatch_extremum(const ConeBundle& b, double h_sign) {
  const std::vector<Vec> basis = tangential_basis(b.u, b.dim());
  switch (basis.size()) {
    case 1:
      return extremum_m1(b, basis, h_sign);
    case 2:
      return extremum_m2(b, basis, h_sign);
    case 3:
      return extremum_m3(b, basis, h_sign);
    default:
      return extremum_sampled(b, basis, h_sign);
  }
}

}  // namespace

SlopeExtremum min_tangential_slope(const ConeBundle& bundle) { return dispatch_extremum(bundle, 1.0); }

SlopeExtremum max_tangential_slope(const ConeBundle& bundle) {
  SlopeExtremum neg = dispatch_extremum(bundle, -1.0);
  return {-neg.value, neg.v, neg.exact};
}

const char* to_string(Classification c) {
  switch (c) {
    case Classification::kNotStationary:
      return "NOT_STATIONARY";
    case Classification::kLocalMinType1:
      return "LOCAL_MIN_TYPE1";
    case Classification::kNonMinStationary:
      return "NON_MIN_STATIONARY";
    case Classification::kType2Candidate:
      return "TYPE2_CANDIDATE";
  }
  return "?";
}

StationarityCheck is_stationary(const Network& net, const Dataset& data, Tolerances tol) {
  validate(net, data);
  StationarityCheck check;
  check.tolerances = tol;
  const odd::Workspace ws = odd::Workspace::make(net, data, tol.tol_act);
  const Matrix gh = odd::grad_h(net, data, ws);
  for (std::size_t j = 0; j < gh.rows(); ++j)
    for (std::size_t i = 0; i < gh.cols(); ++i)
      if (std::abs(gh(j, i)) > tol.tol_grad) {
        check.violation = Violation{1, i, j, {}, gh(j, i)};
        return check;
      }
  for (std::size_t i = 0; i < net.hidden_count(); ++i) {
    const double r = odd::radial_derivative(net, data, ws, i);
    if (std::abs(r) > tol.tol_grad) {
      check.violation = Violation{2, i, 0, {}, r};
      return check;
    }
  }
  for (std::size_t i = 0; i < net.hidden_count(); ++i) {
    const ConeBundle b = cone_bundle(net, data, ws, i, 0);
    const SlopeExtremum m = min_tangential_slope(b);
    if (!m.exact) check.approximate = true;
    if (m.value < -tol.tol_grad) {
      check.violation = Violation{3, i, 0, m.v, m.value};
      return check;
    }
  }
  check.stationary = true;
  return check;
}

namespace {

// Largest |per-output witness value| over a candidate direction set.
struct WitnessHit {
  double value = 0.0;
  std::size_t j = 0;
  Vec v;
};

WitnessHit best_witness(const ConeBundle& b, const std::vector<Vec>& candidates) {
  WitnessHit best;
  for (const Vec& v : candidates) {
    for (std::size_t j = 0; j < b.outputs(); ++j) {
      const double val = b.witness_value(j, v);
      if (std::abs(val) > std::abs(best.value)) best = {val, j, v};
    }
  }
  return best;
}

std::vector<Vec> witness_candidates_m2(const ConeBundle& b, const std::vector<Vec>& basis) {
  const ArcLayout lay = arc_layout(b, basis);
  std::vector<double> thetas = lay.cuts;
  for (const auto& arc : arcs_of(lay)) {
    const double mid = 0.5 * (arc[0] + arc[1]);
    thetas.push_back(mid);
    const std::size_t mask = mask_at(b, ambient2(basis, mid));
    for (std::size_t j = 0; j < b.outputs(); ++j) {
      const Vec gj = b.g_for(mask, j);
      const double g1 = dot(gj, basis[0]), g2 = dot(gj, basis[1]);
      if (g1 == 0.0 && g2 == 0.0) continue;
      for (double s : {1.0, -1.0}) {
        const double aligned = std::atan2(s * g2, s * g1);
        if (angle_in(aligned, arc[0], arc[1])) thetas.push_back(wrap_angle(aligned));
      }
    }
  }
  std::vector<Vec> out;
  out.reserve(thetas.size());
  for (double t : thetas) out.push_back(ambient2(basis, t));
  return out;
}

std::vector<Vec> witness_candidates(const ConeBundle& b, bool* approximate) {
  const std::vector<Vec> basis = tangential_basis(b.u, b.dim());
  switch (basis.size()) {
    case 1:
      return {basis[0], scaled(basis[0], -1.0)};
    case 2:
      return witness_candidates_m2(b, basis);
    case 3:
      if (b.boundary.size() <= kM3ExhaustiveCap) {
        std::vector<Vec> gs;
        for (std::size_t mask = 0; mask < b.pattern_count(); ++mask)
          for (std::size_t j = 0; j < b.outputs(); ++j) gs.push_back(b.g_for(mask, j));
        return sphere_candidates_m3(b, basis, gs);
      }
      [[fallthrough]];
    default: {
      if (approximate) *approximate = true;
      RandomStream rng(0xe5ca9eULL ^ b.neuron);
      std::vector<Vec> out;
      out.reserve(kMcDirections);
      for (long n = 0; n < kMcDirections; ++n) out.push_back(random_tangential(rng, basis));
      return out;
    }
  }
}

// Escape witnesses for one multi-output neuron with a 2-dimensional
// tangential space: on each arc the slope is A cos + B sin, so its zeros are
// isolated angles (or the whole arc when the combined form vanishes).
std::optional<EscapeWitness> multi_output_escape_m2(const ConeBundle& b,
                                                    const std::vector<Vec>& basis, double tol) {
  const ArcLayout lay = arc_layout(b, basis);
  for (const auto& arc : arcs_of(lay)) {
    const double mid = 0.5 * (arc[0] + arc[1]);
    const std::size_t mask = mask_at(b, ambient2(basis, mid));
    const Vec g = b.g_combined(mask);
    const double g1 = dot(g, basis[0]), g2 = dot(g, basis[1]);
    std::vector<double> zeros;
    if (std::hypot(g1, g2) <= tol) {
      // Slope vanishes across the whole arc; look for the strongest
      // per-output response anywhere on it.
      zeros.push_back(arc[0]);
      zeros.push_back(mid);
      zeros.push_back(arc[1]);
      for (std::size_t j = 0; j < b.outputs(); ++j) {
        const Vec gj = b.g_for(mask, j);
        const double a1 = dot(gj, basis[0]), a2 = dot(gj, basis[1]);
        for (double s : {1.0, -1.0}) {
          const double aligned = std::atan2(s * a2, s * a1);
          if (angle_in(aligned, arc[0], arc[1])) zeros.push_back(wrap_angle(aligned));
        }
      }
    } else {
      const double phi = std::atan2(g2, g1);
      for (double off : {kTwoPi / 4.0, -kTwoPi / 4.0}) {
        const double z = phi + off;
        if (angle_in(z, arc[0], arc[1])) zeros.push_back(wrap_angle(z));
      }
    }
    for (double theta : zeros) {
      const Vec v = ambient2(basis, theta);
      if (std::abs(b.slope(v)) > tol) continue;
      for (std::size_t j = 0; j < b.outputs(); ++j) {
        const double val = b.witness_value(j, v);
        if (std::abs(val) > tol) return EscapeWitness{b.neuron, j, v, val};
      }
    }
  }
  return std::nullopt;
}

// General-position fallback: hunt for slope zeros among sampled directions
// and along sign changes between consecutive samples.
std::optional<EscapeWitness> multi_output_escape_sampled(const ConeBundle& b,
                                                         const std::vector<Vec>& basis,
                                                         double tol) {
  RandomStream rng(0x2e605e7ULL ^ b.neuron);
  Vec prev = random_tangential(rng, basis);
  double prev_val = b.slope(prev);
  for (long n = 0; n < kMcDirections; ++n) {
    Vec cur = random_tangential(rng, basis);
    double cur_val = b.slope(cur);
    Vec candidate;
    if (std::abs(cur_val) <= tol) {
      candidate = cur;
    } else if (prev_val * cur_val < 0.0) {
      Vec lo = prev, hi = cur;
      double lo_val = prev_val;
      for (int it = 0; it < 80; ++it) {
        Vec midv = lo;
        axpy(1.0, hi, midv);
        const double n2 = norm(midv);
        if (n2 < 1e-12) break;
        scale_inplace(midv, 1.0 / n2);
        const double mv = b.slope(midv);
        if (std::abs(mv) <= tol) {
          candidate = midv;
          break;
        }
        if (mv * lo_val < 0.0) {
          hi = midv;
        } else {
          lo = midv;
          lo_val = mv;
        }
      }
    }
    if (!candidate.empty()) {
      for (std::size_t j = 0; j < b.outputs(); ++j) {
        const double val = b.witness_value(j, candidate);
        if (std::abs(val) > tol) return EscapeWitness{b.neuron, j, candidate, val};
      }
    }
    prev = std::move(cur);
    prev_val = cur_val;
  }
  return std::nullopt;
}

}  // namespace

std::vector<EscapeWitness> detect_escape_neurons(const Network& net, const Dataset& data,
                                                 Tolerances tol, bool* approximate) {
  validate(net, data);
  if (approximate) *approximate = false;
  const odd::Workspace ws = odd::Workspace::make(net, data, tol.tol_act);
  std::vector<EscapeWitness> out;
  const std::size_t J = net.output_dim();
  for (std::size_t i = 0; i < net.hidden_count(); ++i) {
    const ConeBundle b = cone_bundle(net, data, ws, i, 0);
    bool h_zero = true;
    for (double h : b.h_col) h_zero = h_zero && std::abs(h) <= tol.h_zero_tol();
    if (h_zero) {
      // Zero output weights make the tangential slope vanish identically, so
      // any direction with a nonzero per-output response is a witness.
      const WitnessHit hit = best_witness(b, witness_candidates(b, approximate));
      if (std::abs(hit.value) > tol.tol_grad) out.push_back({i, hit.j, hit.v, hit.value});
      continue;
    }
    if (J == 1) continue;  // scalar output with h != 0 forces d^v.v = 0 wherever the slope is 0
    const std::vector<Vec> basis = tangential_basis(b.u, b.dim());
    std::optional<EscapeWitness> w;
    if (basis.size() == 1) {
      for (double s : {1.0, -1.0}) {
        Vec v = scaled(basis[0], s);
        if (std::abs(b.slope(v)) > tol.tol_grad) continue;
        for (std::size_t j = 0; j < J && !w; ++j) {
          const double val = b.witness_value(j, v);
          if (std::abs(val) > tol.tol_grad) w = EscapeWitness{i, j, v, val};
        }
        if (w) break;
      }
    } else if (basis.size() == 2) {
      w = multi_output_escape_m2(b, basis, tol.tol_grad);
    } else {
      if (approximate) *approximate = true;
      w = multi_output_escape_sampled(b, basis, tol.tol_grad);
    }
    if (w) out.push_back(*w);
  }
  return out;
}

StationarityVerdict classify(const Network& net, const Dataset& data, Tolerances tol) {
  StationarityVerdict verdict;
  verdict.tolerances = tol;
  const StationarityCheck check = is_stationary(net, data, tol);
  verdict.stationary = check.stationary;
  verdict.violation = check.violation;
  verdict.approximate = check.approximate;
  if (!check.stationary) {
    verdict.classification = Classification::kNotStationary;
    return verdict;
  }
  bool approx = false;
  verdict.escape_neurons = detect_escape_neurons(net, data, tol, &approx);
  verdict.approximate = verdict.approximate || approx;
  if (verdict.escape_neurons.empty())
    verdict.classification = Classification::kLocalMinType1;
  else if (net.output_dim() == 1)
    verdict.classification = Classification::kNonMinStationary;
  else
    verdict.classification = Classification::kType2Candidate;
  return verdict;
}

Tolerances proximity_tolerances(const Network& net, const Dataset& data, Tolerances base) {
  Tolerances tol = base;
  tol.tol_act = std::max(base.tol_act, 1e-3);
  const odd::Workspace ws = odd::Workspace::make(net, data, tol.tol_act);
  double measured = 0.0;
  const Matrix gh = odd::grad_h(net, data, ws);
  for (double g : gh.data()) measured = std::max(measured, std::abs(g));
  for (std::size_t i = 0; i < net.hidden_count(); ++i)
    measured = std::max(measured, std::abs(odd::radial_derivative(net, data, ws, i)));
  tol.tol_grad = std::max(base.tol_grad, 10.0 * measured);
  Vec amps;
  for (std::size_t i = 0; i < net.hidden_count(); ++i) {
    const Vec h = net.h_col(i);
    amps.push_back(std::sqrt(squared_norm(net.W.row(i)) + squared_norm(h)));
  }
  Vec large;
  for (double a : amps)
    if (a >= 1e-3) large.push_back(a);
  if (large.empty()) {
    tol.escape_amp_tol = 1e-3;
  } else {
    std::sort(large.begin(), large.end());
    tol.escape_amp_tol = std::max(1e-3, 1e-2 * large[large.size() / 2]);
  }
  return tol;
}

StationarityVerdict classify(const Network& net, const Dataset& data, Tolerances tol, Mode mode) {
  if (mode == Mode::kProximity) tol = proximity_tolerances(net, data, tol);
  return classify(net, data, tol);
}

std::string verdict_to_json(const StationarityVerdict& verdict) {
  nlohmann::json j;
  j["stationary"] = verdict.stationary;
  j["classification"] = to_string(verdict.classification);
  nlohmann::json esc = nlohmann::json::array();
  for (const auto& w : verdict.escape_neurons) {
    nlohmann::json e;
    e["i"] = w.i;
    e["j"] = w.j;
    e["v"] = w.v;
    e["d_dot_v"] = w.d_dot_v;
    esc.push_back(std::move(e));
  }
  j["escape_neurons"] = std::move(esc);
  j["tolerances"] = {{"tol_grad", verdict.tolerances.tol_grad},
                     {"tol_act", verdict.tolerances.tol_act},
                     {"escape_amp_tol", verdict.tolerances.escape_amp_tol}};
  j["approximate"] = verdict.approximate;
  if (verdict.violation) {
    nlohmann::json v;
    v["condition"] = verdict.violation->condition;
    v["i"] = verdict.violation->i;
    if (verdict.violation->condition == 1) v["j"] = verdict.violation->j;
    if (!verdict.violation->v.empty()) v["v"] = verdict.violation->v;
    v["value"] = verdict.violation->value;
    j["violation"] = std::move(v);
  }
  return j.dump();
}

TaylorCoefficients directional_taylor(const Network& net, const Dataset& data,
                                      const Direction& delta, double tol_act) {
  validate(net, data);
  if (delta.zero()) throw std::invalid_argument("directional_taylor: zero direction");
  if (std::abs(delta.norm() - 1.0) > 1e-9)
    throw std::invalid_argument("directional_taylor: direction must be a unit vector");
  const odd::Workspace ws = odd::Workspace::make(net, data, tol_act);
  const std::size_t I = net.hidden_count(), J = net.output_dim(), K = data.sample_count();

  // Per-neuron split of the input-weight displacement and the per-sample
  // response values of the h, radial and tangential axes.
  Vec dr(I, 0.0), ds(I, 0.0);
  Matrix vh(I, K), vhr(I, K), vhs(I, K);
  for (std::size_t i = 0; i < I; ++i) {
    const odd::RadialTangentialSplit split = odd::decompose(net.W.row(i), delta.dW.row(i));
    dr[i] = split.delta_r;
    ds[i] = split.delta_s;
    for (std::size_t k = 0; k < K; ++k) {
      const auto x = data.X.row(k);
      vh(i, k) = net.act(dot(net.W.row(i), x));
      vhr(i, k) = split.u ? net.act(dot(*split.u, x)) : 0.0;
      if (split.v && split.delta_s > 0.0) {
        const double zx = dot(*split.v, x);
        vhs(i, k) = net.act.branch_slope(ws.pattern.at(i, k), zx) * zx;
      } else {
        vhs(i, k) = 0.0;
      }
    }
  }

  TaylorCoefficients c;
  for (std::size_t j = 0; j < J; ++j) {
    Vec first(K, 0.0), second(K, 0.0);
    for (std::size_t i = 0; i < I; ++i) {
      const double dh = delta.dH(j, i), h = net.H(j, i);
      for (std::size_t k = 0; k < K; ++k) {
        first[k] += dh * vh(i, k) + h * (dr[i] * vhr(i, k) + ds[i] * vhs(i, k));
        second[k] += dh * (dr[i] * vhr(i, k) + ds[i] * vhs(i, k));
      }
    }
    double e_first = 0.0, e_second = 0.0, ff = 0.0, fs = 0.0, ss = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      e_first += ws.e(k, j) * first[k];
      e_second += ws.e(k, j) * second[k];
      ff += first[k] * first[k];
      fs += first[k] * second[k];
      ss += second[k] * second[k];
    }
    c.c1 += e_first;
    c.c2 += ff + 2.0 * e_second;
    c.c3 += 6.0 * fs;
    c.c4 += 12.0 * ss;
  }
  return c;
}

EscapeDirection construct_escape_direction(const Network& net, const Dataset& data, std::size_t i,
                                           std::size_t j0, std::span<const double> v,
                                           Tolerances tol) {
  validate(net, data);
  if (net.output_dim() != 1 || j0 != 0)
    throw std::invalid_argument("construct_escape_direction: scalar-output networks only");
  if (i >= net.hidden_count()) throw std::invalid_argument("construct_escape_direction: bad neuron");
  const odd::Workspace ws = odd::Workspace::make(net, data, tol.tol_act);
  const Vec dv_vec = odd::d_vector_limit(net, data, ws, j0, i, v);
  const double dv = dot(dv_vec, v);
  if (std::abs(dv) <= tol.tol_grad)
    throw std::invalid_argument("construct_escape_direction: witness has d^v.v = 0");
  const double slope = odd::tangential_derivative(net, data, ws, i, v);
  if (std::abs(slope) > std::max(10.0 * tol.tol_grad, 1e-12))
    throw std::invalid_argument("construct_escape_direction: tangential slope is not zero");

  double vh2 = 0.0;
  for (std::size_t k = 0; k < data.sample_count(); ++k) {
    const double a = net.act(dot(net.W.row(i), data.X.row(k)));
    vh2 += a * a;
  }
  const double a_coeff = 1.0;
  const double b_coeff = std::max(1.0, 1.25 * vh2 * a_coeff / (2.0 * std::abs(dv)));

  Direction delta{Matrix(net.W.rows(), net.W.cols()), Matrix(net.H.rows(), net.H.cols())};
  delta.dH(j0, i) = (dv > 0.0 ? -1.0 : 1.0) * a_coeff;
  for (std::size_t c = 0; c < net.input_dim(); ++c) delta.dW(i, c) = b_coeff * v[c];
  const double scale = 1.0 / delta.norm();
  delta *= scale;

  const double sector = odd::sector_radius(net, data, delta, tol.tol_act);
  double eps = std::min(1.0, std::isfinite(sector) ? 0.5 * sector : 1.0);
  const double base = loss(net, data);
  int halvings = 0;
  while (loss(displaced(net, delta, eps), data) >= base) {
    eps *= 0.5;
    if (++halvings > 60)
      throw std::runtime_error("construct_escape_direction: no measurable decrease after 60 halvings");
  }
  return {std::move(delta), eps, a_coeff * scale, b_coeff * scale};
}

double perturbation_zeta_cap(const Network& net, const Dataset& data, double margin,
                             double tol_act) {
  const ActivationPattern pattern = activation_pattern(net, data, tol_act);
  double cap = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < net.hidden_count(); ++i)
    for (std::size_t k = 0; k < data.sample_count(); ++k) {
      if (pattern.at(i, k) == 0) continue;
      const double xn = norm(data.X.row(k));
      if (xn == 0.0) continue;
      cap = std::min(cap, std::abs(dot(net.W.row(i), data.X.row(k))) / xn);
    }
  return margin * cap;
}

PerturbationReport perturbation_min_test(const Network& net, const Dataset& data, double zeta,
                                         long trials, std::uint64_t seed, int bins, double margin,
                                         double tol_act) {
  validate(net, data);
  if (zeta <= 0.0) throw std::invalid_argument("perturbation_min_test: zeta must be positive");
  if (trials < 1) throw std::invalid_argument("perturbation_min_test: trials must be >= 1");
  const double cap = perturbation_zeta_cap(net, data, margin, tol_act);
  if (zeta > cap)
    throw std::invalid_argument("perturbation_min_test: zeta " + format17(zeta) +
                                " exceeds the sector-safe cap " + format17(cap));
  const ActivationPattern pattern = activation_pattern(net, data, tol_act);
  const double base = loss(net, data);
  Vec dl(trials);
  std::vector<long> redraws(trials, 0);
  bool exhausted = false;

#pragma omp parallel for schedule(static)
  for (long t = 0; t < trials; ++t) {
    RandomStream rng = RandomStream::substream(seed, static_cast<std::uint64_t>(t));
    for (int attempt = 0;; ++attempt) {
      if (attempt > 100) {
        exhausted = true;
        break;
      }
      Network p = net;
      for (double& wv : p.W.data()) wv += rng.uniform(-zeta, zeta);
      for (double& hv : p.H.data()) hv += rng.uniform(-zeta, zeta);
      bool crossed = false;
      for (std::size_t i = 0; i < net.hidden_count() && !crossed; ++i)
        for (std::size_t k = 0; k < data.sample_count() && !crossed; ++k) {
          const int s = pattern.at(i, k);
          if (s == 0) continue;
          const double z = dot(p.W.row(i), data.X.row(k));
          if ((s > 0 && z < 0.0) || (s < 0 && z > 0.0)) crossed = true;
        }
      if (crossed) {
        ++redraws[t];
        continue;
      }
      dl[t] = loss(p, data) - base;
      break;
    }
  }
  if (exhausted) throw std::runtime_error("perturbation_min_test: cannot sample inside the sector");

  PerturbationReport rep;
  rep.trials = trials;
  rep.zeta_cap = cap;
  for (long r : redraws) rep.rejected += r;
  rep.min_dl = dl[0];
  rep.max_dl = dl[0];
  for (double x : dl) {
    rep.min_dl = std::min(rep.min_dl, x);
    rep.max_dl = std::max(rep.max_dl, x);
  }
  rep.all_nonnegative = rep.min_dl >= 0.0;
  rep.bin_lo = rep.min_dl;
  rep.bin_hi = rep.max_dl;
  rep.histogram.assign(bins, 0);
  const double width = rep.bin_hi - rep.bin_lo;
  for (double x : dl) {
    long idx = width > 0.0 ? static_cast<long>((x - rep.bin_lo) / width * bins) : 0;
    idx = std::clamp(idx, 0L, static_cast<long>(bins - 1));
    ++rep.histogram[idx];
  }
  return rep;
}

LocalMaxCheck local_max_necessary(const Network& net, const Dataset& data, double tol_act) {
  validate(net, data);
  for (std::size_t i = 0; i < net.hidden_count(); ++i) {
    const double wn = norm(net.W.row(i));
    for (std::size_t k = 0; k < data.sample_count(); ++k) {
      const double xn = norm(data.X.row(k));
      const int s = sign_with_tol(dot(net.W.row(i), data.X.row(k)), wn * xn, tol_act);
      const bool active = (s > 0 && net.act.alpha_plus != 0.0) || (s < 0 && net.act.alpha_minus != 0.0);
      if (active) return {false, i, k};
    }
  }
  return {true, 0, 0};
}

}  // namespace landscape::stationarity

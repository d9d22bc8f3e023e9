#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "landscape/odd.hpp"

namespace landscape::stationarity {

struct Tolerances {
  double tol_grad = 1e-9;  // absolute threshold on derivative conditions and witnesses
  double tol_act = 1e-12;  // relative sector-membership tolerance
  // Output weights at or below this magnitude count as zero when looking for
  // escape candidates; 0 means "use tol_grad".
  double escape_amp_tol = 0.0;

  double h_zero_tol() const { return escape_amp_tol > 0.0 ? escape_amp_tol : tol_grad; }
};

inline constexpr int kDefaultConeCap = 20;
inline constexpr long kMcDirections = 20000;

struct ConeCapError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Per-neuron view of the tangential slope: the slope along unit v splits
/// into a fixed part from strictly active samples and boundary terms whose
/// branch is selected by the sign of v . x_k. Within one sign pattern over
/// the boundary set the slope is a linear form.
struct ConeBundle {
  std::size_t neuron = 0;
  std::vector<std::size_t> boundary;  // sample ids with pattern 0
  Matrix a;                           // |J| x d fixed contributions (one d_vector per output)
  Matrix boundary_x;                  // |B| x d
  Matrix boundary_e;                  // |B| x |J| residuals of boundary samples
  Vec h_col;                          // |J|
  std::optional<Vec> u;               // radial direction, absent for zero weight
  Activation act;
  double tol_act = kDefaultTolAct;

  std::size_t outputs() const { return a.rows(); }
  std::size_t dim() const { return a.cols(); }
  std::size_t pattern_count() const { return std::size_t{1} << boundary.size(); }

  /// g for output j under sign pattern `mask` (bit k set = positive branch
  /// for boundary sample k).
  Vec g_for(std::size_t mask, std::size_t j) const;

  /// sum_j sign * h_j * g_for(mask, j)
  Vec g_combined(std::size_t mask, double sign = 1.0) const;

  /// Exact tangential slope along unit v (per-output limit vectors dotted
  /// with v and combined with the output weights). Samples with v . x_k = 0
  /// contribute nothing. `h_sign` of -1 evaluates the negated combination.
  double slope(std::span<const double> v, double h_sign = 1.0) const;

  /// Per-output d^v . v along unit v.
  double witness_value(std::size_t j, std::span<const double> v) const;
};

/// Builds the bundle for neuron i. `cap` bounds the boundary set for callers
/// that enumerate all 2^|B| sign patterns; pass 0 to disable the check.
ConeBundle cone_bundle(const Network& net, const Dataset& data, std::size_t i,
                       double tol_act = kDefaultTolAct, int cap = kDefaultConeCap);
ConeBundle cone_bundle(const Network& net, const Dataset& data, const odd::Workspace& ws,
                       std::size_t i, int cap = kDefaultConeCap);

/// Orthonormal basis of the tangential space: the orthogonal complement of w
/// for a nonzero weight, the whole space for w = 0.
std::vector<Vec> tangential_basis(const std::optional<Vec>& u, std::size_t d);

struct SlopeExtremum {
  double value = 0.0;
  Vec v;             // unit direction attaining it
  bool exact = true; // false when a sampling fallback decided the result
};

/// Minimum (maximum) of the tangential slope over unit tangential directions.
/// Exact for tangential dimension <= 3; falls back to dense sampling plus
/// projected refinement above that, or when the boundary set exceeds the cap.
SlopeExtremum min_tangential_slope(const ConeBundle& bundle);
SlopeExtremum max_tangential_slope(const ConeBundle& bundle);

enum class Classification {
  kNotStationary,
  kLocalMinType1,
  kNonMinStationary,  // scalar output, stationary, with escape neurons
  kType2Candidate,    // multi-output, stationary, with escape neurons
};

const char* to_string(Classification c);

struct Violation {
  int condition = 0;  // 1 = output-weight derivative, 2 = radial, 3 = tangential slope
  std::size_t i = 0;
  std::size_t j = 0;  // meaningful for condition 1
  Vec v;              // minimizing direction for condition 3
  double value = 0.0;
};

struct EscapeWitness {
  std::size_t i = 0;
  std::size_t j = 0;
  Vec v;
  double d_dot_v = 0.0;
};

struct StationarityCheck {
  bool stationary = false;
  std::optional<Violation> violation;
  bool approximate = false;
  Tolerances tolerances;
};

struct StationarityVerdict {
  bool stationary = false;
  std::optional<Violation> violation;
  std::vector<EscapeWitness> escape_neurons;
  Classification classification = Classification::kNotStationary;
  Tolerances tolerances;
  bool approximate = false;
};

/// Conditions only: output-weight derivatives zero, radial derivatives zero,
/// tangential slopes nonnegative. Returns the first violating witness.
StationarityCheck is_stationary(const Network& net, const Dataset& data, Tolerances tol = {});

/// Escape neurons with witnesses (j', v) such that the tangential slope along
/// v vanishes while d^v_{j'} . v does not. Advisory when the point is not
/// stationary. `approximate` reports any sampling fallback.
std::vector<EscapeWitness> detect_escape_neurons(const Network& net, const Dataset& data,
                                                 Tolerances tol = {},
                                                 bool* approximate = nullptr);

StationarityVerdict classify(const Network& net, const Dataset& data, Tolerances tol = {});

enum class Mode { kExact, kProximity };

/// Tolerances for points that gradient descent only approaches: the sector
/// tolerance widens so near-orthogonal pairs count as boundaries, the
/// derivative threshold scales with the measured first-order residual, and
/// escape candidacy keys off the small-amplitude scale of the network.
Tolerances proximity_tolerances(const Network& net, const Dataset& data, Tolerances base = {});

StationarityVerdict classify(const Network& net, const Dataset& data, Tolerances tol, Mode mode);

std::string verdict_to_json(const StationarityVerdict& verdict);

/// One-sided directional Taylor coefficients along unit Delta: within the
/// sector selected by Delta the loss is an exact quartic polynomial
/// L(P + t Delta) = L + c1 t + c2 t^2/2 + c3 t^3/6 + c4 t^4/24.
struct TaylorCoefficients {
  double c1 = 0.0, c2 = 0.0, c3 = 0.0, c4 = 0.0;
};

TaylorCoefficients directional_taylor(const Network& net, const Dataset& data,
                                      const Direction& delta, double tol_act = kDefaultTolAct);

struct EscapeDirection {
  Direction delta;       // unit direction touching h_{j0 i} and the tangential part of w_i
  double epsilon0 = 0.0; // loss strictly decreases on (0, epsilon0]
  double a = 0.0, b = 0.0;
};

/// Second-order loss-decreasing direction from an escape witness (i, j0, v)
/// at a scalar-output stationary point. Throws on invalid witnesses and when
/// backtracking cannot certify a decrease.
EscapeDirection construct_escape_direction(const Network& net, const Dataset& data, std::size_t i,
                                           std::size_t j0, std::span<const double> v,
                                           Tolerances tol = {});

struct PerturbationReport {
  bool all_nonnegative = false;
  double min_dl = 0.0, max_dl = 0.0;
  std::vector<long> histogram;
  double bin_lo = 0.0, bin_hi = 0.0;
  long trials = 0;
  long rejected = 0;   // redrawn because the segment crossed a sector boundary
  double zeta_cap = 0.0;
};

/// Loss change under i.i.d. uniform(-zeta, zeta) parameter perturbations.
/// zeta is capped so perturbation segments cannot cross sector boundaries;
/// trials that still would are redrawn. Trials run in parallel on
/// independently seeded per-trial streams, so the report is deterministic.
PerturbationReport perturbation_min_test(const Network& net, const Dataset& data, double zeta,
                                         long trials, std::uint64_t seed, int bins = 40,
                                         double margin = 0.5,
                                         double tol_act = kDefaultTolAct);

double perturbation_zeta_cap(const Network& net, const Dataset& data, double margin = 0.5,
                             double tol_act = kDefaultTolAct);

struct LocalMaxCheck {
  bool candidate = false;  // true when every unit is inactive on every sample
  std::size_t witness_i = 0, witness_k = 0;
};

/// Necessary condition for a local maximum: every activation value must be
/// zero on the training set. Otherwise the witness (i, k) admits a
/// loss-increasing output-weight perturbation.
LocalMaxCheck local_max_necessary(const Network& net, const Dataset& data,
                                  double tol_act = kDefaultTolAct);

}  // namespace landscape::stationarity

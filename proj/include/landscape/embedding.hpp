#pragma once

#include "landscape/stationarity.hpp"

namespace landscape::embedding {

struct ReplicationCoeff {
  double beta = 1.0;   // input-weight scale, must be positive
  double gamma = 1.0;  // output-weight scale
};

/// Replace neuron i0 by copies (beta_l * w, gamma_l * h); function
/// preservation requires sum_l beta_l * gamma_l = 1.
struct ReplicationSpec {
  std::size_t i0 = 0;
  std::vector<ReplicationCoeff> coeffs;
};

void validate(const ReplicationSpec& spec, const Network& net);

std::string replication_spec_to_json(const ReplicationSpec& spec);
ReplicationSpec replication_spec_from_json(const std::string& bytes);

/// Widens the network by splitting neuron i0 per the spec. The replicas are
/// appended in place of i0 (i0 keeps the first replica's slot, the rest go
/// to the end), and the network function is unchanged on every input.
Network unit_replicate(const Network& net, const ReplicationSpec& spec);

/// True when replication keeps the point stationary: either every tangential
/// slope of the replicated neuron is zero, or no gamma is negative.
bool replication_preserves_stationarity(const Network& net, const Dataset& data,
                                        const ReplicationSpec& spec,
                                        stationarity::Tolerances tol = {});

/// True when replication keeps a minimum without escape neurons one: either
/// the neuron is tangentially flat, or every gamma is strictly positive.
bool replication_preserves_type1_min(const Network& net, const Dataset& data,
                                     const ReplicationSpec& spec,
                                     stationarity::Tolerances tol = {});

/// Appends `count` neurons whose input weights lie in the null space of the
/// training inputs (so they never activate on the data). h_values is
/// |J| x count. Throws when the inputs have a trivial null space.
Network add_orthogonal_units(const Network& net, const Dataset& data, std::size_t count,
                             const Matrix& h_values);

/// Orthonormal basis of {w : w . x_k = 0 for all k}.
std::vector<Vec> input_null_space(const Dataset& data, double tol = 1e-12);

/// Appends neurons that are strictly inactive on every sample. Requires
/// alpha_minus = 0 and validates every candidate row of w_candidates
/// (count x d) against w . x_k < 0 for all k. h_values is |J| x count.
Network add_negative_units(const Network& net, const Dataset& data, const Matrix& w_candidates,
                           const Matrix& h_values);

/// Rejection-sampling helper for a strictly negative direction; the dead
/// cone may be empty, in which case nullopt is returned after max_draws.
std::optional<Vec> find_negative_unit(const Dataset& data, RandomStream& rng,
                                      long max_draws = 100000);

/// Appends neurons with the given input weights and zero output weights.
/// The function is unchanged, but the new output-weight derivatives need not
/// vanish, so stationarity is generally lost.
Network add_inactive_propagation(const Network& net, const Matrix& w_list);

}  // namespace landscape::embedding

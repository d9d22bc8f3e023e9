#include "landscape/embedding.hpp"

#include <cmath>

#include "json.hpp"

namespace landscape::embedding {

void validate(const ReplicationSpec& spec, const Network& net) {
  if (spec.i0 >= net.hidden_count()) throw std::invalid_argument("replication: neuron out of range");
  if (spec.coeffs.empty()) throw std::invalid_argument("replication: needs at least one replica");
  double s = 0.0;
  for (const auto& c : spec.coeffs) {
    if (!(c.beta > 0.0)) throw std::invalid_argument("replication: beta must be positive");
    s += c.beta * c.gamma;
  }
  if (std::abs(s - 1.0) > 1e-9)
    throw std::invalid_argument("replication: sum of beta*gamma must be 1, got " + format17(s));
}

std::string replication_spec_to_json(const ReplicationSpec& spec) {
  nlohmann::json j;
  j["i0"] = spec.i0;
  nlohmann::json cs = nlohmann::json::array();
  for (const auto& c : spec.coeffs) cs.push_back({{"beta", c.beta}, {"gamma", c.gamma}});
  j["coeffs"] = std::move(cs);
  return j.dump();
}

ReplicationSpec replication_spec_from_json(const std::string& bytes) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(bytes);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("replication spec: parse error: ") + e.what());
  }
  if (!j.contains("i0") || !j.contains("coeffs") || !j["coeffs"].is_array())
    throw std::invalid_argument("replication spec: needs i0 and coeffs");
  ReplicationSpec spec;
  spec.i0 = j["i0"].get<std::size_t>();
  for (const auto& c : j["coeffs"])
    spec.coeffs.push_back({c.at("beta").get<double>(), c.at("gamma").get<double>()});
  return spec;
}

Network unit_replicate(const Network& net, const ReplicationSpec& spec) {
  landscape::validate(net);
  validate(spec, net);
  const std::size_t I = net.hidden_count(), J = net.output_dim(), d = net.input_dim();
  const std::size_t L = spec.coeffs.size();
  Network out;
  out.act = net.act;
  out.W = Matrix(I + L - 1, d);
  out.H = Matrix(J, I + L - 1);
  for (std::size_t i = 0; i < I; ++i) {
    if (i == spec.i0) continue;
    out.W.set_row(i, net.W.row(i));
    for (std::size_t j = 0; j < J; ++j) out.H(j, i) = net.H(j, i);
  }
  for (std::size_t l = 0; l < L; ++l) {
    const std::size_t slot = l == 0 ? spec.i0 : I + l - 1;
    out.W.set_row(slot, scaled(net.W.row(spec.i0), spec.coeffs[l].beta));
    for (std::size_t j = 0; j < J; ++j) out.H(j, slot) = spec.coeffs[l].gamma * net.H(j, spec.i0);
  }
  return out;
}

namespace {

bool tangentially_flat(const Network& net, const Dataset& data, std::size_t i,
                       stationarity::Tolerances tol) {
  const stationarity::ConeBundle b = stationarity::cone_bundle(net, data, i, tol.tol_act, 0);
  const auto lo = stationarity::min_tangential_slope(b);
  const auto hi = stationarity::max_tangential_slope(b);
  return std::abs(lo.value) <= tol.tol_grad && std::abs(hi.value) <= tol.tol_grad;
}

}  // namespace

bool replication_preserves_stationarity(const Network& net, const Dataset& data,
                                        const ReplicationSpec& spec,
                                        stationarity::Tolerances tol) {
  validate(spec, net);
  bool all_nonneg = true;
  for (const auto& c : spec.coeffs) all_nonneg = all_nonneg && c.gamma >= 0.0;
  if (all_nonneg) return true;
  return tangentially_flat(net, data, spec.i0, tol);
}

bool replication_preserves_type1_min(const Network& net, const Dataset& data,
                                     const ReplicationSpec& spec, stationarity::Tolerances tol) {
  validate(spec, net);
  bool all_pos = true;
  for (const auto& c : spec.coeffs) all_pos = all_pos && c.gamma > 0.0;
  if (all_pos) return true;
  return tangentially_flat(net, data, spec.i0, tol);
}

std::vector<Vec> input_null_space(const Dataset& data, double tol) {
  const std::size_t d = data.input_dim(), K = data.sample_count();
  // Orthonormalize the canonical basis against the span of the inputs.
  std::vector<Vec> input_span;
  for (std::size_t k = 0; k < K; ++k) {
    Vec r = data.X.row_vec(k);
    for (const Vec& b : input_span) axpy(-dot(b, r), b, r);
    const double n = norm(r);
    if (n > tol * std::max(1.0, norm(data.X.row(k)))) {
      scale_inplace(r, 1.0 / n);
      input_span.push_back(std::move(r));
    }
  }
  std::vector<Vec> null_basis;
  for (std::size_t c = 0; c < d; ++c) {
    Vec r(d, 0.0);
    r[c] = 1.0;
    for (const Vec& b : input_span) axpy(-dot(b, r), b, r);
    for (const Vec& b : null_basis) axpy(-dot(b, r), b, r);
    const double n = norm(r);
    if (n > tol) {
      scale_inplace(r, 1.0 / n);
      null_basis.push_back(std::move(r));
    }
  }
  return null_basis;
}

Network add_orthogonal_units(const Network& net, const Dataset& data, std::size_t count,
                             const Matrix& h_values) {
  validate(net, data);
  if (count == 0) throw std::invalid_argument("add_orthogonal_units: count must be positive");
  if (h_values.rows() != net.output_dim() || h_values.cols() != count)
    throw std::invalid_argument("add_orthogonal_units: h_values must be |J| x count");
  const std::vector<Vec> basis = input_null_space(data);
  if (basis.empty())
    throw std::invalid_argument("add_orthogonal_units: the training inputs span the whole space");
  const std::size_t I = net.hidden_count(), J = net.output_dim();
  Network out;
  out.act = net.act;
  out.W = Matrix(I + count, net.input_dim());
  out.H = Matrix(J, I + count);
  for (std::size_t i = 0; i < I; ++i) {
    out.W.set_row(i, net.W.row(i));
    for (std::size_t j = 0; j < J; ++j) out.H(j, i) = net.H(j, i);
  }
  for (std::size_t n = 0; n < count; ++n) {
    out.W.set_row(I + n, basis[n % basis.size()]);
    for (std::size_t j = 0; j < J; ++j) out.H(j, I + n) = h_values(j, n);
  }
  return out;
}

Network add_negative_units(const Network& net, const Dataset& data, const Matrix& w_candidates,
                           const Matrix& h_values) {
  validate(net, data);
  if (net.act.alpha_minus != 0.0)
    throw std::invalid_argument("add_negative_units: requires alpha_minus = 0");
  const std::size_t count = w_candidates.rows();
  if (count == 0) throw std::invalid_argument("add_negative_units: no candidates");
  if (w_candidates.cols() != net.input_dim())
    throw std::invalid_argument("add_negative_units: candidate dimension mismatch");
  if (h_values.rows() != net.output_dim() || h_values.cols() != count)
    throw std::invalid_argument("add_negative_units: h_values must be |J| x count");
  for (std::size_t n = 0; n < count; ++n)
    for (std::size_t k = 0; k < data.sample_count(); ++k)
      if (!(dot(w_candidates.row(n), data.X.row(k)) < 0.0))
        throw std::invalid_argument("add_negative_units: candidate " + std::to_string(n) +
                                    " is not strictly inactive on sample " + std::to_string(k));
  const std::size_t I = net.hidden_count(), J = net.output_dim();
  Network out;
  out.act = net.act;
  out.W = Matrix(I + count, net.input_dim());
  out.H = Matrix(J, I + count);
  for (std::size_t i = 0; i < I; ++i) {
    out.W.set_row(i, net.W.row(i));
    for (std::size_t j = 0; j < J; ++j) out.H(j, i) = net.H(j, i);
  }
  for (std::size_t n = 0; n < count; ++n) {
    out.W.set_row(I + n, w_candidates.row(n));
    for (std::size_t j = 0; j < J; ++j) out.H(j, I + n) = h_values(j, n);
  }
  return out;
}

std::optional<Vec> find_negative_unit(const Dataset& data, RandomStream& rng, long max_draws) {
  for (long n = 0; n < max_draws; ++n) {
    Vec w = rng.unit_vector(data.input_dim());
    bool ok = true;
    for (std::size_t k = 0; k < data.sample_count() && ok; ++k)
      ok = dot(w, data.X.row(k)) < 0.0;
    if (ok) return w;
  }
  return std::nullopt;
}

Network add_inactive_propagation(const Network& net, const Matrix& w_list) {
  validate(net);
  if (w_list.rows() == 0) throw std::invalid_argument("add_inactive_propagation: empty w list");
  if (w_list.cols() != net.input_dim())
    throw std::invalid_argument("add_inactive_propagation: dimension mismatch");
  const std::size_t I = net.hidden_count(), J = net.output_dim(), count = w_list.rows();
  Network out;
  out.act = net.act;
  out.W = Matrix(I + count, net.input_dim());
  out.H = Matrix(J, I + count);
  for (std::size_t i = 0; i < I; ++i) {
    out.W.set_row(i, net.W.row(i));
    for (std::size_t j = 0; j < J; ++j) out.H(j, i) = net.H(j, i);
  }
  for (std::size_t n = 0; n < count; ++n) out.W.set_row(I + n, w_list.row(n));
  return out;
}

}  // namespace landscape::embedding

#include "landscape/core.hpp"

#include <cstdio>
#include <stdexcept>

#include "json.hpp"

namespace landscape {

void validate(const Network& net) {
  if (net.W.cols() <= 1) throw std::invalid_argument("network: input dimension must exceed 1");
  if (net.act.alpha_plus == net.act.alpha_minus)
    throw std::invalid_argument("network: activation slopes must differ");
  if (net.H.cols() != net.W.rows())
    throw std::invalid_argument("network: H column count must equal hidden count");
  if (!net.W.all_finite() || !net.H.all_finite())
    throw std::invalid_argument("network: non-finite weight");
}

void validate(const Dataset& data) {
  if (data.X.rows() == 0) throw std::invalid_argument("dataset: needs at least one sample");
  if (data.Y.rows() != data.X.rows())
    throw std::invalid_argument("dataset: X and Y row counts disagree");
  if (!data.X.all_finite() || !data.Y.all_finite())
    throw std::invalid_argument("dataset: non-finite entry");
}

void validate(const Network& net, const Dataset& data) {
  validate(net);
  validate(data);
  if (data.X.cols() != net.W.cols())
    throw std::invalid_argument("shape: dataset input dimension differs from network");
  if (data.Y.cols() != net.H.rows())
    throw std::invalid_argument("shape: dataset output dimension differs from network");
}

int sign_with_tol(double value, double scale, double tol) {
  if (std::abs(value) <= tol * scale) return 0;
  return value > 0.0 ? 1 : -1;
}

Vec forward(const Network& net, std::span<const double> x) {
  if (x.size() != net.input_dim()) throw std::invalid_argument("forward: input dimension mismatch");
  const std::size_t I = net.hidden_count(), J = net.output_dim();
  Vec hidden(I);
  for (std::size_t i = 0; i < I; ++i) hidden[i] = net.act(dot(net.W.row(i), x));
  Vec out(J, 0.0);
  for (std::size_t j = 0; j < J; ++j) out[j] = dot(net.H.row(j), hidden);
  return out;
}

Matrix forward_all(const Network& net, const Dataset& data) {
  validate(net, data);
  const std::size_t K = data.sample_count(), J = net.output_dim();
  Matrix yhat(K, J);
  for (std::size_t k = 0; k < K; ++k) {
    Vec out = forward(net, data.X.row(k));
    yhat.set_row(k, out);
  }
  return yhat;
}

Matrix residuals(const Network& net, const Dataset& data) {
  Matrix e = forward_all(net, data);
  for (std::size_t k = 0; k < e.rows(); ++k)
    for (std::size_t j = 0; j < e.cols(); ++j) e(k, j) -= data.Y(k, j);
  return e;
}

double loss(const Network& net, const Dataset& data) {
  Matrix e = residuals(net, data);
  double total = 0.0;
  for (std::size_t k = 0; k < e.rows(); ++k) {
    double sk = 0.0;
    for (std::size_t j = 0; j < e.cols(); ++j) sk += e(k, j) * e(k, j);
    total += sk;
  }
  return 0.5 * total;
}

ActivationPattern activation_pattern(const Network& net, const Dataset& data, double tol_act) {
  validate(net, data);
  if (tol_act < 0.0) throw std::invalid_argument("activation_pattern: tol_act must be >= 0");
  const std::size_t I = net.hidden_count(), K = data.sample_count();
  ActivationPattern p{I, K, std::vector<std::int8_t>(I * K, 0)};
  for (std::size_t i = 0; i < I; ++i) {
    const double wn = norm(net.W.row(i));
    for (std::size_t k = 0; k < K; ++k) {
      const double xn = norm(data.X.row(k));
      const double z = dot(net.W.row(i), data.X.row(k));
      p.signs[i * K + k] = static_cast<std::int8_t>(sign_with_tol(z, wn * xn, tol_act));
    }
  }
  return p;
}

namespace {

nlohmann::json matrix_to_json(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t r = 0; r < m.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (std::size_t c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix matrix_from_json(const nlohmann::json& j, std::size_t rows, std::size_t cols,
                        const char* what) {
  if (!j.is_array() || j.size() != rows) throw std::invalid_argument(std::string(what) + ": bad row count");
  Matrix m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    const auto& row = j[r];
    if (!row.is_array() || row.size() != cols)
      throw std::invalid_argument(std::string(what) + ": bad column count");
    for (std::size_t c = 0; c < cols; ++c) {
      if (!row[c].is_number()) throw std::invalid_argument(std::string(what) + ": non-numeric entry");
      m(r, c) = row[c].get<double>();
    }
  }
  return m;
}

}  // namespace

std::string save_checkpoint(const Network& net) {
  validate(net);
  nlohmann::json j;
  j["version"] = 1;
  j["alpha_plus"] = net.act.alpha_plus;
  j["alpha_minus"] = net.act.alpha_minus;
  j["d"] = net.input_dim();
  j["I"] = net.hidden_count();
  j["J"] = net.output_dim();
  j["W"] = matrix_to_json(net.W);
  j["H"] = matrix_to_json(net.H);
  return j.dump();
}

Network load_checkpoint(const std::string& bytes) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(bytes);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("checkpoint: parse error: ") + e.what());
  }
  if (!j.is_object() || !j.contains("version"))
    throw std::invalid_argument("checkpoint: missing header");
  if (j["version"] != 1) throw std::invalid_argument("checkpoint: unsupported version");
  for (const char* key : {"alpha_plus", "alpha_minus", "d", "I", "J", "W", "H"})
    if (!j.contains(key)) throw std::invalid_argument(std::string("checkpoint: missing field ") + key);
  const auto d = j["d"].get<std::size_t>();
  const auto I = j["I"].get<std::size_t>();
  const auto J = j["J"].get<std::size_t>();
  Network net;
  net.act = Activation{j["alpha_plus"].get<double>(), j["alpha_minus"].get<double>()};
  net.W = matrix_from_json(j["W"], I, d, "checkpoint W");
  net.H = matrix_from_json(j["H"], J, I, "checkpoint H");
  validate(net);
  return net;
}

std::string save_dataset(const Dataset& data) {
  validate(data);
  nlohmann::json j;
  j["X"] = matrix_to_json(data.X);
  j["Y"] = matrix_to_json(data.Y);
  return j.dump();
}

Dataset load_dataset(const std::string& bytes) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(bytes);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("dataset: parse error: ") + e.what());
  }
  if (!j.is_object() || !j.contains("X") || !j.contains("Y"))
    throw std::invalid_argument("dataset: missing X or Y");
  const auto& jx = j["X"];
  if (!jx.is_array() || jx.empty() || !jx[0].is_array())
    throw std::invalid_argument("dataset: X must be a non-empty 2d array");
  const auto& jy = j["Y"];
  if (!jy.is_array() || jy.size() != jx.size() || !jy[0].is_array())
    throw std::invalid_argument("dataset: Y must be a 2d array matching X rows");
  Dataset data;
  data.X = matrix_from_json(jx, jx.size(), jx[0].size(), "dataset X");
  data.Y = matrix_from_json(jy, jy.size(), jy[0].size(), "dataset Y");
  validate(data);
  return data;
}

bool Direction::zero() const {
  for (double v : dW.data())
    if (v != 0.0) return false;
  for (double v : dH.data())
    if (v != 0.0) return false;
  return true;
}

double Direction::norm() const {
  return std::sqrt(squared_norm(std::span<const double>(dW.data())) +
                   squared_norm(std::span<const double>(dH.data())));
}

Direction& Direction::operator*=(double c) {
  scale_inplace(dW.data(), c);
  scale_inplace(dH.data(), c);
  return *this;
}

Network displaced(const Network& net, const Direction& delta, double step) {
  if (delta.dW.rows() != net.W.rows() || delta.dW.cols() != net.W.cols() ||
      delta.dH.rows() != net.H.rows() || delta.dH.cols() != net.H.cols())
    throw std::invalid_argument("displaced: direction shape mismatch");
  Network out = net;
  for (std::size_t i = 0; i < out.W.data().size(); ++i)
    out.W.data()[i] += step * delta.dW.data()[i];
  for (std::size_t i = 0; i < out.H.data().size(); ++i)
    out.H.data()[i] += step * delta.dH.data()[i];
  return out;
}

std::string format17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

}  // namespace landscape

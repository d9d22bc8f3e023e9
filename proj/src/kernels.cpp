#include "landscape/kernels.hpp"

namespace landscape::kernels {

namespace {

// Work-unit threshold below which the OpenMP fork costs more than it saves.
constexpr long kParallelThreshold = 8192;

// Same arithmetic order as landscape::residuals so serial and parallel
// results agree bitwise.
void residual_row(const Network& net, const Dataset& data, std::size_t k, std::span<double> out) {
  const std::size_t I = net.hidden_count(), J = net.output_dim();
  const auto x = data.X.row(k);
  Vec hidden(I);
  for (std::size_t i = 0; i < I; ++i) hidden[i] = net.act(dot(net.W.row(i), x));
  for (std::size_t j = 0; j < J; ++j) out[j] = dot(net.H.row(j), hidden) - data.Y(k, j);
}

double sample_sq(const Matrix& e, std::size_t k) {
  double s = 0.0;
  for (std::size_t j = 0; j < e.cols(); ++j) s += e(k, j) * e(k, j);
  return s;
}

// Gradient slots for one hidden neuron: row i of dW and column i of dH.
void gradient_neuron(const Network& net, const Dataset& data, const Matrix& e, std::size_t i,
                     std::span<double> dw_row, Gradient& g) {
  const std::size_t K = data.sample_count(), J = net.output_dim();
  for (double& v : dw_row) v = 0.0;
  Vec dh(J, 0.0);
  for (std::size_t k = 0; k < K; ++k) {
    const auto x = data.X.row(k);
    const double z = dot(net.W.row(i), x);
    const double a = net.act(z);
    double c = 0.0;
    for (std::size_t j = 0; j < J; ++j) {
      dh[j] += e(k, j) * a;
      c += net.H(j, i) * e(k, j);
    }
    const double s = c * net.act.train_slope(z);
    if (s != 0.0) axpy(s, x, dw_row);
  }
  for (std::size_t j = 0; j < J; ++j) g.dH(j, i) = dh[j];
}

}  // namespace

namespace serial {

Matrix residuals(const Network& net, const Dataset& data) { return landscape::residuals(net, data); }

double loss(const Network& net, const Dataset& data) { return landscape::loss(net, data); }

Gradient loss_gradient(const Network& net, const Dataset& data) {
  validate(net, data);
  Matrix e = landscape::residuals(net, data);
  Gradient g{Matrix(net.hidden_count(), net.input_dim()), Matrix(net.output_dim(), net.hidden_count())};
  for (std::size_t i = 0; i < net.hidden_count(); ++i)
    gradient_neuron(net, data, e, i, g.dW.row(i), g);
  return g;
}

}  // namespace serial

Matrix residuals(const Network& net, const Dataset& data) {
  validate(net, data);
  const long K = static_cast<long>(data.sample_count());
  const long work = K * static_cast<long>(net.hidden_count());
  Matrix e(K, net.output_dim());
#pragma omp parallel for schedule(static) if (work > kParallelThreshold)
  for (long k = 0; k < K; ++k) residual_row(net, data, static_cast<std::size_t>(k), e.row(k));
  return e;
}

double loss(const Network& net, const Dataset& data) {
  Matrix e = residuals(net, data);
  const long K = static_cast<long>(e.rows());
  Vec partial(K);
#pragma omp parallel for schedule(static) if (K > kParallelThreshold)
  for (long k = 0; k < K; ++k) partial[k] = sample_sq(e, static_cast<std::size_t>(k));
  double total = 0.0;
  for (long k = 0; k < K; ++k) total += partial[k];
  return 0.5 * total;
}

Gradient loss_gradient(const Network& net, const Dataset& data) {
  return loss_gradient(net, data, residuals(net, data));
}

Gradient loss_gradient(const Network& net, const Dataset& data, const Matrix& e) {
  validate(net, data);
  const long I = static_cast<long>(net.hidden_count());
  const long work = I * static_cast<long>(data.sample_count());
  Gradient g{Matrix(net.hidden_count(), net.input_dim()), Matrix(net.output_dim(), net.hidden_count())};
#pragma omp parallel for schedule(static) if (work > kParallelThreshold)
  for (long i = 0; i < I; ++i) gradient_neuron(net, data, e, static_cast<std::size_t>(i), g.dW.row(i), g);
  return g;
}

}  // namespace landscape::kernels

#include "landscape/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "json.hpp"
#include "landscape/rng.hpp"

namespace landscape::dynamics {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;
constexpr double kTiny = 1e-300;

double neuron_amp(const Network& net, std::size_t i) {
  double s = squared_norm(net.W.row(i));
  for (std::size_t j = 0; j < net.output_dim(); ++j) s += net.H(j, i) * net.H(j, i);
  return std::sqrt(s);
}

bool is_dead(const Network& net, const Dataset& data, std::size_t i) {
  for (std::size_t k = 0; k < data.sample_count(); ++k)
    if (net.act(dot(net.W.row(i), data.X.row(k))) != 0.0) return false;
  return true;
}

void apply_step(Network& net, const kernels::Gradient& g, double lr) {
  for (std::size_t n = 0; n < net.W.data().size(); ++n) net.W.data()[n] -= lr * g.dW.data()[n];
  for (std::size_t n = 0; n < net.H.data().size(); ++n) net.H.data()[n] -= lr * g.dH.data()[n];
}

void record(TrainTrace& trace, const Network& net, long epoch) {
  const std::size_t I = net.hidden_count(), J = net.output_dim(), d = net.input_dim();
  trace.rec_epochs.push_back(epoch);
  Vec norms(I), dirs(I * d, 0.0), outs(J * I), bal(I);
  for (std::size_t i = 0; i < I; ++i) {
    const auto w = net.W.row(i);
    const double n = norm(w);
    norms[i] = n;
    if (n > 0.0)
      for (std::size_t c = 0; c < d; ++c) dirs[i * d + c] = w[c] / n;
    double h2 = 0.0;
    for (std::size_t j = 0; j < J; ++j) {
      outs[j * I + i] = net.H(j, i);
      h2 += net.H(j, i) * net.H(j, i);
    }
    bal[i] = n * n - h2;
  }
  trace.norms.push_back(std::move(norms));
  trace.dirs.push_back(std::move(dirs));
  trace.outs.push_back(std::move(outs));
  trace.balance.push_back(std::move(bal));
}

}  // namespace

void validate(const TrainConfig& config) {
  landscape::validate(config.data);
  if (config.hidden < 1) throw std::invalid_argument("train config: hidden_count must be >= 1");
  if (!(config.lr > 0.0)) throw std::invalid_argument("train config: lr must be positive");
  if (config.epochs < 1) throw std::invalid_argument("train config: epochs must be >= 1");
  if (config.record_every < 1) throw std::invalid_argument("train config: record_every must be >= 1");
  if (!(config.init_std > 0.0)) throw std::invalid_argument("train config: init_std must be positive");
  if (config.act.alpha_plus == config.act.alpha_minus)
    throw std::invalid_argument("train config: activation slopes must differ");
}

double TrainTrace::angle(std::size_t rec, std::size_t i) const {
  if (d != 2) throw std::logic_error("angle is defined for 2-dimensional inputs only");
  const double x = dirs[rec][i * 2], y = dirs[rec][i * 2 + 1];
  if (x == 0.0 && y == 0.0) return 0.0;
  double a = std::atan2(y, x);
  if (a < 0.0) a += kTwoPi;
  return a;
}

Network initial_network(const TrainConfig& config) {
  validate(config);
  RandomStream rng(config.init_seed);
  Network net;
  net.act = config.act;
  net.W = Matrix(config.hidden, config.data.input_dim());
  net.H = Matrix(config.data.output_dim(), config.hidden);
  for (double& w : net.W.data()) w = rng.normal(0.0, config.init_std);
  for (double& h : net.H.data()) h = rng.normal(0.0, config.init_std);
  return net;
}

Network gd_step(const Network& net, const Dataset& data, double lr) {
  if (!(lr > 0.0)) throw std::invalid_argument("gd_step: lr must be positive");
  const kernels::Gradient g = kernels::loss_gradient(net, data);
  Network out = net;
  apply_step(out, g, lr);
  if (!out.W.all_finite() || !out.H.all_finite())
    throw DivergenceError("gd_step: non-finite parameters after step");
  return out;
}

TrainResult train(const TrainConfig& config) {
  validate(config);
  Network net = initial_network(config);
  landscape::validate(net, config.data);

  TrainTrace trace;
  trace.d = net.input_dim();
  trace.hidden = net.hidden_count();
  trace.outputs = net.output_dim();
  trace.act = config.act;
  trace.record_every = config.record_every;
  trace.loss_epochs.reserve(config.epochs + 1);
  trace.loss.reserve(config.epochs + 1);

  record(trace, net, 0);
  for (long epoch = 0; epoch < config.epochs; ++epoch) {
    const Matrix e = kernels::residuals(net, config.data);
    double sq = 0.0;
    for (std::size_t k = 0; k < e.rows(); ++k) {
      double sk = 0.0;
      for (std::size_t j = 0; j < e.cols(); ++j) sk += e(k, j) * e(k, j);
      sq += sk;
    }
    trace.loss_epochs.push_back(epoch);
    trace.loss.push_back(0.5 * sq);

    const kernels::Gradient g = kernels::loss_gradient(net, config.data, e);
    apply_step(net, g, config.lr);
    if (!net.W.all_finite() || !net.H.all_finite())
      throw DivergenceError("train: diverged at epoch " + std::to_string(epoch + 1));

    const long done = epoch + 1;
    if (done % config.record_every == 0 || done == config.epochs) record(trace, net, done);
  }
  trace.loss_epochs.push_back(config.epochs);
  trace.loss.push_back(kernels::loss(net, config.data));
  return {std::move(trace), std::move(net)};
}

Network network_at(const TrainTrace& trace, std::size_t rec) {
  Network net;
  net.act = trace.act;
  net.W = Matrix(trace.hidden, trace.d);
  net.H = Matrix(trace.outputs, trace.hidden);
  for (std::size_t i = 0; i < trace.hidden; ++i) {
    for (std::size_t c = 0; c < trace.d; ++c)
      net.W(i, c) = trace.norms[rec][i] * trace.dirs[rec][i * trace.d + c];
    for (std::size_t j = 0; j < trace.outputs; ++j) net.H(j, i) = trace.outs[rec][j * trace.hidden + i];
  }
  return net;
}

Vec balance_drift(const TrainTrace& trace) {
  Vec drift(trace.hidden, 0.0);
  if (trace.balance.empty()) return drift;
  for (const Vec& bal : trace.balance)
    for (std::size_t i = 0; i < trace.hidden; ++i)
      drift[i] = std::max(drift[i], std::abs(bal[i] - trace.balance.front()[i]));
  return drift;
}

std::vector<std::array<long, 2>> detect_plateaus(std::span<const long> epochs,
                                                 std::span<const double> losses, double eps_rate,
                                                 long window) {
  if (!(eps_rate > 0.0)) throw std::invalid_argument("detect_plateaus: eps_rate must be positive");
  if (window < 2) throw std::invalid_argument("detect_plateaus: window must be >= 2");
  if (epochs.size() != losses.size()) throw std::invalid_argument("detect_plateaus: size mismatch");
  std::vector<std::array<long, 2>> out;
  if (epochs.empty()) return out;

  const long first = epochs.front();
  std::vector<std::size_t> flagged;
  std::size_t lo = 0;
  for (std::size_t idx = 0; idx < epochs.size(); ++idx) {
    if (epochs[idx] - first < window) continue;
    while (lo + 1 < idx && epochs[lo + 1] <= epochs[idx] - window) ++lo;
    const double span = static_cast<double>(epochs[idx] - epochs[lo]);
    const double rate = (losses[lo] - losses[idx]) / (span * std::max(losses[lo], kTiny));
    if (rate < eps_rate) flagged.push_back(idx);
  }
  for (std::size_t n = 0; n < flagged.size();) {
    std::size_t m = n;
    while (m + 1 < flagged.size() && flagged[m + 1] == flagged[m] + 1) ++m;
    const long start = std::max(first, epochs[flagged[n]] - window);
    out.push_back({start, epochs[flagged[m]]});
    n = m + 1;
  }
  return out;
}

std::vector<std::array<long, 2>> detect_plateaus(const TrainTrace& trace, double eps_rate,
                                                 long window) {
  return detect_plateaus(trace.loss_epochs, trace.loss, eps_rate, window);
}

std::vector<std::vector<std::size_t>> group_neurons(const Network& net, const Dataset& data,
                                                    double cos_tol) {
  if (!(cos_tol > 0.0 && cos_tol < 1.0))
    throw std::invalid_argument("group_neurons: cos_tol must be in (0, 1)");
  std::vector<std::size_t> living;
  for (std::size_t i = 0; i < net.hidden_count(); ++i)
    if (!is_dead(net, data, i) && norm(net.W.row(i)) > 0.0) living.push_back(i);

  std::vector<std::size_t> parent(living.size());
  for (std::size_t n = 0; n < parent.size(); ++n) parent[n] = n;
  auto find = [&](std::size_t n) {
    while (parent[n] != n) n = parent[n] = parent[parent[n]];
    return n;
  };
  std::vector<Vec> units;
  units.reserve(living.size());
  for (std::size_t i : living) units.push_back(normalized(net.W.row(i)));
  for (std::size_t a = 0; a < living.size(); ++a)
    for (std::size_t b = a + 1; b < living.size(); ++b)
      if (dot(units[a], units[b]) >= 1.0 - cos_tol) parent[find(a)] = find(b);

  std::vector<std::vector<std::size_t>> groups;
  std::vector<long> slot(living.size(), -1);
  for (std::size_t n = 0; n < living.size(); ++n) {
    const std::size_t root = find(n);
    if (slot[root] < 0) {
      slot[root] = static_cast<long>(groups.size());
      groups.emplace_back();
    }
    groups[slot[root]].push_back(living[n]);
  }
  return groups;
}

double default_small_tol(const Network& net, const Dataset& data) {
  constexpr double kFloor = 1e-3;
  Vec large;
  for (std::size_t i = 0; i < net.hidden_count(); ++i) {
    if (is_dead(net, data, i)) continue;
    const double amp = neuron_amp(net, i);
    if (amp >= kFloor) large.push_back(amp);
  }
  if (large.empty()) return kFloor;
  std::sort(large.begin(), large.end());
  return std::max(kFloor, 1e-2 * large[large.size() / 2]);
}

std::vector<NeuronStatus> neuron_status(const Network& net, const Dataset& data, double small_tol) {
  validate(net, data);
  if (small_tol <= 0.0) small_tol = default_small_tol(net, data);
  std::vector<NeuronStatus> out(net.hidden_count());
  for (std::size_t i = 0; i < net.hidden_count(); ++i) {
    if (is_dead(net, data, i))
      out[i] = NeuronStatus::kDead;
    else if (neuron_amp(net, i) < small_tol)
      out[i] = NeuronStatus::kSmallLiving;
    else
      out[i] = NeuronStatus::kActive;
  }
  return out;
}

namespace {

std::size_t rec_at_or_before(const TrainTrace& trace, long epoch) {
  auto it = std::upper_bound(trace.rec_epochs.begin(), trace.rec_epochs.end(), epoch);
  if (it == trace.rec_epochs.begin()) return 0;
  return static_cast<std::size_t>(it - trace.rec_epochs.begin() - 1);
}

std::size_t rec_at_or_after(const TrainTrace& trace, long epoch) {
  auto it = std::lower_bound(trace.rec_epochs.begin(), trace.rec_epochs.end(), epoch);
  if (it == trace.rec_epochs.end()) return trace.rec_epochs.size() - 1;
  return static_cast<std::size_t>(it - trace.rec_epochs.begin());
}

double amp_at(const TrainTrace& trace, std::size_t rec, std::size_t i) {
  double s = trace.norms[rec][i] * trace.norms[rec][i];
  for (std::size_t j = 0; j < trace.outputs; ++j) {
    const double h = trace.outs[rec][j * trace.hidden + i];
    s += h * h;
  }
  return std::sqrt(s);
}

std::vector<std::vector<std::size_t>> cluster_subset(const TrainTrace& trace, std::size_t rec,
                                                     const std::vector<std::size_t>& subset,
                                                     double cos_tol) {
  std::vector<std::size_t> parent(subset.size());
  for (std::size_t n = 0; n < parent.size(); ++n) parent[n] = n;
  auto find = [&](std::size_t n) {
    while (parent[n] != n) n = parent[n] = parent[parent[n]];
    return n;
  };
  const std::size_t d = trace.d;
  auto unit = [&](std::size_t i) {
    return std::span<const double>(trace.dirs[rec].data() + i * d, d);
  };
  for (std::size_t a = 0; a < subset.size(); ++a)
    for (std::size_t b = a + 1; b < subset.size(); ++b)
      if (dot(unit(subset[a]), unit(subset[b])) >= 1.0 - cos_tol) parent[find(a)] = find(b);
  std::vector<std::vector<std::size_t>> groups;
  std::vector<long> slot(subset.size(), -1);
  for (std::size_t n = 0; n < subset.size(); ++n) {
    const std::size_t root = find(n);
    if (slot[root] < 0) {
      slot[root] = static_cast<long>(groups.size());
      groups.emplace_back();
    }
    groups[slot[root]].push_back(subset[n]);
  }
  return groups;
}

}  // namespace

SaddleEscapeReport saddle_escape_report(const TrainTrace& trace, const Dataset& data,
                                        double eps_rate, long window) {
  SaddleEscapeReport report;
  report.plateaus = detect_plateaus(trace, eps_rate, window);
  if (report.plateaus.empty()) return report;

  const std::size_t n = report.plateaus.size();
  std::vector<bool> small_present(n, false);
  std::vector<std::vector<std::size_t>> small_sets(n);
  for (std::size_t q = 0; q < n; ++q) {
    const std::size_t rec = rec_at_or_before(trace, report.plateaus[q][1]);
    const Network at = network_at(trace, rec);
    const auto status = neuron_status(at, data);
    for (std::size_t i = 0; i < status.size(); ++i)
      if (status[i] == NeuronStatus::kSmallLiving) small_sets[q].push_back(i);
    small_present[q] = !small_sets[q].empty();
  }

  for (std::size_t q = 0; q + 1 < n; ++q) {
    EscapeEvent event;
    event.plateau_end = report.plateaus[q][1];
    const std::size_t rec_b = rec_at_or_before(trace, report.plateaus[q][1]);
    const std::size_t rec_a = rec_at_or_after(trace, report.plateaus[q + 1][0]);
    std::vector<std::size_t> growing;
    for (std::size_t i : small_sets[q])
      if (amp_at(trace, rec_a, i) >= 10.0 * std::max(amp_at(trace, rec_b, i), kTiny))
        growing.push_back(i);
    event.growing_groups = cluster_subset(trace, rec_a, growing, 1e-3);
    report.escapes.push_back(std::move(event));
  }

  report.validated = true;
  for (std::size_t q = 0; q + 1 < n; ++q) report.validated = report.validated && small_present[q];
  report.validated = report.validated && !small_present[n - 1];
  return report;
}

std::string trace_to_csv(const TrainTrace& trace) {
  std::ostringstream os;
  os << "epoch,loss";
  for (std::size_t i = 0; i < trace.hidden; ++i) os << ",norm_" << i;
  if (trace.d == 2) {
    for (std::size_t i = 0; i < trace.hidden; ++i) os << ",angle_" << i;
  } else {
    for (std::size_t i = 0; i < trace.hidden; ++i)
      for (std::size_t c = 0; c < trace.d; ++c) os << ",dir_" << i << "_" << c;
  }
  for (std::size_t j = 0; j < trace.outputs; ++j)
    for (std::size_t i = 0; i < trace.hidden; ++i) os << ",h_" << j << "_" << i;
  for (std::size_t i = 0; i < trace.hidden; ++i) os << ",balance_" << i;
  os << "\n";

  for (std::size_t rec = 0; rec < trace.rec_epochs.size(); ++rec) {
    const long epoch = trace.rec_epochs[rec];
    auto it = std::lower_bound(trace.loss_epochs.begin(), trace.loss_epochs.end(), epoch);
    const double lv =
        it != trace.loss_epochs.end() && *it == epoch
            ? trace.loss[static_cast<std::size_t>(it - trace.loss_epochs.begin())]
            : std::numeric_limits<double>::quiet_NaN();
    os << epoch << "," << format17(lv);
    for (std::size_t i = 0; i < trace.hidden; ++i) os << "," << format17(trace.norms[rec][i]);
    if (trace.d == 2) {
      for (std::size_t i = 0; i < trace.hidden; ++i) os << "," << format17(trace.angle(rec, i));
    } else {
      for (std::size_t i = 0; i < trace.hidden; ++i)
        for (std::size_t c = 0; c < trace.d; ++c)
          os << "," << format17(trace.dirs[rec][i * trace.d + c]);
    }
    for (std::size_t j = 0; j < trace.outputs; ++j)
      for (std::size_t i = 0; i < trace.hidden; ++i)
        os << "," << format17(trace.outs[rec][j * trace.hidden + i]);
    for (std::size_t i = 0; i < trace.hidden; ++i) os << "," << format17(trace.balance[rec][i]);
    os << "\n";
  }
  return os.str();
}

TrainTrace trace_from_csv(const std::string& text) {
  std::istringstream is(text);
  std::string header;
  if (!std::getline(is, header)) throw std::invalid_argument("trace csv: empty");
  std::vector<std::string> cols;
  {
    std::istringstream hs(header);
    std::string tok;
    while (std::getline(hs, tok, ',')) cols.push_back(tok);
  }
  if (cols.size() < 2 || cols[0] != "epoch" || cols[1] != "loss")
    throw std::invalid_argument("trace csv: bad header");
  TrainTrace trace;
  std::size_t n_norm = 0, n_angle = 0, n_dir = 0, n_h = 0, n_bal = 0, max_j = 0, max_c = 0;
  for (const std::string& c : cols) {
    if (c.rfind("norm_", 0) == 0) ++n_norm;
    else if (c.rfind("angle_", 0) == 0) ++n_angle;
    else if (c.rfind("dir_", 0) == 0) {
      ++n_dir;
      const auto mid = c.find('_', 4);
      max_c = std::max(max_c, static_cast<std::size_t>(std::stoul(c.substr(mid + 1))));
    } else if (c.rfind("h_", 0) == 0) {
      ++n_h;
      max_j = std::max(max_j, static_cast<std::size_t>(std::stoul(c.substr(2, c.find('_', 2) - 2))));
    } else if (c.rfind("balance_", 0) == 0) {
      ++n_bal;
    }
  }
  trace.hidden = n_norm;
  trace.d = n_angle > 0 ? 2 : (n_norm > 0 ? max_c + 1 : 0);
  trace.outputs = max_j + 1;
  if (n_norm == 0 || n_bal != n_norm || n_h != trace.outputs * trace.hidden)
    throw std::invalid_argument("trace csv: inconsistent columns");

  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string tok;
    Vec row;
    while (std::getline(ls, tok, ',')) row.push_back(std::stod(tok));
    if (row.size() != cols.size()) throw std::invalid_argument("trace csv: ragged row");
    std::size_t at = 0;
    const long epoch = static_cast<long>(row[at++]);
    trace.rec_epochs.push_back(epoch);
    trace.loss_epochs.push_back(epoch);
    trace.loss.push_back(row[at++]);
    Vec norms(row.begin() + at, row.begin() + at + trace.hidden);
    at += trace.hidden;
    Vec dirs(trace.hidden * trace.d, 0.0);
    if (n_angle > 0) {
      for (std::size_t i = 0; i < trace.hidden; ++i) {
        dirs[i * 2] = std::cos(row[at + i]);
        dirs[i * 2 + 1] = std::sin(row[at + i]);
        if (norms[i] == 0.0) dirs[i * 2] = dirs[i * 2 + 1] = 0.0;
      }
      at += trace.hidden;
    } else {
      for (std::size_t n2 = 0; n2 < trace.hidden * trace.d; ++n2) dirs[n2] = row[at + n2];
      at += trace.hidden * trace.d;
    }
    Vec outs(row.begin() + at, row.begin() + at + trace.outputs * trace.hidden);
    at += trace.outputs * trace.hidden;
    Vec bal(row.begin() + at, row.begin() + at + trace.hidden);
    trace.norms.push_back(std::move(norms));
    trace.dirs.push_back(std::move(dirs));
    trace.outs.push_back(std::move(outs));
    trace.balance.push_back(std::move(bal));
  }
  trace.record_every = trace.rec_epochs.size() > 2 ? trace.rec_epochs[1] - trace.rec_epochs[0] : 1;
  return trace;
}

std::string events_to_json(const SaddleEscapeReport& report) {
  nlohmann::json j;
  nlohmann::json plats = nlohmann::json::array();
  for (const auto& p : report.plateaus) plats.push_back({p[0], p[1]});
  j["plateaus"] = std::move(plats);
  nlohmann::json escapes = nlohmann::json::array();
  for (const auto& e : report.escapes) {
    nlohmann::json je;
    je["plateau_end"] = e.plateau_end;
    je["growing_groups"] = e.growing_groups;
    je["validated"] = report.validated;
    escapes.push_back(std::move(je));
  }
  j["escapes"] = std::move(escapes);
  j["validated"] = report.validated;
  return j.dump();
}

}  // namespace landscape::dynamics

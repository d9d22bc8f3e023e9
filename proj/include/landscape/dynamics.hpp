#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "landscape/core.hpp"
#include "landscape/kernels.hpp"

namespace landscape::dynamics {

struct TrainConfig {
  Dataset data;
  int hidden = 50;
  double init_std = 1e-6;
  std::uint64_t init_seed = 1;
  double lr = 1e-3;
  long epochs = 1;
  long record_every = 100;
  Activation act{1.0, 0.0};
};

void validate(const TrainConfig& config);

/// Per-epoch loss plus per-neuron series at recorded epochs. Directions are
/// stored as unit vectors (zero rows for zero weights); balance is
/// ||w_i||^2 - sum_j h_ji^2.
struct TrainTrace {
  std::size_t d = 0, hidden = 0, outputs = 0;
  Activation act{1.0, 0.0};
  long record_every = 100;

  std::vector<long> loss_epochs;
  Vec loss;

  std::vector<long> rec_epochs;
  std::vector<Vec> norms;    // [rec][i]
  std::vector<Vec> dirs;     // [rec][i*d + c]
  std::vector<Vec> outs;     // [rec][j*hidden + i]
  std::vector<Vec> balance;  // [rec][i]

  /// Counterclockwise angle of w_i against (1, 0); input dimension 2 only.
  double angle(std::size_t rec, std::size_t i) const;
};

struct TrainResult {
  TrainTrace trace;
  Network net;
};

struct DivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// One full-batch step P <- P - lr * g under the training branch convention.
Network gd_step(const Network& net, const Dataset& data, double lr);

/// Deterministic full-batch training. Weights are initialized i.i.d.
/// normal(0, init_std^2) from init_seed via the versioned generator, W
/// entries row-major first, then H.
TrainResult train(const TrainConfig& config);

Network initial_network(const TrainConfig& config);

/// Reconstructs the network at a recorded epoch from the stored series.
Network network_at(const TrainTrace& trace, std::size_t rec);

/// Per-neuron max |balance(t) - balance(0)| over recorded epochs.
Vec balance_drift(const TrainTrace& trace);

/// Maximal intervals [start, end] (in epochs) on which the windowed relative
/// loss decrease per epoch stays below eps_rate. The window is backward
/// looking, so an interval ends roughly where the loss starts dropping.
std::vector<std::array<long, 2>> detect_plateaus(std::span<const long> epochs,
                                                 std::span<const double> losses,
                                                 double eps_rate = 1e-7, long window = 1000);
std::vector<std::array<long, 2>> detect_plateaus(const TrainTrace& trace, double eps_rate = 1e-7,
                                                 long window = 1000);

/// Single-linkage clustering of living (non-dead) neurons by input-weight
/// direction; two neurons merge when their cosine is >= 1 - cos_tol.
std::vector<std::vector<std::size_t>> group_neurons(const Network& net, const Dataset& data,
                                                    double cos_tol = 1e-3);

enum class NeuronStatus { kDead, kSmallLiving, kActive };

/// Dead: the activation is zero on every sample. Small living: not dead with
/// amplitude ||(w_i, h_:i)|| below small_tol. small_tol <= 0 selects the
/// default rule: 1e-2 times the median amplitude of neurons above an
/// absolute floor of 1e-3, the floor itself when none qualify.
std::vector<NeuronStatus> neuron_status(const Network& net, const Dataset& data,
                                        double small_tol = 0.0);

double default_small_tol(const Network& net, const Dataset& data);

struct EscapeEvent {
  long plateau_end = 0;
  std::vector<std::vector<std::size_t>> growing_groups;  // grew >= 10x across the exit
};

struct SaddleEscapeReport {
  std::vector<std::array<long, 2>> plateaus;
  std::vector<EscapeEvent> escapes;
  // Every non-final plateau shows small living neurons and the final one none.
  bool validated = false;
};

SaddleEscapeReport saddle_escape_report(const TrainTrace& trace, const Dataset& data,
                                        double eps_rate = 1e-7, long window = 1000);

std::string trace_to_csv(const TrainTrace& trace);
TrainTrace trace_from_csv(const std::string& text);

std::string events_to_json(const SaddleEscapeReport& report);

}  // namespace landscape::dynamics

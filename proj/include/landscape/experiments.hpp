#pragma once

#include "landscape/dynamics.hpp"

namespace landscape::experiments {

struct ExperimentConfig {
  std::string name;
  dynamics::TrainConfig train;
};

/// Built-in experiment registry.
///   exp1: five 1-d inputs with a constant bias coordinate, scalar targets,
///         50 ReLU units, init std 5e-6, lr 1e-3, 500k epochs.
///   exp2: exp1 data at init std 8.75e-4, 600k epochs.
///   exp3: seven 3-d inputs, scalar targets, init std 9.51e-11.
///   exp4: four 2-d inputs, 2-d targets, init std 9.51e-11.
const std::vector<ExperimentConfig>& registry();

const ExperimentConfig& get(const std::string& name);

bool exists(const std::string& name);

}  // namespace landscape::experiments

#include "landscape/experiments.hpp"

namespace landscape::experiments {

namespace {

std::vector<ExperimentConfig> build_registry() {
  std::vector<ExperimentConfig> reg;

  Dataset d1;
  d1.X = Matrix::from_rows({{-1.0, 1.0}, {-0.6, 1.0}, {-0.1, 1.0}, {0.3, 1.0}, {0.7, 1.0}});
  d1.Y = Matrix::from_rows({{0.28}, {-0.1}, {0.03}, {0.23}, {-0.22}});

  {
    ExperimentConfig c;
    c.name = "exp1";
    c.train.data = d1;
    c.train.hidden = 50;
    c.train.init_std = 5e-6;
    c.train.init_seed = 1;
    c.train.lr = 1e-3;
    c.train.epochs = 500000;
    c.train.record_every = 100;
    c.train.act = Activation{1.0, 0.0};
    reg.push_back(std::move(c));
  }
  {
    ExperimentConfig c;
    c.name = "exp2";
    c.train.data = d1;
    c.train.hidden = 50;
    c.train.init_std = 8.75e-4;
    c.train.init_seed = 1;
    c.train.lr = 1e-3;
    c.train.epochs = 600000;
    c.train.record_every = 100;
    c.train.act = Activation{1.0, 0.0};
    reg.push_back(std::move(c));
  }
  {
    ExperimentConfig c;
    c.name = "exp3";
    c.train.data.X = Matrix::from_rows({{-0.3, -0.75, -0.5},
                                        {-0.2, -0.2, 0.4},
                                        {-0.6, 1.0, -1.0},
                                        {-0.4, 0.4, 0.3},
                                        {0.6, -0.1, -0.7},
                                        {0.4, -0.9, 0.3},
                                        {0.2, 0.2, -0.5}});
    c.train.data.Y =
        Matrix::from_rows({{-0.5}, {0.1}, {-0.6}, {0.3}, {0.8}, {-0.3}, {-0.1}});
    c.train.hidden = 50;
    c.train.init_std = 9.51e-11;
    c.train.init_seed = 1;
    c.train.lr = 1e-3;
    c.train.epochs = 800000;
    c.train.record_every = 100;
    c.train.act = Activation{1.0, 0.0};
    reg.push_back(std::move(c));
  }
  {
    ExperimentConfig c;
    c.name = "exp4";
    c.train.data.X =
        Matrix::from_rows({{-0.3, 0.5}, {1.0, 1.0}, {-0.6, -1.0}, {0.4, -0.4}});
    c.train.data.Y =
        Matrix::from_rows({{0.6, -0.5}, {0.5, -1.0}, {-0.4, 0.6}, {0.8, 0.2}});
    c.train.hidden = 50;
    c.train.init_std = 9.51e-11;
    c.train.init_seed = 1;
    c.train.lr = 1e-3;
    c.train.epochs = 400000;
    c.train.record_every = 100;
    c.train.act = Activation{1.0, 0.0};
    reg.push_back(std::move(c));
  }
  return reg;
}

}  // namespace

const std::vector<ExperimentConfig>& registry() {
  static const std::vector<ExperimentConfig> reg = build_registry();
  return reg;
}

bool exists(const std::string& name) {
  for (const auto& c : registry())
    if (c.name == name) return true;
  return false;
}

const ExperimentConfig& get(const std::string& name) {
  for (const auto& c : registry())
    if (c.name == name) return c;
  throw std::invalid_argument("unknown experiment: " + name);
}

}  // namespace landscape::experiments

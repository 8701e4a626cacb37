#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "swarmsync/cluster.hpp"
#include "swarmsync/model.hpp"
#include "swarmsync/optim.hpp"
#include "swarmsync/sync.hpp"
#include "swarmsync/tensor.hpp"

namespace swarmsync {

enum class Precision { F32, F64 };

// Full experiment manifest. Sections mirror the config file format:
// [model], [data], [run], [pso]. Every cross-field constraint is
// re-validated here with key-addressable messages.
struct ExperimentConfig {
  // [model]
  std::string model_kind = "mlp";  // mlp | lenet-small
  std::vector<Index> hidden = {128};
  Index input_dim = 784;  // mlp input size; lenet-small is fixed to 1x28x28
  Index classes = 10;

  // [data]
  std::string data_source = "synthetic";  // mnist | synthetic
  std::string train_images, train_labels, test_images, test_labels;
  long limit_train = 0;  // 0 = all
  long limit_test = 0;
  long synth_train_per_class = 100;
  long synth_test_per_class = 20;
  Index synth_input_dim = 16;
  double synth_spread = 0.05;
  std::uint64_t synth_seed = 1;

  // [run]
  int n = 4;
  Strategy strategy = Strategy::PSOPS;
  long step = 10;
  long batch_size = 64;
  long epoch_size = 5;
  OptimizerKind optimizer = OptimizerKind::Adam;
  double learning_rate = 1e-3;
  double ssgd_alpha = 0.0;  // 0 = use learning_rate
  std::uint64_t seed = 42;
  Precision precision = Precision::F64;
  std::string output = "metrics.csv";
  long eval_every = 1;  // epochs between test evaluations; 0 disables
  TransportKind transport = TransportKind::InProcess;
  std::vector<std::string> tcp_addrs;
  double tcp_timeout = 30.0;
  ExecutionMode execution = ExecutionMode::Threads;

  // [pso]
  PsoConfig pso;

  bool operator==(const ExperimentConfig&) const = default;

  ModelSpec build_model_spec() const;
  SyncConfig build_sync_config() const;
  void validate() const;  // throws ConfigError naming the key
};

// Parses the file format; errors carry "<origin>:<line>".
ExperimentConfig parse_config_text(const std::string& text, const std::string& origin);
ExperimentConfig load_config(const std::string& path);

// Applies one "section.key=value" override.
void apply_override(ExperimentConfig& cfg, const std::string& assignment);

std::string save_config(const ExperimentConfig& cfg);

}  // namespace swarmsync

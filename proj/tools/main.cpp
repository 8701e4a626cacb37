#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "swarmsync/config.hpp"
#include "swarmsync/data.hpp"
#include "swarmsync/errors.hpp"
#include "swarmsync/experiment.hpp"
#include "swarmsync/metrics.hpp"

namespace {

using namespace swarmsync;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;
constexpr int kExitTransport = 4;

std::string eval_path_for(const std::string& metrics_path) {
  const auto dot = metrics_path.rfind('.');
  if (dot == std::string::npos) return metrics_path + "_eval";
  return metrics_path.substr(0, dot) + "_eval" + metrics_path.substr(dot);
}

struct RunArtifacts {
  StrategySummary summary;
  std::vector<MetricsRecord> metrics;
  std::vector<EvalRecord> evals;
};

template <typename Scalar>
RunArtifacts execute(const ExperimentConfig& cfg) {
  auto [train, test] = load_datasets<Scalar>(cfg);
  std::fprintf(stderr, "[%s] train=%lld test=%lld n=%d step=%ld batch=%ld epochs=%ld\n",
               make_run_id(cfg).c_str(), static_cast<long long>(train.size()),
               static_cast<long long>(test.size()), cfg.n, cfg.step, cfg.batch_size, cfg.epoch_size);
  auto result = run_experiment<Scalar>(cfg, train, test);

  RunArtifacts art;
  art.summary.strategy = strategy_name(cfg.strategy);
  for (const auto& e : result.worker_eval) art.summary.worker_accuracies.push_back(e.accuracy);
  if (result.gbest_eval) art.summary.gbest_accuracy = result.gbest_eval->accuracy;
  art.metrics = std::move(result.metrics);
  art.evals = std::move(result.eval_records);
  std::fprintf(stderr, "[%s] sync_rounds=%ld dropped_per_epoch=%ld\n", result.run_id.c_str(),
               result.sync_rounds, result.dropped_per_epoch);
  return art;
}

RunArtifacts execute_any(const ExperimentConfig& cfg) {
  if (cfg.precision == Precision::F32) return execute<float>(cfg);
  return execute<double>(cfg);
}

int cmd_run(const ExperimentConfig& cfg) {
  RunArtifacts art = execute_any(cfg);
  write_metrics_csv(art.metrics, cfg.output);
  if (!art.evals.empty()) write_eval_csv(art.evals, eval_path_for(cfg.output));
  std::cout << summary_table({art.summary});
  std::cout << "metrics: " << cfg.output << "\n";
  return kExitOk;
}

int cmd_compare(const ExperimentConfig& base) {
  std::vector<MetricsRecord> joined;
  std::vector<EvalRecord> joined_evals;
  std::vector<StrategySummary> rows;
  for (Strategy s : {Strategy::PA, Strategy::SSGD, Strategy::PSOPS}) {
    ExperimentConfig cfg = base;
    cfg.strategy = s;
    RunArtifacts art = execute_any(cfg);
    rows.push_back(std::move(art.summary));
    for (auto& m : art.metrics) joined.push_back(std::move(m));
    for (auto& e : art.evals) joined_evals.push_back(std::move(e));
  }
  write_metrics_csv(joined, base.output);
  if (!joined_evals.empty()) write_eval_csv(joined_evals, eval_path_for(base.output));
  std::cout << summary_table(rows);
  std::cout << "metrics: " << base.output << "\n";
  return kExitOk;
}

int cmd_inspect_idx(const std::vector<std::string>& paths) {
  for (const auto& path : paths) {
    const auto bytes = read_file_bytes(path);
    if (bytes.size() < 8) throw FormatError(path + ": truncated header");
    const std::uint32_t magic = detail::read_u32_be(bytes, 0);
    const std::uint32_t count = detail::read_u32_be(bytes, 4);
    if (magic == kIdxImagesMagic) {
      if (bytes.size() < 16) throw FormatError(path + ": truncated image header");
      const std::uint32_t h = detail::read_u32_be(bytes, 8);
      const std::uint32_t w = detail::read_u32_be(bytes, 12);
      std::cout << path << ": images, magic=2051, count=" << count << ", rows=" << h
                << ", cols=" << w << ", payload=" << bytes.size() - 16 << " bytes\n";
    } else if (magic == kIdxLabelsMagic) {
      std::cout << path << ": labels, magic=2049, count=" << count
                << ", payload=" << bytes.size() - 8 << " bytes\n";
    } else {
      throw FormatError(path + ": unknown IDX magic " + std::to_string(magic));
    }
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Data-parallel training simulator with swarm-based parameter synchronization"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  std::string strategy_flag, output_flag;
  long n_flag = -1, step_flag = -1, epochs_flag = -1;
  long long seed_flag = -1;

  auto add_run_flags = [&](CLI::App* cmd) {
    cmd->add_option("-c,--config", config_path, "experiment config file")->required();
    cmd->add_option("--set", overrides, "override, e.g. --set run.step=5")->take_all();
    cmd->add_option("--strategy", strategy_flag, "pa | ssgd | pso-ps");
    cmd->add_option("--n", n_flag, "worker count");
    cmd->add_option("--seed", seed_flag, "base seed");
    cmd->add_option("--step", step_flag, "synchronization period");
    cmd->add_option("--epochs", epochs_flag, "epoch count");
    cmd->add_option("-o,--output", output_flag, "metrics CSV path");
  };

  CLI::App* run = app.add_subcommand("run", "run one experiment");
  add_run_flags(run);
  CLI::App* compare = app.add_subcommand("compare", "run pa, ssgd and pso-ps with shared seeds");
  add_run_flags(compare);

  CLI::App* inspect = app.add_subcommand("inspect-idx", "print IDX file header info");
  std::vector<std::string> idx_paths;
  inspect->add_option("files", idx_paths, "IDX files")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (inspect->parsed()) return cmd_inspect_idx(idx_paths);

    swarmsync::ExperimentConfig cfg = swarmsync::load_config(config_path);
    for (const auto& o : overrides) swarmsync::apply_override(cfg, o);
    if (!strategy_flag.empty()) swarmsync::apply_override(cfg, "run.strategy=" + strategy_flag);
    if (n_flag >= 0) swarmsync::apply_override(cfg, "run.n=" + std::to_string(n_flag));
    if (seed_flag >= 0) swarmsync::apply_override(cfg, "run.seed=" + std::to_string(seed_flag));
    if (step_flag >= 0) swarmsync::apply_override(cfg, "run.step=" + std::to_string(step_flag));
    if (epochs_flag >= 0) swarmsync::apply_override(cfg, "run.epoch_size=" + std::to_string(epochs_flag));
    if (!output_flag.empty()) cfg.output = output_flag;
    cfg.validate();

    if (run->parsed()) return cmd_run(cfg);
    return cmd_compare(cfg);
  } catch (const swarmsync::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const swarmsync::FormatError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const swarmsync::TransportError& e) {
    std::cerr << "transport error: " << e.what() << "\n";
    return kExitTransport;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

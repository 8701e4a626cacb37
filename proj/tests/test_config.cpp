#include <cstdlib>
#include <string>

#include "doctest.h"
#include "swarmsync/config.hpp"
#include "swarmsync/experiment.hpp"
#include "swarmsync/metrics.hpp"

using namespace swarmsync;

namespace {

const char* kMinimalConfig = R"(
[model]
kind = mlp
hidden = 16
input_dim = 6
classes = 3

[data]
source = synthetic
synth_train_per_class = 40
synth_test_per_class = 10
synth_input_dim = 6

[run]
n = 2
strategy = pso-ps
step = 3
batch_size = 8
epoch_size = 2
seed = 7
)";

}  // namespace

TEST_SUITE("config") {

TEST_CASE("an omitted pso section keeps the documented defaults") {
  const auto cfg = parse_config_text(kMinimalConfig, "test");
  CHECK(cfg.pso.m_max == 0.9);
  CHECK(cfg.pso.m_min == 0.3);
  CHECK(cfg.pso.c1 == 0.2);
  CHECK(cfg.pso.c2 == 0.9);
  CHECK(cfg.pso.lambda_mode == LambdaMode::CurrentEpoch);
  CHECK(cfg.pso.r_mode == RMode::ScalarPerParticle);
  CHECK(cfg.strategy == Strategy::PSOPS);
  CHECK(cfg.n == 2);
}

TEST_CASE("constraint violations are rejected with the key name") {
  auto expect_reject = [](const std::string& extra, const std::string& needle) {
    const std::string text = std::string(kMinimalConfig) + extra;
    try {
      (void)parse_config_text(text, "test");
      FAIL_CHECK("expected ConfigError for: " << extra);
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find(needle) != std::string::npos);
    }
  };
  expect_reject("\n[run]\nstep = 0\n", "step");
  expect_reject("\n[pso]\nm_max = 0.2\nm_min = 0.5\n", "m_min");
  expect_reject("\n[run]\nbatch_size = -1\n", "batch_size");
  expect_reject("\n[run]\nnope = 1\n", "nope");
  expect_reject("\n[weird]\nx = 1\n", "weird");
  expect_reject("\n[run]\nstep = abc\n", "step");
}

TEST_CASE("parse errors carry file and line") {
  try {
    (void)parse_config_text("[run]\nstep 10\n", "conf.ini");
    FAIL_CHECK("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("conf.ini:2") != std::string::npos);
  }
}

TEST_CASE("save and reload round-trips the config") {
  auto cfg = parse_config_text(kMinimalConfig, "test");
  cfg.pso.c2 = 0.7125;
  cfg.learning_rate = 3.5e-4;
  cfg.tcp_addrs = {"127.0.0.1:9000", "127.0.0.1:9001"};
  const std::string saved = save_config(cfg);
  const auto reloaded = parse_config_text(saved, "saved");
  CHECK(reloaded == cfg);
  CHECK(save_config(reloaded) == saved);
}

TEST_CASE("overrides replace file values and are validated") {
  auto cfg = parse_config_text(kMinimalConfig, "test");
  apply_override(cfg, "run.step=5");
  CHECK(cfg.step == 5);
  apply_override(cfg, "pso.c1=0.4");
  CHECK(cfg.pso.c1 == 0.4);
  CHECK_THROWS_AS(apply_override(cfg, "run.step"), ConfigError);
  CHECK_THROWS_AS(apply_override(cfg, "step=5"), ConfigError);
  CHECK_THROWS_AS(apply_override(cfg, "run.bogus=1"), ConfigError);
}

TEST_CASE("model spec builders match their manifest") {
  auto cfg = parse_config_text(kMinimalConfig, "test");
  const ModelSpec mlp = cfg.build_model_spec();
  CHECK(mlp.input_shape == std::vector<Index>{6});
  CHECK(mlp.layers.size() == 3);
  CHECK_NOTHROW(validate_spec(mlp));

  cfg.model_kind = "lenet-small";
  cfg.classes = 10;
  const ModelSpec lenet = cfg.build_model_spec();
  CHECK(lenet.input_shape == std::vector<Index>{1, 28, 28});
  CHECK_NOTHROW(validate_spec(lenet));
  CHECK(make_layout(lenet).total_size == 44426);
}

TEST_CASE("tcp transport validation needs one address per worker") {
  auto cfg = parse_config_text(kMinimalConfig, "test");
  cfg.transport = TransportKind::Tcp;
  cfg.tcp_addrs = {"127.0.0.1:9000"};
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.tcp_addrs = {"127.0.0.1:9000", "127.0.0.1:9001"};
  CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("metrics csv emits the exact header for zero records") {
  const std::string csv = metrics_csv({});
  CHECK(csv ==
        "run_id,worker_index,t,epoch,phase,strategy,train_loss,inertia,lambda,gbest_worker,bytes_cum\n");
}

TEST_CASE("metrics csv rows merge by (t, worker) and render 17 significant digits") {
  std::vector<MetricsRecord> recs;
  MetricsRecord a;
  a.run_id = "r";
  a.worker_index = 1;
  a.t = 2;
  a.epoch = 1;
  a.strategy = "pa";
  a.train_loss = 1.0 / 3.0;
  a.bytes_cum = 10;
  MetricsRecord b = a;
  b.worker_index = 0;
  MetricsRecord c = a;
  c.t = 1;
  c.sync_phase = true;
  recs = {a, b, c};
  const std::string csv = metrics_csv(recs);
  const std::string expect_loss = format_real(1.0 / 3.0);
  CHECK(std::stod(expect_loss) == 1.0 / 3.0);  // round-trippable
  const auto first_row = csv.find('\n') + 1;
  CHECK(csv.substr(first_row, 6) == "r,1,1,");  // (t=1) first, then t=2 by worker
  CHECK(csv.find("r,0,2,") < csv.find("r,1,2,"));
  CHECK(csv.find(expect_loss) != std::string::npos);
  CHECK(csv.find(",sync,") != std::string::npos);
}

TEST_CASE("row count equals workers times iterations") {
  auto cfg = parse_config_text(kMinimalConfig, "test");
  cfg.eval_every = 0;
  auto [train, test] = load_datasets<double>(cfg);
  const auto result = run_experiment<double>(cfg, train, test);
  // 120 training samples, batch 8 -> 15 iterations/epoch, 2 epochs
  CHECK(result.plan.iteration_size == 15);
  CHECK(result.metrics.size() == static_cast<std::size_t>(cfg.n * result.plan.max_t));
  const std::string csv = metrics_csv(result.metrics);
  long rows = -1;  // header
  for (char ch : csv) {
    if (ch == '\n') ++rows;
  }
  CHECK(rows == cfg.n * result.plan.max_t);
}

TEST_CASE("summary table shows avg max min and optional gbest") {
  StrategySummary s;
  s.strategy = "pso-ps";
  s.worker_accuracies = {0.98, 0.99, 0.99, 1.0};
  s.gbest_accuracy = 1.0;
  StrategySummary single;
  single.strategy = "ssgd";
  single.worker_accuracies = {0.97};
  const std::string table = summary_table({s, single});
  CHECK(table.find("99.00") != std::string::npos);   // avg
  CHECK(table.find("100.00") != std::string::npos);  // max and gbest
  CHECK(table.find("98.00") != std::string::npos);   // min
  CHECK(table.find("97.00") != std::string::npos);   // degenerate row: avg==max==min
}

TEST_CASE("format_real survives a parse round-trip on awkward values") {
  for (double v : {0.1, 1e-17, 123456789.123456789, -2.5e-308, 0.0}) {
    CHECK(std::stod(format_real(v)) == v);
  }
}

}  // TEST_SUITE

#pragma once

#include <optional>
#include <string>
#include <vector>

namespace swarmsync {

// One row per worker per iteration. inertia/lambda are filled on every
// PSO-PS row (both are defined per iteration); gbest_worker only on PSO-PS
// sync rows; all three stay blank for PA and SSGD.
struct MetricsRecord {
  std::string run_id;
  int worker_index = 0;
  long t = 0;
  long epoch = 0;
  bool sync_phase = false;
  std::string strategy;
  double train_loss = 0.0;
  std::optional<double> inertia;
  std::optional<long> lambda;
  std::optional<int> gbest_worker;
  long bytes_cum = 0;
};

struct EvalRecord {
  std::string run_id;
  int worker_index = 0;
  long epoch = 0;
  double test_loss = 0.0;
  double test_accuracy = 0.0;
};

// 17 significant digits; parses back to the identical double.
std::string format_real(double v);

extern const char* const kMetricsCsvHeader;  // exact header row

// Rows are merged by (t, worker_index) before writing.
std::string metrics_csv(std::vector<MetricsRecord> records);
void write_metrics_csv(const std::vector<MetricsRecord>& records, const std::string& path);

std::string eval_csv(std::vector<EvalRecord> records);
void write_eval_csv(const std::vector<EvalRecord>& records, const std::string& path);

// Per-strategy worker accuracy roll-up in Table-style columns.
struct StrategySummary {
  std::string strategy;
  std::vector<double> worker_accuracies;
  std::optional<double> gbest_accuracy;
};

std::string summary_table(const std::vector<StrategySummary>& rows);

}  // namespace swarmsync

#include "swarmsync/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "swarmsync/errors.hpp"

namespace swarmsync {

const char* const kMetricsCsvHeader =
    "run_id,worker_index,t,epoch,phase,strategy,train_loss,inertia,lambda,gbest_worker,bytes_cum";

std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string metrics_csv(std::vector<MetricsRecord> records) {
  std::stable_sort(records.begin(), records.end(), [](const MetricsRecord& a, const MetricsRecord& b) {
    if (a.t != b.t) return a.t < b.t;
    return a.worker_index < b.worker_index;
  });
  std::string out = kMetricsCsvHeader;
  out += '\n';
  for (const auto& r : records) {
    out += r.run_id;
    out += ',';
    out += std::to_string(r.worker_index);
    out += ',';
    out += std::to_string(r.t);
    out += ',';
    out += std::to_string(r.epoch);
    out += ',';
    out += r.sync_phase ? "sync" : "local";
    out += ',';
    out += r.strategy;
    out += ',';
    out += format_real(r.train_loss);
    out += ',';
    if (r.inertia) out += format_real(*r.inertia);
    out += ',';
    if (r.lambda) out += std::to_string(*r.lambda);
    out += ',';
    if (r.gbest_worker) out += std::to_string(*r.gbest_worker);
    out += ',';
    out += std::to_string(r.bytes_cum);
    out += '\n';
  }
  return out;
}

namespace {
void write_text_file(const std::string& text, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open for writing: " + path);
  f << text;
  if (!f) throw ConfigError("write failed: " + path);
}
}  // namespace

void write_metrics_csv(const std::vector<MetricsRecord>& records, const std::string& path) {
  write_text_file(metrics_csv(records), path);
}

std::string eval_csv(std::vector<EvalRecord> records) {
  std::stable_sort(records.begin(), records.end(), [](const EvalRecord& a, const EvalRecord& b) {
    if (a.epoch != b.epoch) return a.epoch < b.epoch;
    return a.worker_index < b.worker_index;
  });
  std::string out = "run_id,worker_index,epoch,test_loss,test_accuracy\n";
  for (const auto& r : records) {
    out += r.run_id;
    out += ',';
    out += std::to_string(r.worker_index);
    out += ',';
    out += std::to_string(r.epoch);
    out += ',';
    out += format_real(r.test_loss);
    out += ',';
    out += format_real(r.test_accuracy);
    out += '\n';
  }
  return out;
}

void write_eval_csv(const std::vector<EvalRecord>& records, const std::string& path) {
  write_text_file(eval_csv(records), path);
}

std::string summary_table(const std::vector<StrategySummary>& rows) {
  std::ostringstream os;
  char line[160];
  std::snprintf(line, sizeof line, "%-10s %8s %8s %8s %8s\n", "strategy", "avg%", "max%", "min%",
                "gbest%");
  os << line;
  for (const auto& row : rows) {
    double sum = 0, mx = 0, mn = 1;
    for (double a : row.worker_accuracies) {
      sum += a;
      mx = std::max(mx, a);
      mn = std::min(mn, a);
    }
    const double avg = row.worker_accuracies.empty() ? 0 : sum / row.worker_accuracies.size();
    if (row.gbest_accuracy) {
      std::snprintf(line, sizeof line, "%-10s %8.2f %8.2f %8.2f %8.2f\n", row.strategy.c_str(),
                    100 * avg, 100 * mx, 100 * mn, 100 * *row.gbest_accuracy);
    } else {
      std::snprintf(line, sizeof line, "%-10s %8.2f %8.2f %8.2f %8s\n", row.strategy.c_str(),
                    100 * avg, 100 * mx, 100 * mn, "-");
    }
    os << line;
  }
  return os.str();
}

}  // namespace swarmsync

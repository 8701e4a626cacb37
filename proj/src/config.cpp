#include "swarmsync/config.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "swarmsync/errors.hpp"
#include "swarmsync/metrics.hpp"

namespace swarmsync {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

struct KeyContext {
  std::string origin;
  int line = 0;
  std::string key;

  [[noreturn]] void fail(const std::string& why) const {
    throw ConfigError(origin + ":" + std::to_string(line) + ": key '" + key + "': " + why);
  }
};

long parse_long(const KeyContext& ctx, const std::string& v) {
  try {
    std::size_t pos = 0;
    const long out = std::stol(v, &pos);
    if (pos != v.size()) ctx.fail("expected an integer, got '" + v + "'");
    return out;
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception&) {
    ctx.fail("expected an integer, got '" + v + "'");
  }
}

std::uint64_t parse_u64(const KeyContext& ctx, const std::string& v) {
  try {
    std::size_t pos = 0;
    const unsigned long long out = std::stoull(v, &pos);
    if (pos != v.size()) ctx.fail("expected a non-negative integer, got '" + v + "'");
    return out;
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception&) {
    ctx.fail("expected a non-negative integer, got '" + v + "'");
  }
}

double parse_double(const KeyContext& ctx, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double out = std::stod(v, &pos);
    if (pos != v.size()) ctx.fail("expected a number, got '" + v + "'");
    return out;
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception&) {
    ctx.fail("expected a number, got '" + v + "'");
  }
}

std::vector<Index> parse_index_list(const KeyContext& ctx, const std::string& v) {
  std::vector<Index> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) ctx.fail("empty list element");
    out.push_back(static_cast<Index>(parse_long(ctx, item)));
  }
  if (out.empty()) ctx.fail("expected a comma-separated list of integers");
  return out;
}

std::vector<std::string> parse_string_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

void apply_key(ExperimentConfig& cfg, const std::string& section, const KeyContext& ctx,
               const std::string& value) {
  const std::string& key = ctx.key;
  if (section == "model") {
    if (key == "kind") {
      if (value != "mlp" && value != "lenet-small") ctx.fail("must be 'mlp' or 'lenet-small'");
      cfg.model_kind = value;
    } else if (key == "hidden") {
      cfg.hidden = parse_index_list(ctx, value);
    } else if (key == "input_dim") {
      cfg.input_dim = static_cast<Index>(parse_long(ctx, value));
    } else if (key == "classes") {
      cfg.classes = static_cast<Index>(parse_long(ctx, value));
    } else {
      ctx.fail("unknown key in [model]");
    }
  } else if (section == "data") {
    if (key == "source") {
      if (value != "mnist" && value != "synthetic") ctx.fail("must be 'mnist' or 'synthetic'");
      cfg.data_source = value;
    } else if (key == "train_images") {
      cfg.train_images = value;
    } else if (key == "train_labels") {
      cfg.train_labels = value;
    } else if (key == "test_images") {
      cfg.test_images = value;
    } else if (key == "test_labels") {
      cfg.test_labels = value;
    } else if (key == "limit_train") {
      cfg.limit_train = parse_long(ctx, value);
    } else if (key == "limit_test") {
      cfg.limit_test = parse_long(ctx, value);
    } else if (key == "synth_train_per_class") {
      cfg.synth_train_per_class = parse_long(ctx, value);
    } else if (key == "synth_test_per_class") {
      cfg.synth_test_per_class = parse_long(ctx, value);
    } else if (key == "synth_input_dim") {
      cfg.synth_input_dim = static_cast<Index>(parse_long(ctx, value));
    } else if (key == "synth_spread") {
      cfg.synth_spread = parse_double(ctx, value);
    } else if (key == "synth_seed") {
      cfg.synth_seed = parse_u64(ctx, value);
    } else {
      ctx.fail("unknown key in [data]");
    }
  } else if (section == "run") {
    if (key == "n") {
      cfg.n = static_cast<int>(parse_long(ctx, value));
    } else if (key == "strategy") {
      if (value == "pa") cfg.strategy = Strategy::PA;
      else if (value == "ssgd") cfg.strategy = Strategy::SSGD;
      else if (value == "pso-ps") cfg.strategy = Strategy::PSOPS;
      else ctx.fail("must be 'pa', 'ssgd' or 'pso-ps'");
    } else if (key == "step") {
      cfg.step = parse_long(ctx, value);
    } else if (key == "batch_size") {
      cfg.batch_size = parse_long(ctx, value);
    } else if (key == "epoch_size") {
      cfg.epoch_size = parse_long(ctx, value);
    } else if (key == "optimizer") {
      if (value == "sgd") cfg.optimizer = OptimizerKind::Sgd;
      else if (value == "adam") cfg.optimizer = OptimizerKind::Adam;
      else ctx.fail("must be 'sgd' or 'adam'");
    } else if (key == "learning_rate") {
      cfg.learning_rate = parse_double(ctx, value);
    } else if (key == "ssgd_alpha") {
      cfg.ssgd_alpha = parse_double(ctx, value);
    } else if (key == "seed") {
      cfg.seed = parse_u64(ctx, value);
    } else if (key == "precision") {
      if (value == "f32") cfg.precision = Precision::F32;
      else if (value == "f64") cfg.precision = Precision::F64;
      else ctx.fail("must be 'f32' or 'f64'");
    } else if (key == "output") {
      cfg.output = value;
    } else if (key == "eval_every") {
      cfg.eval_every = parse_long(ctx, value);
    } else if (key == "transport") {
      if (value == "in-process") cfg.transport = TransportKind::InProcess;
      else if (value == "tcp") cfg.transport = TransportKind::Tcp;
      else ctx.fail("must be 'in-process' or 'tcp'");
    } else if (key == "tcp_addrs") {
      cfg.tcp_addrs = parse_string_list(value);
    } else if (key == "tcp_timeout") {
      cfg.tcp_timeout = parse_double(ctx, value);
    } else if (key == "execution") {
      if (value == "threads") cfg.execution = ExecutionMode::Threads;
      else if (value == "round-robin") cfg.execution = ExecutionMode::RoundRobin;
      else ctx.fail("must be 'threads' or 'round-robin'");
    } else {
      ctx.fail("unknown key in [run]");
    }
  } else if (section == "pso") {
    if (key == "m_max") {
      cfg.pso.m_max = parse_double(ctx, value);
    } else if (key == "m_min") {
      cfg.pso.m_min = parse_double(ctx, value);
    } else if (key == "c1") {
      cfg.pso.c1 = parse_double(ctx, value);
    } else if (key == "c2") {
      cfg.pso.c2 = parse_double(ctx, value);
    } else if (key == "lambda_mode") {
      if (value == "current-epoch") cfg.pso.lambda_mode = LambdaMode::CurrentEpoch;
      else if (value == "fixed-epoch-size") cfg.pso.lambda_mode = LambdaMode::FixedEpochSize;
      else ctx.fail("must be 'current-epoch' or 'fixed-epoch-size'");
    } else if (key == "r_mode") {
      if (value == "scalar") cfg.pso.r_mode = RMode::ScalarPerParticle;
      else if (value == "per-dimension") cfg.pso.r_mode = RMode::PerDimension;
      else ctx.fail("must be 'scalar' or 'per-dimension'");
    } else if (key == "gbest_mode") {
      if (value == "current-round") cfg.pso.gbest_mode = GBestMode::CurrentRound;
      else if (value == "historical") cfg.pso.gbest_mode = GBestMode::Historical;
      else ctx.fail("must be 'current-round' or 'historical'");
    } else {
      ctx.fail("unknown key in [pso]");
    }
  } else {
    ctx.fail("unknown section [" + section + "]");
  }
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& text, const std::string& origin) {
  ExperimentConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::string section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto comment = line.find_first_of("#;");
    if (comment != std::string::npos) line = line.substr(0, comment);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw ConfigError(origin + ":" + std::to_string(line_no) + ": unterminated section header");
      }
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected 'key = value'");
    }
    KeyContext ctx{origin, line_no, trim(line.substr(0, eq))};
    if (section.empty()) {
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": key '" + ctx.key +
                        "' appears before any [section]");
    }
    apply_key(cfg, section, ctx, trim(line.substr(eq + 1)));
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file: " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config_text(ss.str(), path);
}

void apply_override(ExperimentConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) {
    throw ConfigError("override '" + assignment + "' must look like section.key=value");
  }
  const std::string path = trim(assignment.substr(0, eq));
  const auto dot = path.find('.');
  if (dot == std::string::npos) {
    throw ConfigError("override key '" + path + "' must look like section.key");
  }
  KeyContext ctx{"override", 0, path.substr(dot + 1)};
  apply_key(cfg, path.substr(0, dot), ctx, trim(assignment.substr(eq + 1)));
}

std::string save_config(const ExperimentConfig& cfg) {
  std::ostringstream os;
  os << "[model]\n";
  os << "kind = " << cfg.model_kind << "\n";
  os << "hidden = ";
  for (std::size_t i = 0; i < cfg.hidden.size(); ++i) os << (i ? "," : "") << cfg.hidden[i];
  os << "\n";
  os << "input_dim = " << cfg.input_dim << "\n";
  os << "classes = " << cfg.classes << "\n\n";

  os << "[data]\n";
  os << "source = " << cfg.data_source << "\n";
  if (!cfg.train_images.empty()) os << "train_images = " << cfg.train_images << "\n";
  if (!cfg.train_labels.empty()) os << "train_labels = " << cfg.train_labels << "\n";
  if (!cfg.test_images.empty()) os << "test_images = " << cfg.test_images << "\n";
  if (!cfg.test_labels.empty()) os << "test_labels = " << cfg.test_labels << "\n";
  os << "limit_train = " << cfg.limit_train << "\n";
  os << "limit_test = " << cfg.limit_test << "\n";
  os << "synth_train_per_class = " << cfg.synth_train_per_class << "\n";
  os << "synth_test_per_class = " << cfg.synth_test_per_class << "\n";
  os << "synth_input_dim = " << cfg.synth_input_dim << "\n";
  os << "synth_spread = " << format_real(cfg.synth_spread) << "\n";
  os << "synth_seed = " << cfg.synth_seed << "\n\n";

  os << "[run]\n";
  os << "n = " << cfg.n << "\n";
  os << "strategy = " << strategy_name(cfg.strategy) << "\n";
  os << "step = " << cfg.step << "\n";
  os << "batch_size = " << cfg.batch_size << "\n";
  os << "epoch_size = " << cfg.epoch_size << "\n";
  os << "optimizer = " << (cfg.optimizer == OptimizerKind::Sgd ? "sgd" : "adam") << "\n";
  os << "learning_rate = " << format_real(cfg.learning_rate) << "\n";
  os << "ssgd_alpha = " << format_real(cfg.ssgd_alpha) << "\n";
  os << "seed = " << cfg.seed << "\n";
  os << "precision = " << (cfg.precision == Precision::F32 ? "f32" : "f64") << "\n";
  os << "output = " << cfg.output << "\n";
  os << "eval_every = " << cfg.eval_every << "\n";
  os << "transport = " << (cfg.transport == TransportKind::Tcp ? "tcp" : "in-process") << "\n";
  if (!cfg.tcp_addrs.empty()) {
    os << "tcp_addrs = ";
    for (std::size_t i = 0; i < cfg.tcp_addrs.size(); ++i) os << (i ? "," : "") << cfg.tcp_addrs[i];
    os << "\n";
  }
  os << "tcp_timeout = " << format_real(cfg.tcp_timeout) << "\n";
  os << "execution = " << (cfg.execution == ExecutionMode::RoundRobin ? "round-robin" : "threads")
     << "\n\n";

  os << "[pso]\n";
  os << "m_max = " << format_real(cfg.pso.m_max) << "\n";
  os << "m_min = " << format_real(cfg.pso.m_min) << "\n";
  os << "c1 = " << format_real(cfg.pso.c1) << "\n";
  os << "c2 = " << format_real(cfg.pso.c2) << "\n";
  os << "lambda_mode = "
     << (cfg.pso.lambda_mode == LambdaMode::CurrentEpoch ? "current-epoch" : "fixed-epoch-size") << "\n";
  os << "r_mode = " << (cfg.pso.r_mode == RMode::ScalarPerParticle ? "scalar" : "per-dimension") << "\n";
  os << "gbest_mode = "
     << (cfg.pso.gbest_mode == GBestMode::CurrentRound ? "current-round" : "historical") << "\n";
  return os.str();
}

ModelSpec ExperimentConfig::build_model_spec() const {
  ModelSpec spec;
  spec.num_classes = classes;
  if (model_kind == "mlp") {
    spec.input_shape = {input_dim};
    Index prev = input_dim;
    for (Index h : hidden) {
      spec.layers.push_back(Dense{prev, h});
      spec.layers.push_back(Relu{});
      prev = h;
    }
    spec.layers.push_back(Dense{prev, classes});
  } else if (model_kind == "lenet-small") {
    // 1x28x28 -> conv5 -> pool2 -> conv5 -> pool2 -> 256 -> 120 -> 84 -> classes
    spec.input_shape = {1, 28, 28};
    spec.layers = {Conv2d{1, 6, 5, 1},  Relu{}, MaxPool{2}, Conv2d{6, 16, 5, 1}, Relu{}, MaxPool{2},
                   Flatten{},           Dense{256, 120},    Relu{},              Dense{120, 84},
                   Relu{},              Dense{84, classes}};
  } else {
    throw ConfigError("model.kind: unknown model '" + model_kind + "'");
  }
  return spec;
}

SyncConfig ExperimentConfig::build_sync_config() const {
  SyncConfig sync;
  sync.strategy = strategy;
  sync.step = step;
  sync.pso = pso;
  sync.ssgd_alpha = ssgd_alpha > 0 ? ssgd_alpha : learning_rate;
  return sync;
}

void ExperimentConfig::validate() const {
  auto require = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
  };
  require(model_kind == "mlp" || model_kind == "lenet-small",
          "model.kind: must be 'mlp' or 'lenet-small'");
  require(input_dim > 0, "model.input_dim: must be positive");
  require(classes > 0, "model.classes: must be positive");
  for (Index h : hidden) require(h > 0, "model.hidden: sizes must be positive");
  require(data_source == "mnist" || data_source == "synthetic",
          "data.source: must be 'mnist' or 'synthetic'");
  if (data_source == "mnist") {
    require(!train_images.empty() && !train_labels.empty(),
            "data.train_images/train_labels: required when source = mnist");
    require(!test_images.empty() && !test_labels.empty(),
            "data.test_images/test_labels: required when source = mnist");
  } else {
    require(synth_train_per_class > 0, "data.synth_train_per_class: must be positive");
    require(synth_test_per_class > 0, "data.synth_test_per_class: must be positive");
    require(synth_input_dim > 0, "data.synth_input_dim: must be positive");
    require(synth_spread >= 0, "data.synth_spread: must be non-negative");
  }
  require(limit_train >= 0, "data.limit_train: must be non-negative");
  require(limit_test >= 0, "data.limit_test: must be non-negative");
  require(n >= 1, "run.n: must be >= 1");
  require(step >= 1, "run.step: must be >= 1");
  require(batch_size >= 1, "run.batch_size: must be >= 1");
  require(epoch_size >= 1, "run.epoch_size: must be >= 1");
  require(learning_rate > 0, "run.learning_rate: must be positive");
  require(ssgd_alpha >= 0, "run.ssgd_alpha: must be non-negative (0 = learning_rate)");
  require(eval_every >= 0, "run.eval_every: must be non-negative");
  require(tcp_timeout > 0, "run.tcp_timeout: must be positive");
  if (transport == TransportKind::Tcp) {
    require(static_cast<int>(tcp_addrs.size()) == n,
            "run.tcp_addrs: needs exactly one host:port per worker");
    require(execution == ExecutionMode::Threads, "run.execution: tcp transport requires threads");
  }
  require(pso.m_max >= pso.m_min, "pso.m_min: must not exceed pso.m_max");
  require(pso.m_min > 0, "pso.m_min: must be positive");
  require(pso.c1 >= 0, "pso.c1: must be non-negative");
  require(pso.c2 >= 0, "pso.c2: must be non-negative");
}

}  // namespace swarmsync

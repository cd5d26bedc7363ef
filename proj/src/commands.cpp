#include "commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>

#include "obtree/cli.hpp"
#include "obtree/dataset.hpp"
#include "obtree/error.hpp"
#include "obtree/greedy.hpp"
#include "obtree/inference.hpp"
#include "obtree/optimizer.hpp"
#include "obtree/tree.hpp"

namespace obtree::cli {

RecordSink::RecordSink(std::ostream& console, const std::string& path) : console_(console) {
  if (path.empty()) return;
  file_.open(path, std::ios::binary | std::ios::trunc);
  if (!file_) throw DataError("cannot open '" + path + "' for writing");
}

void RecordSink::emit(const Record& record) {
  const std::string line = record.dump();
  console_ << line << '\n';
  if (file_.is_open()) {
    file_ << line << '\n';
    file_.flush();
  }
}

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

// JSON has no NaN or infinity.
Record number(double v) { return std::isfinite(v) ? Record(v) : Record(nullptr); }

template <class T>
std::vector<T> parse_list(const std::string& text, const char* what) {
  std::vector<T> values;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    std::istringstream field(item);
    T v{};
    if constexpr (std::is_unsigned_v<T>) {
      if (item.find('-') != std::string::npos)
        throw UsageError(std::string("bad value '") + item + "' in " + what);
    }
    if (!(field >> v) || !(field >> std::ws).eof())
      throw UsageError(std::string("bad value '") + item + "' in " + what);
    values.push_back(v);
  }
  if (values.empty()) throw UsageError(std::string(what) + " is empty");
  return values;
}

std::vector<double> sorted_unique(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

void check_model_flags(const ModelFlags& f) {
  if (f.depth < 1 || f.depth > 30) throw UsageError("--depth must be in 1..30");
  if (f.init != "axis" && f.init != "co2" && f.init != "random")
    throw UsageError("--init must be axis, co2 or random");
  if (f.trials == 0) throw UsageError("--trials must be positive");
  parse_algorithm(f.algo);
  parse_inference(f.inference);
}

OptimizerConfig make_config(const ModelFlags& f, std::size_t n, double nu, double eta) {
  OptimizerConfig c;
  c.nu = nu;
  c.eta = eta;
  c.batch_size = f.batch;
  c.momentum = f.momentum;
  c.algorithm = parse_algorithm(f.algo);
  c.inference = parse_inference(f.inference);
  c.ssgd_inner_steps = f.ssgd_inner;
  c.ssgd_rel_improvement = f.ssgd_rel;
  c.seed = f.seed;
  c.validate();
  c.tau = f.epochs * steps_per_epoch(n, f.batch);
  return c;
}

Record model_config(const ModelFlags& f) {
  Record r;
  r["depth"] = f.depth;
  r["nu"] = f.nu;
  r["lr"] = f.lr;
  r["epochs"] = f.epochs;
  r["batch"] = f.batch;
  r["momentum"] = f.momentum;
  r["algo"] = f.algo;
  r["inference"] = f.inference;
  r["init"] = f.init;
  r["seed"] = f.seed;
  r["trials"] = f.trials;
  r["co2_epochs"] = f.co2_epochs;
  r["ssgd_inner"] = f.ssgd_inner;
  r["ssgd_rel"] = f.ssgd_rel;
  return r;
}

struct Splits {
  Dataset train;
  Dataset val;
  Dataset test;
  bool has_val = false;
  bool has_test = false;
  Record hashes = Record::object();
};

Splits load_splits(const DataFlags& f, std::uint64_t seed, bool need_val, bool need_test) {
  if (f.train.empty()) throw UsageError("--train is required");
  if (!(f.val_frac >= 0.0 && f.val_frac < 1.0)) throw UsageError("--val-frac must be in [0, 1)");
  if (!f.val.empty() && f.val_frac > 0.0) throw UsageError("--val and --val-frac are exclusive");

  Splits s;
  std::vector<Dataset> parts{load_libsvm(f.train)};
  s.hashes["train"] = file_hash(f.train);
  if (!f.val.empty()) {
    parts.push_back(load_libsvm(f.val));
    s.hashes["val"] = file_hash(f.val);
  }
  if (!f.test.empty()) {
    parts.push_back(load_libsvm(f.test));
    s.hashes["test"] = file_hash(f.test);
  }
  if (parts[0].empty()) throw DataError("training set is empty");
  align(parts);

  std::size_t at = 0;
  s.train = parts[at++];
  if (!f.val.empty()) {
    s.val = parts[at++];
    s.has_val = true;
  } else if (f.val_frac > 0.0) {
    const std::vector<double> fractions{1.0 - f.val_frac, f.val_frac};
    auto halves = split_dataset(s.train, fractions, seed);
    s.train = std::move(halves[0]);
    s.val = std::move(halves[1]);
    s.has_val = true;
  }
  if (!f.test.empty()) {
    s.test = parts[at++];
    s.has_test = true;
  }
  if (need_val && !s.has_val) throw UsageError("a validation set is required (--val or --val-frac)");
  if (need_test && !s.has_test) throw UsageError("--test is required");
  if (s.train.empty()) throw DataError("training set is empty");
  if (s.has_val && s.val.empty()) throw DataError("validation set is empty");
  if (s.has_test && s.test.empty()) throw DataError("test set is empty");

  s.train = augment(s.train);
  if (s.has_val) s.val = augment(s.val);
  if (s.has_test) s.test = augment(s.test);
  return s;
}

Record run_record(const char* command, const std::vector<std::string>& args, Record config,
                  const Splits& s) {
  Record r;
  r["record"] = "run";
  r["command"] = command;
  r["args"] = args;
  r["config"] = std::move(config);
  r["hashes"] = s.hashes;
  r["class_values"] = s.train.class_values();
  r["num_features"] = s.train.num_features();
  r["sizes"] = {{"train", s.train.size()},
                {"val", s.has_val ? s.val.size() : 0},
                {"test", s.has_test ? s.test.size() : 0}};
  return r;
}

Record epoch_record(const EpochMetrics& m) {
  Record r;
  r["record"] = "epoch";
  r["epoch"] = m.epoch;
  r["phase"] = m.phase;
  r["steps"] = m.steps;
  r["empirical_loss"] = number(m.empirical_loss);
  r["surrogate_loss"] = number(m.surrogate_loss);
  r["reference_surrogate"] = number(m.reference_surrogate);
  r["train_accuracy"] = number(m.train_accuracy);
  r["val_accuracy"] = m.val_accuracy ? number(*m.val_accuracy) : Record(nullptr);
  r["active_leaves"] = m.active_leaves;
  r["wall_ms"] = m.wall_ms;
  return r;
}

Record model_metrics(const TreeModel& model, const Dataset& data, Inference inference) {
  Record r;
  r["size"] = data.size();
  r["accuracy"] = number(accuracy(model, data));
  r["empirical_loss"] = number(empirical_loss(model, data));
  r["surrogate_loss"] = number(surrogate_loss(model, data, inference));
  r["active_leaves"] = active_leaves(model, data);
  return r;
}

TreeModel initial_model(const Dataset& train, const ModelFlags& f, const OptimizerConfig& c) {
  const GreedyOptions greedy{c.nu, 2};
  if (f.init == "random") return build_random_oblique(train, f.depth, f.trials, f.seed, greedy);
  TreeModel model = build_axis_aligned(train, f.depth, greedy);
  if (f.init == "co2") {
    OptimizerConfig local = c;
    local.algorithm = Algorithm::sgd;
    model = co2_refine(std::move(model), train, local, f.co2_epochs);
  }
  return model;
}

struct Fit {
  TreeModel init;
  TrainResult result;
};

Fit fit(const Dataset& train, const Dataset* val, const ModelFlags& f, double nu, double eta,
        bool record) {
  const OptimizerConfig c = make_config(f, train.size(), nu, eta);
  TreeModel init = initial_model(train, f, c);
  TrainResult result = obtree::train(train, c, init, {val, record});
  return {std::move(init), std::move(result)};
}

struct GridPoint {
  double nu = 0.0;
  double eta = 0.0;
  double val_accuracy = 0.0;
  std::size_t selected_epoch = 0;
};

// Validation accuracy over nu x eta. Grids are visited in ascending order and
// only a strictly better point replaces the incumbent, so ties keep the
// smaller nu, then the smaller eta.
GridPoint tune(const Dataset& train, const Dataset& val, const ModelFlags& f,
               const std::vector<double>& nus, const std::vector<double>& etas,
               RecordSink& sink, const Record& context) {
  std::optional<GridPoint> best;
  for (double nu : sorted_unique(nus)) {
    for (double eta : sorted_unique(etas)) {
      const Fit run = fit(train, &val, f, nu, eta, false);
      const GridPoint point{nu, eta, accuracy(run.result.model, val), run.result.selected_epoch};
      Record r;
      r["record"] = "grid";
      r.update(context);
      r["nu"] = nu;
      r["lr"] = eta;
      r["val_accuracy"] = point.val_accuracy;
      r["val_error"] = 1.0 - point.val_accuracy;
      r["selected_epoch"] = point.selected_epoch;
      sink.emit(r);
      if (!best || point.val_accuracy > best->val_accuracy) best = point;
    }
  }
  return *best;
}

// Refit on train and validation together for the epochs validation selected.
Fit refit(const Dataset& train, const Dataset& val, ModelFlags f, const GridPoint& best) {
  f.epochs = best.selected_epoch;
  return fit(concat(train, val), nullptr, f, best.nu, best.eta, false);
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

void replace_flag(std::vector<std::string>& args, const std::string& flag,
                  const std::string& value) {
  if (value.empty()) return;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == flag && i + 1 < args.size()) {
      args[i + 1] = value;
      return;
    }
    if (args[i].rfind(flag + "=", 0) == 0) {
      args[i] = flag + "=" + value;
      return;
    }
  }
  args.push_back(flag);
  args.push_back(value);
}

}  // namespace

std::vector<double> parse_double_list(const std::string& text, const char* what) {
  auto v = parse_list<double>(text, what);
  for (double x : v)
    if (!std::isfinite(x)) throw UsageError(std::string("non-finite value in ") + what);
  return v;
}

std::vector<std::size_t> parse_size_list(const std::string& text, const char* what) {
  return parse_list<std::size_t>(text, what);
}

int cmd_train(const TrainFlags& flags, const std::vector<std::string>& args, std::ostream& out) {
  check_model_flags(flags.model);
  const Splits s = load_splits(flags.data, flags.model.seed, false, false);
  RecordSink sink(out, flags.metrics_out);
  sink.emit(run_record("train", args, model_config(flags.model), s));

  const auto t0 = Clock::now();
  const Fit run = fit(s.train, s.has_val ? &s.val : nullptr, flags.model, flags.model.nu,
                      flags.model.lr, true);
  const double wall = ms_since(t0);
  for (const auto& m : run.result.trace) sink.emit(epoch_record(m));

  const TreeModel& model = run.result.model;
  const Inference inference = parse_inference(flags.model.inference);
  if (!flags.model_out.empty()) save_model(flags.model_out, model);

  Record r;
  r["record"] = "final";
  r["selected_epoch"] = run.result.selected_epoch;
  r["init_train_accuracy"] = accuracy(run.init, s.train);
  r["train"] = model_metrics(model, s.train, inference);
  if (s.has_val) r["val"] = model_metrics(model, s.val, inference);
  if (s.has_test) r["test"] = model_metrics(model, s.test, inference);
  r["wall_ms"] = wall;
  sink.emit(r);
  return kExitOk;
}

int cmd_eval(const EvalFlags& flags, std::ostream& out) {
  const Inference inference = parse_inference(flags.inference);
  const TreeModel model = load_model(flags.model);
  std::vector<Dataset> parts;
  if (!flags.train.empty()) parts.push_back(load_libsvm(flags.train));
  parts.push_back(load_libsvm(flags.test));
  if (parts.back().empty()) throw DataError("test set is empty");
  align(parts);

  Dataset test = parts.back();
  if (test.num_features() + 1 < model.features())
    test = test.with_num_features(model.features() - 1);
  test = augment(test);
  check_compatible(model, test);

  RecordSink sink(out, flags.metrics_out);
  Record r;
  r["record"] = "eval";
  r["model_hash"] = file_hash(flags.model);
  r["test_hash"] = file_hash(flags.test);
  r["inference"] = flags.inference;
  r.update(model_metrics(model, test, inference));
  sink.emit(r);
  return kExitOk;
}

int cmd_sweep(const SweepFlags& flags, const std::vector<std::string>& args, std::ostream& out) {
  check_model_flags(flags.model);
  const auto nus = parse_double_list(flags.nu_grid, "--nu-grid");
  const auto etas = parse_double_list(flags.lr_grid, "--lr-grid");
  const Splits s = load_splits(flags.data, flags.model.seed, true, false);
  RecordSink sink(out, flags.metrics_out);
  Record config = model_config(flags.model);
  config.erase("nu");
  config.erase("lr");
  config["nu_grid"] = nus;
  config["lr_grid"] = etas;
  sink.emit(run_record("sweep", args, std::move(config), s));

  const GridPoint best = tune(s.train, s.val, flags.model, nus, etas, sink, Record::object());
  Record b;
  b["record"] = "best";
  b["nu"] = best.nu;
  b["lr"] = best.eta;
  b["val_accuracy"] = best.val_accuracy;
  b["epochs"] = best.selected_epoch;
  sink.emit(b);

  const Fit run = refit(s.train, s.val, flags.model, best);
  const Inference inference = parse_inference(flags.model.inference);
  if (!flags.model_out.empty()) save_model(flags.model_out, run.result.model);
  Record r;
  r["record"] = "final";
  r["train"] = model_metrics(run.result.model, concat(s.train, s.val), inference);
  if (s.has_test) r["test"] = model_metrics(run.result.model, s.test, inference);
  sink.emit(r);
  return kExitOk;
}

int cmd_timing(const TimingFlags& flags, const std::vector<std::string>& args, std::ostream& out) {
  const auto depths = parse_size_list(flags.depths, "--depths");
  for (auto d : depths)
    if (d < 1 || d > 30) throw UsageError("depths must be in 1..30");
  if (flags.reps == 0) throw UsageError("--reps must be positive");
  if (flags.data.empty() && (flags.n == 0 || flags.p == 0 || flags.classes < 2))
    throw UsageError("synthetic data needs --n, --p >= 1 and --classes >= 2");

  Dataset data = flags.data.empty() ? make_random_linear(flags.n, flags.p, flags.classes, flags.seed)
                                    : load_libsvm(flags.data);
  if (data.empty()) throw DataError("timing dataset is empty");
  data = augment(data);

  RecordSink sink(out, flags.metrics_out);
  Record run;
  run["record"] = "run";
  run["command"] = "timing";
  run["args"] = args;
  run["config"] = {{"depths", depths}, {"reps", flags.reps},    {"batch", flags.batch},
                   {"nu", flags.nu},   {"lr", flags.lr},        {"seed", flags.seed},
                   {"n", data.size()}, {"features", data.dim()}};
  run["hashes"] = Record::object();
  if (!flags.data.empty()) run["hashes"]["data"] = file_hash(flags.data);
  sink.emit(run);

  for (auto depth : depths) {
    TreeModel init(depth, data.dim(), data.num_outputs(), data.loss_kind());
    std::mt19937_64 rng(flags.seed + depth);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (std::size_t node = 1; node <= init.internal_count(); ++node) {
      auto row = init.split_row(node);
      for (double& v : row) v = normal(rng);
      project_row(row, flags.nu);
    }
    for (Inference mode : {Inference::exact, Inference::fast}) {
      OptimizerConfig c;
      c.nu = flags.nu;
      c.eta = flags.lr;
      c.batch_size = flags.batch;
      c.inference = mode;
      c.validate();
      c.tau = steps_per_epoch(data.size(), flags.batch);
      std::vector<double> times;
      for (std::size_t rep = 0; rep < flags.reps; ++rep) {
        c.seed = flags.seed + rep;
        const auto t0 = Clock::now();
        const auto result = train_sgd(data, c, init, {nullptr, false});
        times.push_back(ms_since(t0));
      }
      Record r;
      r["record"] = "timing";
      r["depth"] = depth;
      r["mode"] = to_string(mode);
      r["median_ms"] = median(times);
      r["reps_ms"] = times;
      sink.emit(r);
    }
  }
  return kExitOk;
}

int cmd_depth_sweep(const DepthSweepFlags& flags, const std::vector<std::string>& args,
                    std::ostream& out) {
  const auto depths = parse_size_list(flags.depths, "--depths");
  std::vector<std::string> methods;
  {
    std::stringstream in(flags.methods);
    std::string m;
    while (std::getline(in, m, ',')) {
      if (m != "axis" && m != "random" && m != "co2" && m != "nongreedy-sgd" &&
          m != "nongreedy-ssgd")
        throw UsageError("unknown method '" + m + "'");
      methods.push_back(m);
    }
  }
  if (methods.empty()) throw UsageError("--methods is empty");
  for (auto d : depths) {
    ModelFlags probe = flags.model;
    probe.depth = d;
    check_model_flags(probe);
  }
  const auto nus = parse_double_list(flags.nu_grid, "--nu-grid");
  const auto etas = parse_double_list(flags.lr_grid, "--lr-grid");
  const Splits s = load_splits(flags.data, flags.model.seed, true, true);
  const Dataset both = concat(s.train, s.val);

  RecordSink sink(out, flags.metrics_out);
  Record config = model_config(flags.model);
  config.erase("depth");
  config.erase("algo");
  config["depths"] = depths;
  config["methods"] = methods;
  config["nu_grid"] = nus;
  config["lr_grid"] = etas;
  sink.emit(run_record("depth-sweep", args, std::move(config), s));

  for (auto depth : depths) {
    for (const auto& method : methods) {
      ModelFlags f = flags.model;
      f.depth = depth;
      const auto t0 = Clock::now();
      std::optional<TreeModel> model;
      Record r;
      r["record"] = "depth";
      r["depth"] = depth;
      r["method"] = method;
      if (method == "nongreedy-sgd" || method == "nongreedy-ssgd") {
        f.algo = method == "nongreedy-sgd" ? "sgd" : "ssgd";
        const GridPoint best =
            tune(s.train, s.val, f, nus, etas, sink, {{"depth", depth}, {"method", method}});
        model = refit(s.train, s.val, f, best).result.model;
        r["nu"] = best.nu;
        r["lr"] = best.eta;
      } else {
        f.init = method == "random" ? "random" : method == "co2" ? "co2" : "axis";
        model = initial_model(both, f, make_config(f, both.size(), f.nu, f.lr));
        r["nu"] = f.nu;
        r["lr"] = method == "co2" ? Record(f.lr) : Record(nullptr);
      }
      r["train_accuracy"] = number(accuracy(*model, both));
      r["test_accuracy"] = number(accuracy(*model, s.test));
      r["active_leaves"] = active_leaves(*model, both);
      r["wall_ms"] = ms_since(t0);
      sink.emit(r);
    }
  }
  return kExitOk;
}

int cmd_generate(const GenerateFlags& flags, std::ostream& out) {
  Dataset data;
  if (flags.kind == "xor") {
    if (flags.n < 4) throw UsageError("--n must be >= 4");
    if (!(flags.noise >= 0.0 && flags.noise <= 1.0)) throw UsageError("--noise must be in [0, 1]");
    data = make_rotated_xor(flags.n, flags.noise, flags.seed, flags.angle);
  } else if (flags.kind == "linear") {
    if (flags.n == 0 || flags.p == 0 || flags.classes < 2)
      throw UsageError("linear data needs --n, --p >= 1 and --classes >= 2");
    data = make_random_linear(flags.n, flags.p, flags.classes, flags.seed);
  } else {
    throw UsageError("--kind must be xor or linear");
  }
  const std::string text = write_libsvm_string(data);
  std::ofstream file(flags.out, std::ios::binary | std::ios::trunc);
  if (!file) throw DataError("cannot open '" + flags.out + "' for writing");
  file << text;
  if (!file.flush()) throw DataError("failed writing '" + flags.out + "'");

  Record r;
  r["record"] = "generate";
  r["kind"] = flags.kind;
  r["path"] = flags.out;
  r["size"] = data.size();
  r["hash"] = content_hash(text);
  out << r.dump() << '\n';
  return kExitOk;
}

int cmd_replay(const ReplayFlags& flags, std::ostream& out, std::ostream& err) {
  std::ifstream in(flags.record, std::ios::binary);
  if (!in) throw DataError("cannot open record file '" + flags.record + "'");
  std::string line;
  if (!std::getline(in, line)) throw DataError("record file is empty");
  Record run;
  try {
    run = Record::parse(line);
  } catch (const nlohmann::json::parse_error&) {
    throw ParseError("malformed run record", 1, 1);
  }
  if (!run.is_object() || run.value("record", "") != "run" || !run.contains("args") ||
      !run["args"].is_array())
    throw DataError("first record is not a run record");
  auto args = run["args"].get<std::vector<std::string>>();
  if (args.empty() || args[0] == "replay") throw DataError("run record has no replayable command");
  replace_flag(args, "--model-out", flags.model_out);
  replace_flag(args, "--metrics-out", flags.metrics_out);
  return run_cli(args, out, err);
}

}  // namespace obtree::cli

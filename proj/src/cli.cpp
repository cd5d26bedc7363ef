#include "obtree/cli.hpp"

#include <ostream>
#include <stdexcept>

#include <CLI11.hpp>

#include "commands.hpp"
#include "obtree/error.hpp"

namespace obtree {

namespace {

using namespace obtree::cli;

void add_data_flags(CLI::App* app, DataFlags& f, bool test_required) {
  app->add_option("--train", f.train, "Training data (LibSVM)")->required();
  app->add_option("--val", f.val, "Validation data (LibSVM)");
  app->add_option("--val-frac", f.val_frac, "Hold out this fraction of --train for validation");
  auto* test = app->add_option("--test", f.test, "Test data (LibSVM)");
  if (test_required) test->required();
}

enum ModelFlagSet { kWithDepth = 1, kWithRates = 2, kWithAlgo = 4 };

void add_model_flags(CLI::App* app, ModelFlags& f, int set) {
  if (set & kWithDepth) app->add_option("--depth", f.depth, "Tree depth")->capture_default_str();
  if (set & kWithRates) {
    app->add_option("--nu", f.nu, "Squared norm bound on each split row")->capture_default_str();
    app->add_option("--lr", f.lr, "SGD learning rate")->capture_default_str();
  } else {
    app->add_option("--nu", f.nu, "Norm bound for greedy baselines")->capture_default_str();
    app->add_option("--lr", f.lr, "Learning rate for co2 baselines")->capture_default_str();
  }
  app->add_option("--epochs", f.epochs, "Passes over the training data")->capture_default_str();
  app->add_option("--batch", f.batch, "Minibatch size")->capture_default_str();
  app->add_option("--momentum", f.momentum, "Heavy-ball momentum")->capture_default_str();
  if (set & kWithAlgo)
    app->add_option("--algo", f.algo, "sgd or ssgd")
        ->check(CLI::IsMember({"sgd", "ssgd"}))
        ->capture_default_str();
  app->add_option("--inference", f.inference, "Loss-augmented inference: exact or fast")
      ->check(CLI::IsMember({"exact", "fast"}))
      ->capture_default_str();
  app->add_option("--init", f.init, "Initial tree: axis, co2 or random")
      ->check(CLI::IsMember({"axis", "co2", "random"}))
      ->capture_default_str();
  app->add_option("--seed", f.seed, "Random seed")->capture_default_str();
  app->add_option("--trials", f.trials, "Candidate hyperplanes per node for --init random")
      ->capture_default_str();
  app->add_option("--co2-epochs", f.co2_epochs, "Passes per node for --init co2")
      ->capture_default_str();
  app->add_option("--ssgd-inner", f.ssgd_inner, "Steps per frozen assignment in ssgd")
      ->capture_default_str();
  app->add_option("--ssgd-rel", f.ssgd_rel, "Relative improvement that ends an ssgd phase")
      ->capture_default_str();
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Oblique decision trees trained by non-greedy SGD", "obtree"};
  app.require_subcommand(1);

  TrainFlags train;
  auto* train_cmd = app.add_subcommand("train", "Build an initial tree and train it with SGD");
  add_data_flags(train_cmd, train.data, false);
  add_model_flags(train_cmd, train.model, kWithDepth | kWithRates | kWithAlgo);
  train_cmd->add_option("--model-out", train.model_out, "Write the trained model here");
  train_cmd->add_option("--metrics-out", train.metrics_out, "Also write records here");

  EvalFlags eval;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a saved model");
  eval_cmd->add_option("--model", eval.model, "Model file")->required();
  eval_cmd->add_option("--test", eval.test, "Data to evaluate (LibSVM)")->required();
  eval_cmd->add_option("--train", eval.train, "Training data, to align labels and features");
  eval_cmd->add_option("--inference", eval.inference, "Inference for the surrogate")
      ->check(CLI::IsMember({"exact", "fast"}))
      ->capture_default_str();
  eval_cmd->add_option("--metrics-out", eval.metrics_out, "Also write the record here");

  SweepFlags sweep;
  auto* sweep_cmd = app.add_subcommand("sweep", "Tune nu and the learning rate on validation");
  add_data_flags(sweep_cmd, sweep.data, false);
  add_model_flags(sweep_cmd, sweep.model, kWithDepth | kWithAlgo);
  sweep_cmd->add_option("--nu-grid", sweep.nu_grid, "Comma-separated nu values")
      ->capture_default_str();
  sweep_cmd->add_option("--lr-grid", sweep.lr_grid, "Comma-separated learning rates")
      ->capture_default_str();
  sweep_cmd->add_option("--model-out", sweep.model_out, "Write the refitted model here");
  sweep_cmd->add_option("--metrics-out", sweep.metrics_out, "Also write records here");

  TimingFlags timing;
  auto* timing_cmd = app.add_subcommand("timing", "Time one SGD epoch with exact and fast inference");
  timing_cmd->add_option("--data", timing.data, "Data file; synthetic data when omitted");
  timing_cmd->add_option("--n", timing.n, "Synthetic examples")->capture_default_str();
  timing_cmd->add_option("--p", timing.p, "Synthetic features")->capture_default_str();
  timing_cmd->add_option("--classes", timing.classes, "Synthetic classes")->capture_default_str();
  timing_cmd->add_option("--depths", timing.depths, "Comma-separated depths")->capture_default_str();
  timing_cmd->add_option("--reps", timing.reps, "Repetitions per depth and mode")
      ->capture_default_str();
  timing_cmd->add_option("--batch", timing.batch, "Minibatch size")->capture_default_str();
  timing_cmd->add_option("--nu", timing.nu, "Norm bound")->capture_default_str();
  timing_cmd->add_option("--lr", timing.lr, "Learning rate")->capture_default_str();
  timing_cmd->add_option("--seed", timing.seed, "Random seed")->capture_default_str();
  timing_cmd->add_option("--metrics-out", timing.metrics_out, "Also write records here");

  DepthSweepFlags depth;
  depth.data.val_frac = 0.2;
  auto* depth_cmd = app.add_subcommand("depth-sweep", "Accuracy against depth for each method");
  add_data_flags(depth_cmd, depth.data, true);
  add_model_flags(depth_cmd, depth.model, 0);
  depth_cmd->add_option("--depths", depth.depths, "Comma-separated depths")->capture_default_str();
  depth_cmd->add_option("--methods", depth.methods, "Comma-separated methods")
      ->capture_default_str();
  depth_cmd->add_option("--nu-grid", depth.nu_grid, "Comma-separated nu values")
      ->capture_default_str();
  depth_cmd->add_option("--lr-grid", depth.lr_grid, "Comma-separated learning rates")
      ->capture_default_str();
  depth_cmd->add_option("--metrics-out", depth.metrics_out, "Also write records here");

  GenerateFlags gen;
  auto* gen_cmd = app.add_subcommand("generate", "Write a synthetic LibSVM dataset");
  gen_cmd->add_option("--kind", gen.kind, "xor or linear")
      ->check(CLI::IsMember({"xor", "linear"}))
      ->capture_default_str();
  gen_cmd->add_option("--n", gen.n, "Examples")->capture_default_str();
  gen_cmd->add_option("--noise", gen.noise, "Label noise rate (xor)")->capture_default_str();
  gen_cmd->add_option("--angle", gen.angle, "Rotation in degrees (xor)")->capture_default_str();
  gen_cmd->add_option("--p", gen.p, "Features (linear)")->capture_default_str();
  gen_cmd->add_option("--classes", gen.classes, "Classes (linear)")->capture_default_str();
  gen_cmd->add_option("--seed", gen.seed, "Random seed")->capture_default_str();
  gen_cmd->add_option("--out", gen.out, "Output file")->required();

  ReplayFlags replay;
  auto* replay_cmd = app.add_subcommand("replay", "Re-run the command stored in a metrics file");
  replay_cmd->add_option("--record", replay.record, "Metrics file whose first line is a run record")
      ->required();
  replay_cmd->add_option("--model-out", replay.model_out, "Override the model output path");
  replay_cmd->add_option("--metrics-out", replay.metrics_out, "Override the metrics output path");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*train_cmd) return cmd_train(train, args, out);
    if (*eval_cmd) return cmd_eval(eval, out);
    if (*sweep_cmd) return cmd_sweep(sweep, args, out);
    if (*timing_cmd) return cmd_timing(timing, args, out);
    if (*depth_cmd) return cmd_depth_sweep(depth, args, out);
    if (*gen_cmd) return cmd_generate(gen, out);
    if (*replay_cmd) return cmd_replay(replay, out, err);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const NumericError& e) {
    err << "error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitUsage;
}

}  // namespace obtree

#include <CLI11.hpp>
#include <cstdio>

#include "commands.hpp"
#include "rsq/common.hpp"
#include "rsq/version.hpp"

using namespace rsq::cli;

// Exit codes: 0 success, 1 validation/usage failure, 2 runtime failure.
int main(int argc, char** argv) {
  CLI::App app{"Residual-squeeze deeply-supervised network toolkit"};
  app.set_version_flag("--version", std::string("rsq ") + rsq::kVersion);
  app.require_subcommand(1);

  SummarizeArgs sum;
  auto* sum_cmd = app.add_subcommand("summarize", "Build a network and report shapes and sizes");
  sum_cmd->add_option("--arch", sum.arch, "Preset (paper|desk|miniature) or config JSON path");
  sum_cmd->add_option("--classes", sum.classes, "Override class count");
  sum_cmd->add_option("--input-size", sum.input_size, "Override square input extent");
  sum_cmd->add_flag("--plain", sum.plain, "Build the plain conv baseline instead of fire modules");
  sum_cmd->add_option("--format", sum.format, "text|json")
      ->check(CLI::IsMember({"text", "json"}));
  sum_cmd->add_option("--out", sum.out, "Write the report here instead of stdout");

  CompareArgs cmp;
  auto* cmp_cmd = app.add_subcommand("compare", "Percent size/time reduction between two models");
  cmp_cmd->add_option("--left", cmp.left.summary_path, "Left summary JSON (baseline)");
  cmp_cmd->add_option("--left-size-gb", cmp.left.size_gb, "Left size in GiB");
  cmp_cmd->add_option("--left-size-bytes", cmp.left.size_bytes, "Left size in bytes");
  cmp_cmd->add_option("--left-hours", cmp.left.hours, "Left training duration in hours");
  cmp_cmd->add_option("--right", cmp.right.summary_path, "Right summary JSON");
  cmp_cmd->add_option("--right-size-gb", cmp.right.size_gb, "Right size in GiB");
  cmp_cmd->add_option("--right-size-bytes", cmp.right.size_bytes, "Right size in bytes");
  cmp_cmd->add_option("--right-hours", cmp.right.hours, "Right training duration in hours");
  cmp_cmd->add_option("--out", cmp.out, "Write the comparison JSON here");

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "Train on an RSQ1 dataset");
  train_cmd->add_option("--dataset", train.dataset, "RSQ1 dataset path")->required();
  train_cmd->add_option("--val-dataset", train.val_dataset, "Validation RSQ1 dataset");
  train_cmd->add_option("--arch", train.arch, "auto|paper|desk|miniature or config JSON path");
  train_cmd->add_option("--out-dir", train.out_dir, "Artifact directory")->required();
  train_cmd->add_option("--epochs", train.epochs, "Epoch count");
  train_cmd->add_option("--steps", train.steps, "Stop after this many optimizer steps");
  train_cmd->add_option("--batch", train.batch, "Training batch size");
  train_cmd->add_option("--lr", train.lr, "Base learning rate");
  train_cmd->add_option("--lr-gamma", train.lr_gamma, "Learning-rate decay factor");
  train_cmd->add_option("--lr-step", train.lr_step, "Epochs between decays");
  train_cmd->add_option("--momentum", train.momentum, "SGD momentum");
  train_cmd->add_option("--weight-decay", train.weight_decay, "L2 weight decay");
  train_cmd->add_option("--alpha0", train.alpha0, "Initial auxiliary loss weight");
  train_cmd->add_option("--alpha-mode", train.alpha_mode, "linear|recursive")
      ->check(CLI::IsMember({"linear", "recursive"}));
  train_cmd->add_option("--init", train.init, "xavier|gaussian body initialization")
      ->check(CLI::IsMember({"xavier", "gaussian"}));
  train_cmd->add_option("--precision", train.precision, "standard|high")
      ->check(CLI::IsMember({"standard", "high"}));
  auto* train_seed = train_cmd->add_option("--seed", train.seed, "RNG seed (default RSQ_SEED or 42)");

  GradcheckArgs gc;
  auto* gc_cmd = app.add_subcommand("gradcheck", "Finite-difference gradient verification");
  gc_cmd->add_option("--scale", gc.scale, "Check scale (tiny)");
  auto* gc_seed = gc_cmd->add_option("--seed", gc.seed, "RNG seed");
  gc_cmd->add_option("--tolerance", gc.tolerance, "Whole-network tolerance");
  gc_cmd->add_option("--tol-primitive", gc.tol_primitive, "Per-primitive tolerance");
  gc_cmd->add_option("--eps", gc.eps, "Finite-difference step");
  gc_cmd->add_option("--inject-fault", gc.inject_fault, "Test hook (conv-backward-sign)")
      ->group("");

  ProbeArgs probe;
  auto* probe_cmd =
      app.add_subcommand("probe", "Gradient magnitude probe for auxiliary classifier placement");
  probe_cmd->add_option("--depth", probe.depth, "Conv layer count of the plain stack");
  probe_cmd->add_option("--width", probe.width, "Channel width of the stack");
  probe_cmd->add_option("--classes", probe.classes, "Class count of the probe data");
  probe_cmd->add_option("--epochs", probe.epochs, "Backprop epochs, must lie in [10, 50]");
  probe_cmd->add_option("--threshold", probe.threshold, "Mean |grad| insertion threshold");
  probe_cmd->add_option("--batch", probe.batch, "Probe batch size");
  auto* probe_seed = probe_cmd->add_option("--seed", probe.seed, "RNG seed");
  probe_cmd->add_option("--out", probe.out, "Report JSON path");
  probe_cmd->add_option("--csv", probe.csv, "Report CSV path");

  GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate a synthetic RSQ1 dataset");
  gen_cmd->add_option("--classes", gen.classes, "Class count (>= 2)")->required();
  gen_cmd->add_option("--per-class", gen.per_class, "Samples per class")->required();
  gen_cmd->add_option("--size", gen.size, "Sample extents CxHxW, e.g. 3x64x64")->required();
  gen_cmd->add_option("--noise", gen.noise, "Gaussian noise stddev");
  auto* gen_seed = gen_cmd->add_option("--seed", gen.seed, "RNG seed");
  gen_cmd->add_option("--out", gen.out, "Output dataset path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  train.seed_set = train_seed->count() > 0;
  gc.seed_set = gc_seed->count() > 0;
  probe.seed_set = probe_seed->count() > 0;
  gen.seed_set = gen_seed->count() > 0;

  try {
    if (sum_cmd->parsed()) return cmd_summarize(sum);
    if (cmp_cmd->parsed()) return cmd_compare(cmp);
    if (train_cmd->parsed()) return cmd_train(train);
    if (gc_cmd->parsed()) return cmd_gradcheck(gc);
    if (probe_cmd->parsed()) return cmd_probe(probe);
    if (gen_cmd->parsed()) return cmd_gen_data(gen);
  } catch (const rsq::IoError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const rsq::NumericError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const rsq::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "unexpected error: %s\n", e.what());
    return 2;
  }
  return 1;
}

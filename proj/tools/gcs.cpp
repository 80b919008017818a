#include <iostream>

#include "CLI11.hpp"
#include "gcs/cli.hpp"

namespace {

using gcs::cli::RunOptions;

void add_run_flags(CLI::App* cmd, RunOptions& opts) {
  auto& o = opts.overrides;
  cmd->add_option("--snr-db", o.snr_db, "Single SNR operating point (AWGN, phase noise)");
  cmd->add_option("--launch-dbm", o.launch_dbm, "Single launch power (NLPN)");
  cmd->add_option("--num-spans", o.num_spans, "Fiber spans (NLPN)")->check(CLI::PositiveNumber);
  cmd->add_option("--window-size", o.window_size, "BPS window length")->check(CLI::PositiveNumber);
  cmd->add_option("--test-phases", o.test_phases, "BPS test phases")->check(CLI::PositiveNumber);
  cmd->add_option("--seed", o.seed, "Master seed");
  cmd->add_option("--max-iterations", o.max_iterations, "Training iteration cap")->check(CLI::NonNegativeNumber);
  cmd->add_option("--output-dir", o.output_dir, "Output directory (env GCS_OUTPUT_DIR)");
  cmd->add_option("-j,--jobs", opts.jobs, "Worker threads across operating points")->check(CLI::PositiveNumber);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gradient-free training of autoencoder constellations"};
  app.set_version_flag("--version", gcs::cli::kVersion);
  app.require_subcommand(1);

  RunOptions opts;
  std::string spec_path;

  auto* train = app.add_subcommand("train", "Train one constellation per sweep point");
  train->add_option("spec", spec_path, "Experiment YAML")->required();
  add_run_flags(train, opts);

  auto* grid = app.add_subcommand("grid-search", "Select CKF q and r per sweep point");
  grid->add_option("spec", spec_path, "Experiment YAML")->required();
  add_run_flags(grid, opts);

  auto* compare = app.add_subcommand("compare", "Train and evaluate the series of an experiment");
  compare->add_option("spec", spec_path, "Experiment YAML")->required();
  add_run_flags(compare, opts);

  gcs::cli::EvaluateRequest req;
  std::string eval_spec;
  std::string eval_output;
  auto* evaluate = app.add_subcommand("evaluate", "Estimate MI of constellations or trained runs");
  evaluate->add_option("inputs", req.inputs, "Constellation files or run manifests");
  evaluate->add_option("--spec", eval_spec, "Experiment YAML supplying channel, sweep and protocol");
  evaluate->add_option("--channel", req.channel_kind, "Channel kind without --spec")
      ->check(CLI::IsMember({"awgn", "nlpn", "phase_noise_bps"}));
  evaluate->add_option("--qam", req.qam_orders, "Built-in square QAM orders");
  evaluate->add_option("--runs", req.runs, "Evaluation runs")->check(CLI::PositiveNumber);
  evaluate->add_option("--symbols", req.symbols_per_run, "Symbols per run")->check(CLI::PositiveNumber);
  evaluate->add_option("-o,--output", eval_output, "CSV path");
  add_run_flags(evaluate, opts);

  int qam_order = 16;
  std::string qam_output;
  auto* export_qam = app.add_subcommand("export-qam", "Write a square QAM constellation file");
  export_qam->add_option("M", qam_order, "Order (a power of 4)")->required();
  export_qam->add_option("-o,--output", qam_output, "Output path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return gcs::cli::kConfigError;
  }

  if (*train) return gcs::cli::cmd_train(spec_path, opts, std::cout);
  if (*grid) return gcs::cli::cmd_grid_search(spec_path, opts, std::cout);
  if (*compare) return gcs::cli::cmd_compare(spec_path, opts, std::cout);
  if (*evaluate) {
    if (!eval_spec.empty()) req.spec_path = eval_spec;
    if (!eval_output.empty()) req.output = eval_output;
    return gcs::cli::cmd_evaluate(req, opts, std::cout);
  }
  return gcs::cli::cmd_export_qam(qam_order, qam_output, std::cout);
}

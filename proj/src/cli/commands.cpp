#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>

#include <Eigen/Core>
#include <fmt/format.h>

#include "cli_internal.hpp"
#include "gcs/errors.hpp"
#include "json.hpp"

namespace gcs::cli {
namespace {

using nlohmann::ordered_json;
namespace fs = std::filesystem;

// Serializes progress lines coming from worker threads.
class Log {
 public:
  explicit Log(std::ostream& out) : out_(out) {}
  template <class... Args>
  void line(fmt::format_string<Args...> f, Args&&... args) {
    const std::string s = fmt::format(f, std::forward<Args>(args)...);
    std::lock_guard lock(mu_);
    out_ << s << '\n' << std::flush;
  }

 private:
  std::ostream& out_;
  std::mutex mu_;
};

std::string op_tag(SweepKind kind, double v) {
  return fmt::format("{}{:g}", kind == SweepKind::snr_db ? "snr" : "pin", v);
}

ExperimentSpec load_resolved(const fs::path& path, const Overrides& o) {
  ExperimentSpec spec = load_experiment(path);
  apply_overrides(spec, o);
  spec.validate();
  return spec;
}

TrainConfig config_at(const ExperimentSpec& spec, double op) {
  TrainConfig cfg = spec.train;
  cfg.channel = at_operating_point(spec.train.channel, op);
  return cfg;
}

std::string loss_csv(const std::vector<double>& trace) {
  std::string out = "iteration,loss_nats\n";
  for (std::size_t j = 0; j < trace.size(); ++j) out += fmt::format("{},{}\n", j, format_number(trace[j]));
  return out;
}

ordered_json versions() {
  return {{"gcs", kVersion},
          {"eigen", fmt::format("{}.{}.{}", EIGEN_WORLD_VERSION, EIGEN_MAJOR_VERSION, EIGEN_MINOR_VERSION)},
          {"compiler", __VERSION__},
          {"csv_schema", kCsvSchemaVersion}};
}

struct PointOutcome {
  TrainConfig cfg;  // with the hyperparameters actually used
  std::optional<TrainReport> report;
  std::vector<double> partial_trace;
  std::optional<GridSearchResult> grid;
  std::string error;
};

std::string manifest(const ExperimentSpec& spec, double op, const std::string& label,
                     const PointOutcome& out) {
  ordered_json j;
  j["format"] = "gcs-run-manifest";
  j["version"] = 1;
  j["label"] = label;
  j["versions"] = versions();
  j["seed"] = out.cfg.master_seed;
  j["operating_point"] = {{"kind", to_string(spec.sweep_kind)}, {"value", op}};
  j["optimizer"] = to_string(out.cfg.optimizer);
  if (out.cfg.optimizer == Optimizer::ckf)
    j["hyperparams"] = {{"q", out.cfg.ckf.q}, {"r", out.cfg.ckf.r}};
  else
    j["hyperparams"] = {{"learning_rate", out.cfg.adam.learning_rate}};
  j["max_iterations"] = out.cfg.max_iterations;
  j["M"] = out.cfg.M;
  if (out.report) {
    j["iterations_run"] = out.report->iterations_run;
    j["converged"] = out.report->converged;
    j["mi_validation"] = out.report->mi_validation;
    j["weights"] = std::vector<double>(out.report->final_weights.values().begin(),
                                       out.report->final_weights.values().end());
  } else {
    j["iterations_run"] = out.partial_trace.size();
    j["error"] = out.error;
  }
  j["experiment"] = ordered_json::parse(describe(spec));
  return j.dump(2) + "\n";
}

std::string grid_csv(const GridSearchResult& g) {
  std::string out = "q,r,final_loss,validation_mi,test_mi,iterations_run,diverged,selected\n";
  for (const GridCell& c : g.cells) {
    const bool selected = !c.diverged && c.hp == g.best;
    out += fmt::format("{},{},{},{},{},{},{},{}\n", format_number(c.hp.q), format_number(c.hp.r),
                       c.diverged ? "" : format_number(c.final_loss),
                       c.diverged ? "" : format_number(c.validation_mi),
                       c.diverged ? "" : format_number(c.test_mi), c.iterations_run, c.diverged ? 1 : 0,
                       selected ? 1 : 0);
  }
  return out;
}

// Trains one operating point, via grid search when `grid` is set. Numerical
// failures are captured in the outcome instead of thrown.
PointOutcome run_point(TrainConfig cfg, const std::optional<GridSpec>& grid) {
  PointOutcome out;
  out.cfg = cfg;
  try {
    if (grid) {
      GridSearchResult g = grid_search(cfg, grid->q_set, grid->r_set, {grid->selection_symbols});
      out.cfg.ckf = g.best;
      out.report = std::move(g.best_report);
      out.grid = std::move(g);
    } else {
      out.report = train(cfg, [&](int, double loss) { out.partial_trace.push_back(loss); });
    }
  } catch (const NumericalBreakdown& e) {
    out.error = e.what();
  } catch (const SearchFailure& e) {
    out.error = e.what();
  }
  return out;
}

// Constellation file, loss trace and manifest for one trained point. Failed
// points keep whatever trace was produced before the failure.
void write_point(const ExperimentSpec& spec, double op, const std::string& stem, const PointOutcome& out) {
  const fs::path dir = spec.output_dir;
  if (out.report) {
    const Constellation c = constellation_of(encoder_of(out.report->final_weights));
    write_constellation(dir / (stem + ".constellation.json"), c,
                        {stem, channel_kind(out.cfg.channel), op, out.cfg.master_seed});
    write_text(dir / (stem + "_loss.csv"), loss_csv(out.report->loss_trace));
  } else {
    write_text(dir / (stem + "_loss.csv"), loss_csv(out.partial_trace));
  }
  write_text(dir / (stem + "_manifest.json"), manifest(spec, op, stem, out));
  if (out.grid) write_text(dir / (stem + "_grid.csv"), grid_csv(*out.grid));
}

int train_like(const fs::path& spec_path, const RunOptions& opts, std::ostream& os, bool force_grid) {
  ExperimentSpec spec = load_resolved(spec_path, opts.overrides);
  if (force_grid && !spec.grid)
    spec.grid = GridSpec{default_hyperparameter_grid(), default_hyperparameter_grid(), 10000};
  if (force_grid && spec.train.optimizer != Optimizer::ckf)
    throw ConfigError("grid-search tunes the CKF; set train.optimizer: ckf");
  const std::optional<GridSpec> grid = spec.train.optimizer == Optimizer::ckf ? spec.grid : std::nullopt;

  Log log(os);
  std::vector<int> codes(spec.sweep.size(), kOk);
  parallel_for(spec.sweep.size(), opts.jobs, [&](std::size_t i) {
    const double op = spec.sweep[i];
    const std::string stem = spec.name + "_" + op_tag(spec.sweep_kind, op);
    log.line("[{}] training {} at {} = {:g}", stem, to_string(spec.train.optimizer), to_string(spec.sweep_kind), op);
    const PointOutcome out = run_point(config_at(spec, op), grid);
    write_point(spec, op, stem, out);
    if (out.report) {
      log.line("[{}] done: {} iterations, q={:g} r={:g}, validation MI {:.4f} b/sym", stem,
               out.report->iterations_run, out.cfg.ckf.q, out.cfg.ckf.r, out.report->mi_validation);
    } else {
      codes[i] = kNumericalBreakdown;
      log.line("[{}] numerical breakdown: {}", stem, out.error);
    }
  });
  return *std::max_element(codes.begin(), codes.end());
}

struct EvalItem {
  std::string label;
  std::optional<Constellation> constellation;
  std::optional<WeightVector> weights;
};

EvalItem load_eval_item(const fs::path& path) {
  const std::string text = read_text(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw IoError(path.string() + ": not valid JSON: " + e.what());
  }
  if (j.value("format", "") == "gcs-run-manifest") {
    try {
      if (!j.contains("weights")) throw IoError(path.string() + ": manifest of a failed run has no weights");
      const int M = j.at("M").get<int>();
      const auto w = j.at("weights").get<std::vector<double>>();
      const NetLayout layout = NetLayout::for_alphabet(M);
      if (static_cast<Eigen::Index>(w.size()) != layout.size())
        throw IoError(fmt::format("{}: {} weights, M = {} needs {}", path.string(), w.size(), M, layout.size()));
      return {j.value("label", path.stem().string()), std::nullopt,
              WeightVector(layout, Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(w.data(), static_cast<Eigen::Index>(w.size()))))};
    } catch (const nlohmann::json::exception& e) {
      throw IoError(path.string() + ": malformed manifest: " + e.what());
    }
  }
  ConstellationFile f = read_constellation(path);
  return {f.meta.label, std::move(f.constellation), std::nullopt};
}

std::string eval_row(const std::string& label, double op, ReceiverKind rx, const MiStatistics& s,
                     const EvalProtocol& p, std::uint64_t seed) {
  return fmt::format("{},{},{},{},{},{},{},{},{}\n", label, format_number(op), to_string(rx),
                     format_number(s.mean), format_number(s.max), format_number(s.p25), p.num_runs,
                     p.symbols_per_run, seed);
}

ChannelConfig default_channel(const std::string& kind) {
  if (kind == "awgn") return AwgnConfig{};
  if (kind == "nlpn") return NlpnConfig{};
  if (kind == "phase_noise_bps" || kind == "bps") return PhaseNoiseBpsConfig{};
  throw ConfigError("--channel: expected awgn | nlpn | phase_noise_bps, got '" + kind + "'");
}

}  // namespace

void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const auto threads = static_cast<std::size_t>(std::clamp(jobs, 1, 256));
  if (threads <= 1 || n <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < std::min(threads, n); ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

int guarded(const std::function<int()>& body, std::ostream& log) {
  try {
    return body();
  } catch (const IoError& e) {
    log << "error: " << e.what() << '\n';
    return kIoError;
  } catch (const fs::filesystem_error& e) {
    log << "error: " << e.what() << '\n';
    return kIoError;
  } catch (const NumericalBreakdown& e) {
    log << "numerical breakdown: " << e.what() << '\n';
    return kNumericalBreakdown;
  } catch (const SearchFailure& e) {
    log << "numerical breakdown: " << e.what() << '\n';
    return kNumericalBreakdown;
  } catch (const UnsupportedChannel& e) {
    log << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    log << "config error: " << e.what() << '\n';
    return kConfigError;
  }
}

int cmd_train(const fs::path& spec_path, const RunOptions& opts, std::ostream& log) {
  return guarded([&] { return train_like(spec_path, opts, log, false); }, log);
}

int cmd_grid_search(const fs::path& spec_path, const RunOptions& opts, std::ostream& log) {
  return guarded([&] { return train_like(spec_path, opts, log, true); }, log);
}

int cmd_compare(const fs::path& spec_path, const RunOptions& opts, std::ostream& os) {
  return guarded(
      [&] {
        ExperimentSpec spec = load_resolved(spec_path, opts.overrides);
        const bool want_bp = std::find(spec.series.begin(), spec.series.end(), "ae-bp") != spec.series.end();
        if (want_bp && !is_differentiable(spec.train.channel))
          throw UnsupportedChannel("compare: series ae-bp needs a differentiable channel; backpropagation "
                                   "cannot train through the " + channel_kind(spec.train.channel) + " channel");
        const bool want_qam = std::find(spec.series.begin(), spec.series.end(), "qam") != spec.series.end();
        if (want_qam) square_qam(spec.train.M);

        Log log(os);
        std::vector<std::string> rows(spec.sweep.size());
        std::vector<int> codes(spec.sweep.size(), kOk);
        parallel_for(spec.sweep.size(), opts.jobs, [&](std::size_t i) {
          const double op = spec.sweep[i];
          const TrainConfig base = config_at(spec, op);
          const std::uint64_t seed = spec.train.master_seed;
          auto add = [&](const std::string& series, ReceiverKind rx, const MiStatistics& s) {
            rows[i] += fmt::format("{},{},{},{},{},{}\n", series, format_number(op), to_string(rx),
                                   format_number(s.mean), format_number(s.max), format_number(s.p25));
            log.line("[{} {:g}] {} {}: mean {:.4f} max {:.4f} p25 {:.4f}", to_string(spec.sweep_kind), op, series,
                     to_string(rx), s.mean, s.max, s.p25);
          };
          for (const std::string& series : spec.series) {
            if (series == "qam") {
              Rng rng = make_stream(seed, "evaluation", i);
              add(series, ReceiverKind::gaussian,
                  evaluate(square_qam(spec.train.M), base.channel, spec.evaluation, rng));
              continue;
            }
            TrainConfig cfg = base;
            std::optional<GridSpec> grid;
            if (series == "ae-ckf") {
              cfg.optimizer = Optimizer::ckf;
              grid = spec.grid;
            } else {
              cfg.optimizer = Optimizer::backprop;
              cfg.max_iterations = spec.backprop_iterations.value_or(kDefaultBackpropIterations);
            }
            const std::string stem = fmt::format("{}_{}_{}", spec.name, series, op_tag(spec.sweep_kind, op));
            log.line("[{}] training", stem);
            const PointOutcome out = run_point(cfg, grid);
            write_point(spec, op, stem, out);
            if (!out.report) {
              codes[i] = kNumericalBreakdown;
              log.line("[{}] numerical breakdown: {}", stem, out.error);
              continue;
            }
            for (ReceiverKind rx : spec.receivers) {
              Rng rng = make_stream(seed, "evaluation", i);
              add(series, rx, evaluate(out.report->final_weights, base.channel, spec.evaluation, rx, rng));
            }
          }
        });

        std::string csv = "series,operating_point,receiver,mi_mean,mi_max,mi_p25\n";
        for (const auto& r : rows) csv += r;
        const fs::path path = spec.output_dir / (spec.name + "_compare.csv");
        write_text(path, csv);
        ordered_json m{{"format", "gcs-compare-manifest"},
                       {"version", 1},
                       {"versions", versions()},
                       {"seed", spec.train.master_seed},
                       {"experiment", ordered_json::parse(describe(spec))}};
        write_text(spec.output_dir / (spec.name + "_compare_manifest.json"), m.dump(2) + "\n");
        log.line("wrote {}", path.string());
        return *std::max_element(codes.begin(), codes.end());
      },
      os);
}

int cmd_evaluate(const EvaluateRequest& req, const RunOptions& opts, std::ostream& os) {
  return guarded(
      [&] {
        ExperimentSpec spec;
        if (req.spec_path) {
          spec = load_experiment(*req.spec_path);
          apply_overrides(spec, opts.overrides);
        } else {
          spec.train.channel = default_channel(req.channel_kind);
          spec.sweep_kind = sweep_kind_for(spec.train.channel);
          spec.sweep = {operating_point_of(spec.train.channel)};
          apply_overrides(spec, opts.overrides);
        }
        if (req.runs) spec.evaluation.num_runs = *req.runs;
        if (req.symbols_per_run) spec.evaluation.symbols_per_run = *req.symbols_per_run;
        spec.validate();
        if (req.inputs.empty() && req.qam_orders.empty())
          throw ConfigError("evaluate: give constellation files, run manifests or --qam");

        std::vector<EvalItem> items;
        for (const auto& p : req.inputs) items.push_back(load_eval_item(p));
        for (int M : req.qam_orders) items.push_back({fmt::format("qam{}", M), square_qam(M), std::nullopt});

        const std::uint64_t seed = spec.train.master_seed;
        const EvalProtocol protocol = spec.evaluation;
        Log log(os);
        const std::size_t jobs_total = spec.sweep.size() * items.size();
        std::vector<std::string> rows(jobs_total);
        parallel_for(jobs_total, opts.jobs, [&](std::size_t job) {
          const std::size_t op_index = job / items.size();
          const EvalItem& item = items[job % items.size()];
          const double op = spec.sweep[op_index];
          const ChannelConfig ch = at_operating_point(spec.train.channel, op);
          if (item.constellation) {
            Rng rng = make_stream(seed, "evaluation", op_index);
            rows[job] += eval_row(item.label, op, ReceiverKind::gaussian,
                                  evaluate(*item.constellation, ch, protocol, rng), protocol, seed);
          } else {
            for (ReceiverKind rx : spec.receivers) {
              Rng rng = make_stream(seed, "evaluation", op_index);
              rows[job] += eval_row(item.label, op, rx, evaluate(*item.weights, ch, protocol, rx, rng), protocol, seed);
            }
          }
        });

        std::string csv = "label,operating_point,receiver,mi_mean,mi_max,mi_p25,runs,symbols_per_run,seed\n";
        for (const auto& r : rows) csv += r;
        const fs::path path = req.output ? *req.output : spec.output_dir / "evaluate.csv";
        write_text(path, csv);
        os << csv;
        log.line("wrote {}", path.string());
        return static_cast<int>(kOk);
      },
      os);
}

int cmd_export_qam(int M, const fs::path& output, std::ostream& os) {
  return guarded(
      [&] {
        const Constellation c = square_qam(M);
        write_constellation(output, c, {fmt::format("qam{}", M), "", std::nullopt, std::nullopt});
        os << "wrote " << output.string() << '\n';
        return static_cast<int>(kOk);
      },
      os);
}

}  // namespace gcs::cli

#include "gcs/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <fmt/format.h>

#include "gcs/errors.hpp"

namespace gcs {
namespace {

std::vector<int> uniform_symbols(int M, int count, Rng& rng) {
  std::uniform_int_distribution<int> dist(0, M - 1);
  std::vector<int> idx(static_cast<std::size_t>(count));
  for (int& i : idx) i = dist(rng);
  return idx;
}

double validation_mi(const WeightVector& w, const TrainConfig& cfg) {
  Rng rng = make_stream(cfg.master_seed, "validation");
  const int symbols = cfg.validation_symbols > 0 ? cfg.validation_symbols : cfg.effective_batch_size();
  const int B = symbols - symbols % cfg.M;
  const MeasurementBatch batch = make_batch(cfg.M, std::max(B, cfg.M), rng);
  const AeOutput out = ae_forward(w, batch.targets, cfg.channel, rng);
  return mi_decoder(out.posteriors, batch.targets).bits_per_symbol;
}

}  // namespace

std::string to_string(Optimizer opt) { return opt == Optimizer::ckf ? "ckf" : "backprop"; }

Optimizer optimizer_from_string(const std::string& name) {
  if (name == "ckf") return Optimizer::ckf;
  if (name == "backprop" || name == "bp" || name == "adam") return Optimizer::backprop;
  throw ConfigError("unknown optimizer '" + name + "' (expected ckf|backprop)");
}

bool ConvergenceMonitor::update(double loss) {
  block_.push_back(loss);
  if (static_cast<int>(block_.size()) < rule_.window) return false;
  const double mean =
      std::accumulate(block_.begin(), block_.end(), 0.0) / static_cast<double>(block_.size());
  block_.clear();
  if (previous_mean_) {
    const double denom = std::max(std::abs(*previous_mean_), 1e-300);
    hits_ = std::abs(mean - *previous_mean_) / denom < rule_.rel_tol ? hits_ + 1 : 0;
  }
  previous_mean_ = mean;
  return hits_ >= rule_.required_hits;
}

void TrainConfig::validate() const {
  NetLayout::for_alphabet(M);
  const int B = effective_batch_size();
  if (B <= 0 || B % M != 0)
    throw ConfigError(fmt::format("batch size {} is not a positive multiple of M = {}", B, M));
  if (max_iterations < 0) throw ConfigError("max_iterations must be >= 0");
  if (convergence.window < 1 || convergence.required_hits < 1)
    throw ConfigError("convergence window and hit count must be >= 1");
  if (optimizer == Optimizer::ckf) ckf.validate();
  if (optimizer == Optimizer::backprop) {
    if (!is_differentiable(channel))
      throw UnsupportedChannel("backpropagation cannot train through the " +
                               channel_kind(channel) + " channel (not differentiable)");
    if (!(adam.learning_rate >= 0.0)) throw ConfigError("learning rate must be >= 0");
  }
}

MeasurementBatch make_batch(int M, int B, Rng& rng) {
  if (M < 1 || B <= 0 || B % M != 0)
    throw ConfigError(fmt::format("batch size {} is not a positive multiple of M = {}", B, M));
  MeasurementBatch batch;
  batch.M = M;
  batch.targets.resize(static_cast<std::size_t>(B));
  for (int k = 0; k < B; ++k) batch.targets[static_cast<std::size_t>(k)] = k % M;
  std::shuffle(batch.targets.begin(), batch.targets.end(), rng);
  return batch;
}

TrainReport train(const TrainConfig& cfg, const ProgressFn& progress) {
  cfg.validate();
  const NetLayout layout = NetLayout::for_alphabet(cfg.M);
  const int B = cfg.effective_batch_size();

  Rng init_rng = make_stream(cfg.master_seed, "init");
  Rng batch_rng = make_stream(cfg.master_seed, "batch");
  Rng noise_rng = make_stream(cfg.master_seed, "channel");

  TrainReport report;
  report.hyperparams_used = cfg.ckf;
  report.final_weights = initial_weights(layout, init_rng);
  ConvergenceMonitor monitor(cfg.convergence);

  auto record = [&](int j, double loss) {
    report.loss_trace.push_back(loss);
    report.iterations_run = j + 1;
    if (progress) progress(j, loss);
    return monitor.update(loss);
  };

  if (cfg.optimizer == Optimizer::ckf) {
    CkfState state = CkfState::initial(report.final_weights.values());
    for (int j = 0; j < cfg.max_iterations; ++j) {
      const MeasurementBatch batch = make_batch(cfg.M, B, batch_rng);
      CkfStepResult step;
      try {
        step = ckf_step(state, cfg.ckf, batch, layout, cfg.channel, noise_rng);
        if (!std::isfinite(step.loss)) throw NumericalBreakdown("loss is not finite");
      } catch (const std::exception& e) {
        throw NumericalBreakdown(fmt::format("CKF breakdown at iteration {} (q={:g}, r={:g}): {}", j,
                                             cfg.ckf.q, cfg.ckf.r, e.what()));
      }
      state = std::move(step.state);
      if (record(j, step.loss)) {
        report.converged = true;
        break;
      }
    }
    report.final_weights = WeightVector(layout, state.mean);
  } else {
    AdamState adam;
    WeightVector w = report.final_weights;
    for (int j = 0; j < cfg.max_iterations; ++j) {
      const MeasurementBatch batch = make_batch(cfg.M, B, batch_rng);
      double loss = 0.0;
      w = backprop_adam_step(w, batch.targets, cfg.channel, cfg.adam, adam, noise_rng, &loss);
      if (!std::isfinite(loss) || !w.values().allFinite())
        throw NumericalBreakdown(fmt::format("backprop diverged at iteration {}", j));
      if (record(j, loss)) {
        report.converged = true;
        break;
      }
    }
    report.final_weights = std::move(w);
  }

  report.mi_validation = validation_mi(report.final_weights, cfg);
  return report;
}

double percentile(std::vector<double> values, double fraction) {
  if (values.empty()) throw InputError("percentile of an empty sample");
  std::sort(values.begin(), values.end());
  const double pos = std::clamp(fraction, 0.0, 1.0) * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

MiStatistics summarize(std::vector<double> per_run) {
  if (per_run.empty()) throw InputError("no evaluation runs");
  MiStatistics s;
  s.mean = std::accumulate(per_run.begin(), per_run.end(), 0.0) / static_cast<double>(per_run.size());
  s.max = *std::max_element(per_run.begin(), per_run.end());
  s.p25 = percentile(per_run, 0.25);
  s.per_run = std::move(per_run);
  return s;
}

MiStatistics evaluate(const WeightVector& weights, const ChannelConfig& channel,
                      const EvalProtocol& protocol, ReceiverKind receiver, Rng& rng) {
  if (protocol.num_runs < 1 || protocol.symbols_per_run < 1)
    throw InputError("evaluation needs at least one run and one symbol");
  const int M = weights.layout().M;
  const Constellation c = constellation_of(encoder_of(weights));
  std::vector<double> per_run;
  per_run.reserve(static_cast<std::size_t>(protocol.num_runs));
  for (int run = 0; run < protocol.num_runs; ++run) {
    const std::vector<int> idx = uniform_symbols(M, protocol.symbols_per_run, rng);
    const AeOutput out = ae_forward(weights, idx, channel, rng);
    per_run.push_back(receiver == ReceiverKind::gaussian
                          ? mi_gaussian(idx, out.received, c).bits_per_symbol
                          : mi_decoder(out.posteriors, idx).bits_per_symbol);
  }
  return summarize(std::move(per_run));
}

MiStatistics evaluate(const Constellation& constellation, const ChannelConfig& channel,
                      const EvalProtocol& protocol, Rng& rng) {
  if (protocol.num_runs < 1 || protocol.symbols_per_run < 1)
    throw InputError("evaluation needs at least one run and one symbol");
  const int M = static_cast<int>(constellation.size());
  std::vector<double> per_run;
  per_run.reserve(static_cast<std::size_t>(protocol.num_runs));
  for (int run = 0; run < protocol.num_runs; ++run) {
    const std::vector<int> idx = uniform_symbols(M, protocol.symbols_per_run, rng);
    const ComplexVec x = constellation.map(idx);
    const ComplexVec y = apply_channel(channel, x, draw_noise(channel, x.size(), rng), constellation);
    per_run.push_back(mi_gaussian(idx, y, constellation).bits_per_symbol);
  }
  return summarize(std::move(per_run));
}

std::vector<double> default_hyperparameter_grid() {
  return {1.0, 1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6};
}

GridSearchResult grid_search(const TrainConfig& base, std::span<const double> q_set,
                             std::span<const double> r_set, const SelectionProtocol& selection,
                             const std::function<void(const GridCell&)>& on_cell) {
  if (q_set.empty() || r_set.empty()) throw ConfigError("grid search needs non-empty q and r sets");
  if (base.optimizer != Optimizer::ckf) throw ConfigError("grid search tunes CKF hyperparameters");

  GridSearchResult result;
  std::optional<std::size_t> best;
  for (double q : q_set) {
    for (double r : r_set) {
      TrainConfig cfg = base;
      cfg.ckf = {q, r};
      GridCell cell;
      cell.hp = cfg.ckf;
      try {
        TrainReport rep = train(cfg);
        Rng test_rng = make_stream(base.master_seed, "selection");
        cell.test_mi = evaluate(rep.final_weights, cfg.channel, {1, selection.symbols},
                                ReceiverKind::gaussian, test_rng)
                           .mean;
        cell.final_loss = rep.loss_trace.empty() ? 0.0 : rep.loss_trace.back();
        cell.validation_mi = rep.mi_validation;
        cell.iterations_run = rep.iterations_run;
        if (!std::isfinite(cell.test_mi)) throw NumericalBreakdown("test MI is not finite");
        const bool better = [&] {
          if (!best) return true;
          const GridCell& b = result.cells[*best];
          if (cell.test_mi != b.test_mi) return cell.test_mi > b.test_mi;
          if (q != b.hp.q) return q < b.hp.q;
          return r < b.hp.r;
        }();
        if (better) {
          best = result.cells.size();
          result.best = cell.hp;
          result.best_report = std::move(rep);
        }
      } catch (const NumericalBreakdown& e) {
        cell.diverged = true;
        cell.error = e.what();
      } catch (const DegenerateConstellation& e) {
        cell.diverged = true;
        cell.error = e.what();
      }
      if (on_cell) on_cell(cell);
      result.cells.push_back(std::move(cell));
    }
  }
  if (!best) {
    std::ostringstream msg;
    msg << "all " << result.cells.size() << " grid cells diverged:";
    for (const auto& c : result.cells) msg << "\n  q=" << c.hp.q << " r=" << c.hp.r << ": " << c.error;
    throw SearchFailure(msg.str());
  }
  return result;
}

}  // namespace gcs

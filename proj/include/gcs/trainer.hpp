#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gcs/channels.hpp"
#include "gcs/ckf.hpp"
#include "gcs/metrics.hpp"
#include "gcs/nn.hpp"

namespace gcs {

enum class Optimizer { ckf, backprop };

std::string to_string(Optimizer opt);
Optimizer optimizer_from_string(const std::string& name);

/// Stop when the moving average of the loss over `window` iterations changes by
/// less than rel_tol (relative) on `required_hits` consecutive checks. One check
/// per `window` iterations.
struct ConvergenceRule {
  int window = 50;
  double rel_tol = 1e-4;
  int required_hits = 3;
};

class ConvergenceMonitor {
 public:
  explicit ConvergenceMonitor(ConvergenceRule rule) : rule_(rule) {}

  /// Feed one loss value; true once the rule is satisfied.
  bool update(double loss);

 private:
  ConvergenceRule rule_;
  std::vector<double> block_;
  std::optional<double> previous_mean_;
  int hits_ = 0;
};

inline constexpr int kDefaultCkfIterations = 2000;
inline constexpr int kDefaultBackpropIterations = 20000;

struct TrainConfig {
  int M = 16;
  int batch_size = 0;  // 0 -> 32 M
  Optimizer optimizer = Optimizer::ckf;
  CkfHyperparams ckf;
  AdamSettings adam;
  ChannelConfig channel = AwgnConfig{};
  int max_iterations = kDefaultCkfIterations;
  ConvergenceRule convergence;
  std::uint64_t master_seed = 1;
  int validation_symbols = 0;  // 0 -> batch size

  int effective_batch_size() const { return batch_size > 0 ? batch_size : 32 * M; }
  void validate() const;
};

struct TrainReport {
  WeightVector final_weights;
  std::vector<double> loss_trace;  // nats per iteration
  double mi_validation = 0.0;      // decoder bound, bits/symbol
  int iterations_run = 0;
  bool converged = false;
  CkfHyperparams hyperparams_used;
};

/// Balanced batch: each of the M symbols exactly B/M times, shuffled.
MeasurementBatch make_batch(int M, int B, Rng& rng);

/// Called after every iteration with (iteration index, loss).
using ProgressFn = std::function<void(int, double)>;

/// Errors from the CKF carry the iteration index and hyperparameters.
TrainReport train(const TrainConfig& cfg, const ProgressFn& progress = {});

struct EvalProtocol {
  int num_runs = 100;
  int symbols_per_run = 100000;
};

/// Per-run MI samples and summary statistics.
struct MiStatistics {
  double mean = 0.0;
  double max = 0.0;
  double p25 = 0.0;
  std::vector<double> per_run;
};

/// Linear interpolation between order statistics (fraction in [0, 1]).
double percentile(std::vector<double> values, double fraction);

MiStatistics summarize(std::vector<double> per_run);

/// Independent simulations of trained weights; Gaussian or decoder receiver.
MiStatistics evaluate(const WeightVector& weights, const ChannelConfig& channel,
                      const EvalProtocol& protocol, ReceiverKind receiver, Rng& rng);

/// Same with a fixed alphabet (QAM, imported files); Gaussian receiver only.
MiStatistics evaluate(const Constellation& constellation, const ChannelConfig& channel,
                      const EvalProtocol& protocol, Rng& rng);

struct GridCell {
  CkfHyperparams hp;
  bool diverged = false;
  std::string error;
  double final_loss = 0.0;
  double validation_mi = 0.0;
  double test_mi = 0.0;  // Gaussian receiver on the held-out run
  int iterations_run = 0;
};

struct GridSearchResult {
  CkfHyperparams best;
  TrainReport best_report;
  std::vector<GridCell> cells;  // q-major, then r
};

/// Held-out run used to rank grid cells.
struct SelectionProtocol {
  int symbols = 10000;
};

/// Trains one autoencoder per (q, r) and keeps the one with the highest
/// Gaussian-receiver MI on a held-out run; ties go to smaller q, then smaller r.
GridSearchResult grid_search(const TrainConfig& base, std::span<const double> q_set,
                             std::span<const double> r_set, const SelectionProtocol& selection = {},
                             const std::function<void(const GridCell&)>& on_cell = {});

/// Seven decades {1, 1e-1, ..., 1e-6}.
std::vector<double> default_hyperparameter_grid();

}  // namespace gcs

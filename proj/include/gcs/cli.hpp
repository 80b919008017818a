#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "gcs/channels.hpp"
#include "gcs/constellation.hpp"
#include "gcs/trainer.hpp"

namespace gcs::cli {

inline constexpr const char* kVersion = "0.3.0";
inline constexpr int kCsvSchemaVersion = 1;
/// Overrides the output directory of every subcommand when set.
inline constexpr const char* kOutputDirEnv = "GCS_OUTPUT_DIR";

enum ExitCode : int { kOk = 0, kConfigError = 1, kNumericalBreakdown = 2, kIoError = 3 };

/// What the sweep values mean; must agree with the channel kind.
enum class SweepKind { snr_db, launch_power_dbm };

std::string to_string(SweepKind kind);
SweepKind sweep_kind_for(const ChannelConfig& channel);

/// Returns `channel` moved to the operating point `value`.
ChannelConfig at_operating_point(const ChannelConfig& channel, double value);
/// The current operating point of `channel` (SNR or launch power).
double operating_point_of(const ChannelConfig& channel);

struct GridSpec {
  std::vector<double> q_set;
  std::vector<double> r_set;
  int selection_symbols = 10000;
};

struct ExperimentSpec {
  std::string name = "experiment";
  TrainConfig train;
  SweepKind sweep_kind = SweepKind::snr_db;
  std::vector<double> sweep;
  std::optional<GridSpec> grid;
  EvalProtocol evaluation{20, 10000};
  std::vector<ReceiverKind> receivers{ReceiverKind::gaussian};
  /// compare: any of "ae-ckf", "ae-bp", "qam".
  std::vector<std::string> series{"ae-ckf", "qam"};
  std::filesystem::path output_dir = "results";
  /// Iteration cap for the backprop series of `compare`; defaults to the
  /// backprop default.
  std::optional<int> backprop_iterations;

  /// Sweep non-empty and matching the channel; training config valid.
  void validate() const;
};

/// Parses a YAML experiment file. Errors carry "file:line: field: reason".
ExperimentSpec load_experiment(const std::filesystem::path& path);
ExperimentSpec parse_experiment(const std::string& yaml_text, const std::string& origin = "<string>");

/// Command-line overrides; unset fields leave the file values alone.
struct Overrides {
  std::optional<double> snr_db;
  std::optional<double> launch_dbm;
  std::optional<int> num_spans;
  std::optional<int> window_size;
  std::optional<int> test_phases;
  std::optional<std::uint64_t> seed;
  std::optional<int> max_iterations;
  std::optional<std::string> output_dir;
};

/// Flags beat the environment, which beats the file.
void apply_overrides(ExperimentSpec& spec, const Overrides& o);

/// Resolved configuration as JSON text (embedded in every manifest).
std::string describe(const ExperimentSpec& spec);

// ---------------------------------------------------------------------------
// Constellation files

struct ConstellationMeta {
  std::string label;
  std::string channel;  // channel kind, or empty
  std::optional<double> operating_point;
  std::optional<std::uint64_t> seed;
};

struct ConstellationFile {
  Constellation constellation;
  ConstellationMeta meta;
};

std::string format_constellation(const Constellation& c, const ConstellationMeta& meta);
void write_constellation(const std::filesystem::path& path, const Constellation& c,
                         const ConstellationMeta& meta);
/// Throws IoError naming the file if it is unreadable, malformed, its M does
/// not match the point count, or its mean power is not 1 within 1e-9.
ConstellationFile read_constellation(const std::filesystem::path& path);

/// Fixed 17-significant-digit rendering used by every CSV.
std::string format_number(double v);

// ---------------------------------------------------------------------------
// Subcommands. Each returns an exit code and reports on `log`.

struct RunOptions {
  Overrides overrides;
  int jobs = 1;
};

int cmd_train(const std::filesystem::path& spec_path, const RunOptions& opts, std::ostream& log);
int cmd_grid_search(const std::filesystem::path& spec_path, const RunOptions& opts, std::ostream& log);
int cmd_compare(const std::filesystem::path& spec_path, const RunOptions& opts, std::ostream& log);

struct EvaluateRequest {
  std::optional<std::filesystem::path> spec_path;  // channel, sweep and protocol
  std::string channel_kind = "awgn";               // used without a spec file
  std::vector<std::filesystem::path> inputs;       // constellation files or run manifests
  std::vector<int> qam_orders;                     // built-in square QAM
  std::optional<int> runs;
  std::optional<int> symbols_per_run;
  std::optional<std::filesystem::path> output;  // CSV path; default <output_dir>/evaluate.csv
};

int cmd_evaluate(const EvaluateRequest& req, const RunOptions& opts, std::ostream& log);

int cmd_export_qam(int M, const std::filesystem::path& output, std::ostream& log);

/// Runs `body`, mapping library exceptions to exit codes and printing the
/// message to `log`.
int guarded(const std::function<int()>& body, std::ostream& log);

}  // namespace gcs::cli

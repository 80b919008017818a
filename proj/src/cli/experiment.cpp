#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <yaml-cpp/yaml.h>

#include "gcs/cli.hpp"
#include "gcs/errors.hpp"
#include "json.hpp"

namespace gcs::cli {
namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

// Walks the YAML tree, reporting errors as "origin:line: field: reason".
class Reader {
 public:
  explicit Reader(std::string origin) : origin_(std::move(origin)) {}

  [[noreturn]] void fail(const YAML::Node& at, const std::string& field, const std::string& why) const {
    const int line = at.IsDefined() && at.Mark().line >= 0 ? at.Mark().line + 1 : 0;
    if (line > 0) throw ConfigError(fmt::format("{}:{}: {}: {}", origin_, line, field, why));
    throw ConfigError(fmt::format("{}: {}: {}", origin_, field, why));
  }

  void require_map(const YAML::Node& n, const std::string& field) const {
    if (!n.IsMap()) fail(n, field, "expected a mapping");
  }

  void check_keys(const YAML::Node& map, const std::string& prefix,
                  std::initializer_list<const char*> allowed) const {
    const std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& kv : map) {
      const auto key = kv.first.as<std::string>();
      if (!ok.count(key)) fail(kv.first, prefix + key, "unknown field");
    }
  }

  template <class T>
  void read(const YAML::Node& map, const char* key, const std::string& prefix, T& out) const {
    const YAML::Node n = map[key];
    if (!n) return;
    out = as<T>(n, prefix + key);
  }

  template <class T>
  T as(const YAML::Node& n, const std::string& field) const {
    if (!n.IsScalar()) fail(n, field, "expected a scalar");
    try {
      return n.as<T>();
    } catch (const YAML::Exception&) {
      fail(n, field, fmt::format("cannot parse '{}'", n.Scalar()));
    }
  }

  std::vector<double> numbers(const YAML::Node& n, const std::string& field) const {
    std::vector<double> out;
    if (n.IsScalar()) {
      out.push_back(as<double>(n, field));
      return out;
    }
    if (!n.IsSequence()) fail(n, field, "expected a number or a list of numbers");
    for (std::size_t i = 0; i < n.size(); ++i) out.push_back(as<double>(n[i], fmt::format("{}[{}]", field, i)));
    return out;
  }

 private:
  std::string origin_;
};

ChannelConfig parse_channel(const Reader& rd, const YAML::Node& n) {
  rd.require_map(n, "channel");
  if (!n["kind"]) rd.fail(n, "channel.kind", "missing");
  const auto kind = rd.as<std::string>(n["kind"], "channel.kind");
  if (kind == "awgn") {
    rd.check_keys(n, "channel.", {"kind", "snr_db"});
    AwgnConfig c;
    rd.read(n, "snr_db", "channel.", c.snr_db);
    return c;
  }
  if (kind == "nlpn") {
    rd.check_keys(n, "channel.",
                  {"kind", "launch_power_dbm", "gamma", "alpha_db_per_km", "span_length_km", "num_spans",
                   "noise_figure_db", "carrier_freq_hz", "symbol_rate_baud", "ase_noise"});
    NlpnConfig c;
    rd.read(n, "launch_power_dbm", "channel.", c.launch_power_dbm);
    rd.read(n, "gamma", "channel.", c.gamma);
    rd.read(n, "alpha_db_per_km", "channel.", c.alpha_db_per_km);
    rd.read(n, "span_length_km", "channel.", c.span_length_km);
    rd.read(n, "num_spans", "channel.", c.num_spans);
    rd.read(n, "noise_figure_db", "channel.", c.noise_figure_db);
    rd.read(n, "carrier_freq_hz", "channel.", c.carrier_freq_hz);
    rd.read(n, "symbol_rate_baud", "channel.", c.symbol_rate_baud);
    rd.read(n, "ase_noise", "channel.", c.ase_noise);
    if (c.num_spans < 1) rd.fail(n["num_spans"], "channel.num_spans", "must be >= 1");
    return c;
  }
  if (kind == "phase_noise_bps") {
    rd.check_keys(n, "channel.",
                  {"kind", "snr_db", "linewidth_hz", "symbol_rate_baud", "num_test_phases", "window_size"});
    PhaseNoiseBpsConfig c;
    rd.read(n, "snr_db", "channel.", c.snr_db);
    rd.read(n, "linewidth_hz", "channel.", c.linewidth_hz);
    rd.read(n, "symbol_rate_baud", "channel.", c.symbol_rate_baud);
    rd.read(n, "num_test_phases", "channel.", c.num_test_phases);
    rd.read(n, "window_size", "channel.", c.window_size);
    try {
      c.validate();
    } catch (const InputError& e) {
      rd.fail(n, "channel", e.what());
    }
    return c;
  }
  rd.fail(n["kind"], "channel.kind", "expected awgn | nlpn | phase_noise_bps, got '" + kind + "'");
}

SweepKind sweep_kind_from(const Reader& rd, const YAML::Node& n) {
  const auto s = rd.as<std::string>(n, "sweep.kind");
  if (s == "snr_db") return SweepKind::snr_db;
  if (s == "launch_power_dbm") return SweepKind::launch_power_dbm;
  rd.fail(n, "sweep.kind", "expected snr_db | launch_power_dbm, got '" + s + "'");
}

nlohmann::ordered_json channel_json(const ChannelConfig& ch) {
  using nlohmann::ordered_json;
  return std::visit(
      overloaded{[](const AwgnConfig& c) { return ordered_json{{"kind", "awgn"}, {"snr_db", c.snr_db}}; },
                 [](const NlpnConfig& c) {
                   return ordered_json{{"kind", "nlpn"},
                                       {"launch_power_dbm", c.launch_power_dbm},
                                       {"gamma", c.gamma},
                                       {"alpha_db_per_km", c.alpha_db_per_km},
                                       {"span_length_km", c.span_length_km},
                                       {"num_spans", c.num_spans},
                                       {"noise_figure_db", c.noise_figure_db},
                                       {"carrier_freq_hz", c.carrier_freq_hz},
                                       {"symbol_rate_baud", c.symbol_rate_baud},
                                       {"ase_noise", c.ase_noise}};
                 },
                 [](const PhaseNoiseBpsConfig& c) {
                   return ordered_json{{"kind", "phase_noise_bps"},
                                       {"snr_db", c.snr_db},
                                       {"linewidth_hz", c.linewidth_hz},
                                       {"symbol_rate_baud", c.symbol_rate_baud},
                                       {"num_test_phases", c.num_test_phases},
                                       {"window_size", c.window_size}};
                 }},
      ch);
}

// JSON has no infinity; the noise-off sentinel is written as a string.
nlohmann::ordered_json number_or_inf(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

}  // namespace

std::string to_string(SweepKind kind) {
  return kind == SweepKind::snr_db ? "snr_db" : "launch_power_dbm";
}

SweepKind sweep_kind_for(const ChannelConfig& channel) {
  return std::holds_alternative<NlpnConfig>(channel) ? SweepKind::launch_power_dbm : SweepKind::snr_db;
}

ChannelConfig at_operating_point(const ChannelConfig& channel, double value) {
  ChannelConfig out = channel;
  std::visit(overloaded{[&](AwgnConfig& c) { c.snr_db = value; },
                        [&](NlpnConfig& c) { c.launch_power_dbm = value; },
                        [&](PhaseNoiseBpsConfig& c) { c.snr_db = value; }},
             out);
  return out;
}

double operating_point_of(const ChannelConfig& channel) {
  return std::visit(overloaded{[](const AwgnConfig& c) { return c.snr_db; },
                               [](const NlpnConfig& c) { return c.launch_power_dbm; },
                               [](const PhaseNoiseBpsConfig& c) { return c.snr_db; }},
                    channel);
}

void ExperimentSpec::validate() const {
  if (sweep.empty()) throw ConfigError("sweep: at least one operating point is required");
  if (sweep_kind != sweep_kind_for(train.channel))
    throw ConfigError(fmt::format("sweep.kind: {} does not match the {} channel (expected {})",
                                  to_string(sweep_kind), channel_kind(train.channel),
                                  to_string(sweep_kind_for(train.channel))));
  for (double v : sweep) {
    if (std::isnan(v)) throw ConfigError("sweep.values: NaN operating point");
    if (sweep_kind == SweepKind::launch_power_dbm && !std::isfinite(v))
      throw ConfigError("sweep.values: launch power must be finite");
  }
  if (evaluation.num_runs < 1 || evaluation.symbols_per_run < 1)
    throw ConfigError("evaluation: runs and symbols_per_run must be >= 1");
  if (grid && (grid->q_set.empty() || grid->r_set.empty()))
    throw ConfigError("grid: q and r lists must be non-empty");
  if (grid && grid->selection_symbols < 1) throw ConfigError("grid.selection_symbols must be >= 1");
  for (const auto& s : series)
    if (s != "ae-ckf" && s != "ae-bp" && s != "qam")
      throw ConfigError("compare.series: unknown series '" + s + "' (expected ae-ckf | ae-bp | qam)");
  train.validate();
}

ExperimentSpec parse_experiment(const std::string& text, const std::string& origin) {
  const Reader rd(origin);
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ConfigError(fmt::format("{}:{}: syntax: {}", origin, e.mark.line + 1, e.msg));
  }
  if (!root.IsMap()) throw ConfigError(origin + ": top level must be a mapping");
  rd.check_keys(root, "", {"name", "M", "seed", "channel", "sweep", "train", "grid", "evaluation",
                           "compare", "output_dir"});

  ExperimentSpec spec;
  rd.read(root, "name", "", spec.name);
  rd.read(root, "M", "", spec.train.M);
  rd.read(root, "seed", "", spec.train.master_seed);
  if (root["output_dir"]) spec.output_dir = rd.as<std::string>(root["output_dir"], "output_dir");
  try {
    NetLayout::for_alphabet(spec.train.M);
  } catch (const InputError& e) {
    rd.fail(root["M"], "M", e.what());
  }

  if (!root["channel"]) rd.fail(root, "channel", "missing");
  spec.train.channel = parse_channel(rd, root["channel"]);
  spec.sweep_kind = sweep_kind_for(spec.train.channel);

  if (const YAML::Node s = root["sweep"]) {
    if (s.IsMap()) {
      rd.check_keys(s, "sweep.", {"kind", "values"});
      if (s["kind"]) spec.sweep_kind = sweep_kind_from(rd, s["kind"]);
      if (!s["values"]) rd.fail(s, "sweep.values", "missing");
      spec.sweep = rd.numbers(s["values"], "sweep.values");
      if (spec.sweep_kind != sweep_kind_for(spec.train.channel))
        rd.fail(s["kind"], "sweep.kind",
                fmt::format("{} does not match the {} channel", to_string(spec.sweep_kind),
                            channel_kind(spec.train.channel)));
    } else {
      spec.sweep = rd.numbers(s, "sweep");
    }
    if (spec.sweep.empty()) rd.fail(s, "sweep", "at least one operating point is required");
  } else {
    spec.sweep = {operating_point_of(spec.train.channel)};
  }

  if (const YAML::Node t = root["train"]) {
    rd.require_map(t, "train");
    rd.check_keys(t, "train.", {"optimizer", "batch_size", "max_iterations", "q", "r", "learning_rate",
                                "convergence", "validation_symbols", "backprop_iterations"});
    if (t["optimizer"]) {
      try {
        spec.train.optimizer = optimizer_from_string(rd.as<std::string>(t["optimizer"], "train.optimizer"));
      } catch (const ConfigError& e) {
        rd.fail(t["optimizer"], "train.optimizer", e.what());
      }
      if (spec.train.optimizer == Optimizer::backprop) spec.train.max_iterations = kDefaultBackpropIterations;
    }
    rd.read(t, "batch_size", "train.", spec.train.batch_size);
    rd.read(t, "max_iterations", "train.", spec.train.max_iterations);
    rd.read(t, "q", "train.", spec.train.ckf.q);
    rd.read(t, "r", "train.", spec.train.ckf.r);
    rd.read(t, "learning_rate", "train.", spec.train.adam.learning_rate);
    rd.read(t, "validation_symbols", "train.", spec.train.validation_symbols);
    if (t["backprop_iterations"])
      spec.backprop_iterations = rd.as<int>(t["backprop_iterations"], "train.backprop_iterations");
    if (const YAML::Node c = t["convergence"]) {
      rd.require_map(c, "train.convergence");
      rd.check_keys(c, "train.convergence.", {"window", "rel_tol", "required_hits"});
      rd.read(c, "window", "train.convergence.", spec.train.convergence.window);
      rd.read(c, "rel_tol", "train.convergence.", spec.train.convergence.rel_tol);
      rd.read(c, "required_hits", "train.convergence.", spec.train.convergence.required_hits);
    }
    if (spec.train.batch_size < 0) rd.fail(t["batch_size"], "train.batch_size", "must be >= 0");
    if (spec.train.effective_batch_size() % spec.train.M != 0)
      rd.fail(t["batch_size"], "train.batch_size",
              fmt::format("{} is not a multiple of M = {}", spec.train.batch_size, spec.train.M));
    if (spec.train.max_iterations < 0) rd.fail(t["max_iterations"], "train.max_iterations", "must be >= 0");
    try {
      spec.train.ckf.validate();
    } catch (const ConfigError& e) {
      rd.fail(t, "train", e.what());
    }
  }

  if (const YAML::Node g = root["grid"]) {
    rd.require_map(g, "grid");
    rd.check_keys(g, "grid.", {"q", "r", "selection_symbols"});
    GridSpec grid{default_hyperparameter_grid(), default_hyperparameter_grid(), 10000};
    if (g["q"]) grid.q_set = rd.numbers(g["q"], "grid.q");
    if (g["r"]) grid.r_set = rd.numbers(g["r"], "grid.r");
    rd.read(g, "selection_symbols", "grid.", grid.selection_symbols);
    if (grid.q_set.empty()) rd.fail(g["q"], "grid.q", "must not be empty");
    if (grid.r_set.empty()) rd.fail(g["r"], "grid.r", "must not be empty");
    spec.grid = grid;
  }

  if (const YAML::Node e = root["evaluation"]) {
    rd.require_map(e, "evaluation");
    rd.check_keys(e, "evaluation.", {"runs", "symbols_per_run", "receivers"});
    rd.read(e, "runs", "evaluation.", spec.evaluation.num_runs);
    rd.read(e, "symbols_per_run", "evaluation.", spec.evaluation.symbols_per_run);
    if (const YAML::Node r = e["receivers"]) {
      if (!r.IsSequence()) rd.fail(r, "evaluation.receivers", "expected a list");
      spec.receivers.clear();
      for (std::size_t i = 0; i < r.size(); ++i) {
        try {
          spec.receivers.push_back(receiver_from_string(rd.as<std::string>(r[i], "evaluation.receivers")));
        } catch (const ConfigError& ex) {
          rd.fail(r[i], "evaluation.receivers", ex.what());
        }
      }
    }
    if (spec.evaluation.num_runs < 1) rd.fail(e["runs"], "evaluation.runs", "must be >= 1");
    if (spec.evaluation.symbols_per_run < 1)
      rd.fail(e["symbols_per_run"], "evaluation.symbols_per_run", "must be >= 1");
  }

  if (const YAML::Node c = root["compare"]) {
    rd.require_map(c, "compare");
    rd.check_keys(c, "compare.", {"series"});
    if (const YAML::Node s = c["series"]) {
      if (!s.IsSequence()) rd.fail(s, "compare.series", "expected a list");
      spec.series.clear();
      for (std::size_t i = 0; i < s.size(); ++i) {
        const auto name = rd.as<std::string>(s[i], "compare.series");
        if (name != "ae-ckf" && name != "ae-bp" && name != "qam")
          rd.fail(s[i], "compare.series", "unknown series '" + name + "' (expected ae-ckf | ae-bp | qam)");
        spec.series.push_back(name);
      }
    }
  }
  return spec;
}

ExperimentSpec load_experiment(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read experiment file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_experiment(buf.str(), path.string());
}

void apply_overrides(ExperimentSpec& spec, const Overrides& o) {
  ChannelConfig& ch = spec.train.channel;
  if (o.snr_db) {
    if (std::holds_alternative<NlpnConfig>(ch))
      throw ConfigError("--snr-db does not apply to the nlpn channel (use --launch-dbm)");
    ch = at_operating_point(ch, *o.snr_db);
    spec.sweep = {*o.snr_db};
  }
  if (o.launch_dbm) {
    if (!std::holds_alternative<NlpnConfig>(ch))
      throw ConfigError("--launch-dbm applies only to the nlpn channel");
    ch = at_operating_point(ch, *o.launch_dbm);
    spec.sweep = {*o.launch_dbm};
  }
  if (o.num_spans) {
    auto* n = std::get_if<NlpnConfig>(&ch);
    if (!n) throw ConfigError("--num-spans applies only to the nlpn channel");
    if (*o.num_spans < 1) throw ConfigError("--num-spans must be >= 1");
    n->num_spans = *o.num_spans;
  }
  if (o.window_size || o.test_phases) {
    auto* p = std::get_if<PhaseNoiseBpsConfig>(&ch);
    if (!p) throw ConfigError("--window-size and --test-phases apply only to the phase_noise_bps channel");
    if (o.window_size) p->window_size = *o.window_size;
    if (o.test_phases) p->num_test_phases = *o.test_phases;
    try {
      p->validate();
    } catch (const InputError& e) {
      throw ConfigError(e.what());
    }
  }
  if (o.seed) spec.train.master_seed = *o.seed;
  if (o.max_iterations) {
    if (*o.max_iterations < 0) throw ConfigError("--max-iterations must be >= 0");
    spec.train.max_iterations = *o.max_iterations;
  }
  if (o.output_dir) {
    spec.output_dir = *o.output_dir;
  } else if (const char* env = std::getenv(kOutputDirEnv); env && *env) {
    spec.output_dir = env;
  }
}

std::string describe(const ExperimentSpec& spec) {
  using nlohmann::ordered_json;
  const TrainConfig& t = spec.train;
  ordered_json j;
  j["name"] = spec.name;
  j["M"] = t.M;
  j["seed"] = t.master_seed;
  ordered_json ch = channel_json(t.channel);
  if (ch.contains("snr_db")) ch["snr_db"] = number_or_inf(ch["snr_db"].get<double>());
  j["channel"] = ch;
  ordered_json sweep = ordered_json::array();
  for (double v : spec.sweep) sweep.push_back(number_or_inf(v));
  j["sweep"] = {{"kind", to_string(spec.sweep_kind)}, {"values", sweep}};
  j["train"] = {{"optimizer", to_string(t.optimizer)},
                {"batch_size", t.effective_batch_size()},
                {"max_iterations", t.max_iterations},
                {"q", t.ckf.q},
                {"r", t.ckf.r},
                {"learning_rate", t.adam.learning_rate},
                {"convergence",
                 {{"window", t.convergence.window},
                  {"rel_tol", t.convergence.rel_tol},
                  {"required_hits", t.convergence.required_hits}}},
                {"validation_symbols", t.validation_symbols > 0 ? t.validation_symbols : t.effective_batch_size()}};
  if (spec.backprop_iterations) j["train"]["backprop_iterations"] = *spec.backprop_iterations;
  if (spec.grid)
    j["grid"] = {{"q", spec.grid->q_set}, {"r", spec.grid->r_set}, {"selection_symbols", spec.grid->selection_symbols}};
  ordered_json receivers = ordered_json::array();
  for (ReceiverKind r : spec.receivers) receivers.push_back(to_string(r));
  j["evaluation"] = {{"runs", spec.evaluation.num_runs},
                     {"symbols_per_run", spec.evaluation.symbols_per_run},
                     {"receivers", receivers}};
  j["compare"] = {{"series", spec.series}};
  return j.dump(2);
}

}  // namespace gcs::cli

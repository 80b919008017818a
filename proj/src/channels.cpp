#include "gcs/channels.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "gcs/errors.hpp"

namespace gcs {
namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

// Circularly-symmetric complex Gaussian samples of total variance `variance`.
// Consumes nothing from the stream when the variance is zero.
ComplexVec complex_gaussian(std::size_t n, double variance, Rng& rng) {
  ComplexVec out(n, cd{0.0, 0.0});
  if (variance <= 0.0) return out;
  std::normal_distribution<double> dist(0.0, std::sqrt(variance / 2.0));
  for (auto& v : out) {
    const double re = dist(rng);
    const double im = dist(rng);
    v = {re, im};
  }
  return out;
}

void check_length(const ChannelNoise& noise, std::size_t n) {
  if (noise.length != n)
    throw InputError("noise realization has length " + std::to_string(noise.length) +
                     ", input has " + std::to_string(n));
}

cd nlpn_symbol(const NlpnConfig& cfg, cd x, const ChannelNoise& noise, std::size_t k) {
  const double p_in = cfg.launch_power_w();
  const double rot = cfg.nonlinear_coefficient();
  cd z = std::sqrt(p_in) * x;
  for (int s = 0; s < cfg.num_spans; ++s) {
    z *= std::polar(1.0, rot * std::norm(z));
    z += noise.additive[static_cast<std::size_t>(s) * noise.length + k];
  }
  // Deterministic renormalization to the expected output power P_in + N_sp P_n.
  return z / std::sqrt(p_in + cfg.num_spans * cfg.ase_variance());
}

// Windowed distances closer than this (relative) are treated as tied. Symmetric
// alphabets produce exact mathematical ties that rounding would otherwise break
// at random.
constexpr double kBpsTieTolerance = 1e-9;

// Test phase i mapped to (-pi, pi].
double wrapped_test_phase(Eigen::Index i, int num_test_phases) {
  const double theta = 2.0 * std::numbers::pi * static_cast<double>(i) / num_test_phases;
  return theta > std::numbers::pi ? theta - 2.0 * std::numbers::pi : theta;
}

}  // namespace

double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }

double dbm_to_watt(double dbm) { return std::pow(10.0, (dbm - 30.0) / 10.0); }

double AwgnConfig::noise_variance() const { return 1.0 / db_to_linear(snr_db); }

double NlpnConfig::launch_power_w() const { return dbm_to_watt(launch_power_dbm); }

double NlpnConfig::alpha_per_km() const { return alpha_db_per_km * std::log(10.0) / 10.0; }

double NlpnConfig::effective_length_km() const {
  const double a = alpha_per_km();
  if (a == 0.0) return span_length_km;
  return (1.0 - std::exp(-a * span_length_km)) / a;
}

double NlpnConfig::amplifier_gain() const { return std::exp(alpha_per_km() * span_length_km); }

double NlpnConfig::ase_variance() const {
  if (!ase_noise) return 0.0;
  const double nf = db_to_linear(noise_figure_db);
  return kPlanck * carrier_freq_hz * symbol_rate_baud * (amplifier_gain() * nf - 1.0) / 2.0;
}

double PhaseNoiseBpsConfig::noise_variance() const { return 1.0 / db_to_linear(snr_db); }

double PhaseNoiseBpsConfig::increment_variance() const {
  return 2.0 * std::numbers::pi * linewidth_hz / symbol_rate_baud;
}

void PhaseNoiseBpsConfig::validate() const {
  if (num_test_phases < 2) throw InputError("BPS needs at least 2 test phases");
  if (window_size < 1) throw InputError("BPS window size must be >= 1");
  if (linewidth_hz < 0.0) throw InputError("linewidth must be non-negative");
  if (!(symbol_rate_baud > 0.0)) throw InputError("symbol rate must be positive");
}

std::string channel_kind(const ChannelConfig& channel) {
  return std::visit(overloaded{[](const AwgnConfig&) { return std::string("awgn"); },
                               [](const NlpnConfig&) { return std::string("nlpn"); },
                               [](const PhaseNoiseBpsConfig&) {
                                 return std::string("phase_noise_bps");
                               }},
                    channel);
}

bool is_differentiable(const ChannelConfig& channel) {
  return !std::holds_alternative<PhaseNoiseBpsConfig>(channel);
}

ChannelNoise draw_noise(const ChannelConfig& channel, std::size_t length, Rng& rng) {
  ChannelNoise noise;
  noise.length = length;
  std::visit(overloaded{
                 [&](const AwgnConfig& c) {
                   noise.additive = complex_gaussian(length, c.noise_variance(), rng);
                 },
                 [&](const NlpnConfig& c) {
                   if (c.num_spans < 0) throw InputError("num_spans must be non-negative");
                   noise.additive = complex_gaussian(
                       length * static_cast<std::size_t>(c.num_spans), c.ase_variance(), rng);
                 },
                 [&](const PhaseNoiseBpsConfig& c) {
                   c.validate();
                   noise.phase = length > 0 ? wiener_phase(length, c, rng) : std::vector<double>{};
                   noise.additive = complex_gaussian(length, c.noise_variance(), rng);
                 }},
             channel);
  return noise;
}

cd apply_memoryless(const ChannelConfig& channel, cd x, const ChannelNoise& noise,
                    std::size_t k) {
  if (const auto* awgn = std::get_if<AwgnConfig>(&channel)) {
    (void)awgn;
    return x + noise.additive[k];
  }
  if (const auto* nlpn = std::get_if<NlpnConfig>(&channel)) return nlpn_symbol(*nlpn, x, noise, k);
  throw UnsupportedChannel("the phase-noise/BPS channel is not memoryless or differentiable");
}

ComplexVec apply_channel(const ChannelConfig& channel, std::span<const cd> x,
                         const ChannelNoise& noise, const Constellation& reference) {
  check_length(noise, x.size());
  if (const auto* pn = std::get_if<PhaseNoiseBpsConfig>(&channel)) {
    ComplexVec z(x.size());
    for (std::size_t k = 0; k < x.size(); ++k)
      z[k] = x[k] * std::polar(1.0, noise.phase[k]) + noise.additive[k];
    return bps_recover(z, reference, *pn).recovered;
  }
  if (const auto* nlpn = std::get_if<NlpnConfig>(&channel)) {
    if (!(nlpn->launch_power_w() > 0.0) || !std::isfinite(nlpn->launch_power_dbm))
      throw InputError("launch power must be positive and finite");
  }
  ComplexVec y(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) y[k] = apply_memoryless(channel, x[k], noise, k);
  return y;
}

Eigen::Matrix2d channel_jacobian(const ChannelConfig& channel, cd x, const ChannelNoise& noise,
                                 std::size_t k, double step) {
  Eigen::Matrix2d J;
  const cd dirs[2] = {cd{step, 0.0}, cd{0.0, step}};
  for (int c = 0; c < 2; ++c) {
    const cd plus = apply_memoryless(channel, x + dirs[c], noise, k);
    const cd minus = apply_memoryless(channel, x - dirs[c], noise, k);
    const cd d = (plus - minus) / (2.0 * step);
    J(0, c) = d.real();
    J(1, c) = d.imag();
  }
  return J;
}

ComplexVec awgn_apply(std::span<const cd> x, const AwgnConfig& cfg, Rng& rng) {
  const ChannelConfig ch = cfg;
  return apply_channel(ch, x, draw_noise(ch, x.size(), rng), Constellation{});
}

ComplexVec nlpn_apply(std::span<const cd> x, const NlpnConfig& cfg, Rng& rng) {
  const ChannelConfig ch = cfg;
  return apply_channel(ch, x, draw_noise(ch, x.size(), rng), Constellation{});
}

std::vector<double> wiener_phase(std::size_t len, const PhaseNoiseBpsConfig& cfg, Rng& rng) {
  if (len < 1) throw InputError("wiener_phase needs len >= 1");
  std::vector<double> phi(len, 0.0);
  const double var = cfg.increment_variance();
  if (var <= 0.0) return phi;
  std::normal_distribution<double> dist(0.0, std::sqrt(var));
  for (std::size_t k = 1; k < len; ++k) phi[k] = phi[k - 1] + dist(rng);
  return phi;
}

Eigen::MatrixXd bps_distances(std::span<const cd> z, const Constellation& reference,
                              const PhaseNoiseBpsConfig& cfg) {
  cfg.validate();
  if (reference.empty()) throw InputError("BPS reference constellation is empty");
  const auto K = static_cast<Eigen::Index>(z.size());
  const int Ns = cfg.num_test_phases;
  const auto M = reference.size();

  // |z e^{-i theta} - c|^2 == |z - c e^{i theta}|^2, so rotate the alphabet once.
  std::vector<ComplexVec> rotated(static_cast<std::size_t>(Ns), ComplexVec(M));
  for (int i = 0; i < Ns; ++i) {
    const cd rot = std::polar(1.0, 2.0 * std::numbers::pi * i / Ns);
    for (std::size_t m = 0; m < M; ++m) rotated[i][m] = reference[m] * rot;
  }

  // Prefix sums of per-symbol decision distances, one column per test phase.
  Eigen::MatrixXd prefix = Eigen::MatrixXd::Zero(K + 1, Ns);
  for (int i = 0; i < Ns; ++i) {
    const ComplexVec& alphabet = rotated[i];
    for (Eigen::Index k = 0; k < K; ++k) {
      double best = std::norm(z[k] - alphabet[0]);
      for (std::size_t m = 1; m < M; ++m) best = std::min(best, std::norm(z[k] - alphabet[m]));
      prefix(k + 1, i) = prefix(k, i) + best;
    }
  }

  const Eigen::Index before = (cfg.window_size - 1) / 2;
  const Eigen::Index after = cfg.window_size - 1 - before;
  Eigen::MatrixXd d(K, Ns);
  for (Eigen::Index k = 0; k < K; ++k) {
    const Eigen::Index lo = std::max<Eigen::Index>(0, k - before);
    const Eigen::Index hi = std::min<Eigen::Index>(K - 1, k + after);
    d.row(k) = prefix.row(hi + 1) - prefix.row(lo);
  }
  return d;
}

BpsResult bps_recover(std::span<const cd> z, const Constellation& reference,
                      const PhaseNoiseBpsConfig& cfg) {
  const Eigen::MatrixXd d = bps_distances(z, reference, cfg);
  BpsResult out;
  out.recovered.resize(z.size());
  out.phase_estimates.resize(z.size());
  out.phase_indices.resize(z.size());
  for (std::size_t k = 0; k < z.size(); ++k) {
    const auto row = static_cast<Eigen::Index>(k);
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < d.cols(); ++i) {
      const double tol = kBpsTieTolerance * d(row, best);
      if (d(row, i) < d(row, best) - tol) {
        best = i;
      } else if (d(row, i) <= d(row, best) + tol &&
                 std::abs(wrapped_test_phase(i, cfg.num_test_phases)) <
                     std::abs(wrapped_test_phase(best, cfg.num_test_phases))) {
        best = i;
      }
    }
    const double phi = 2.0 * std::numbers::pi * static_cast<double>(best) / cfg.num_test_phases;
    out.phase_indices[k] = static_cast<int>(best);
    out.phase_estimates[k] = phi;
    out.recovered[k] = z[k] * std::polar(1.0, -phi);
  }
  return out;
}

ComplexVec phase_noise_channel_apply(std::span<const cd> x, const PhaseNoiseBpsConfig& cfg,
                                     const Constellation& reference, Rng& rng) {
  const ChannelConfig ch = cfg;
  return apply_channel(ch, x, draw_noise(ch, x.size(), rng), reference);
}

}  // namespace gcs

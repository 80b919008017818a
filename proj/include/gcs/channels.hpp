#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "gcs/constellation.hpp"
#include "gcs/rng.hpp"
#include "gcs/types.hpp"

namespace gcs {

/// Planck constant [J s].
inline constexpr double kPlanck = 6.62607015e-34;

/// snr_db value that disables additive noise.
inline constexpr double kNoiseOff = std::numeric_limits<double>::infinity();

double db_to_linear(double db);
/// dBm -> W.
double dbm_to_watt(double dbm);

struct AwgnConfig {
  double snr_db = 10.0;

  /// Total complex noise variance 1/SNR (half per quadrature).
  double noise_variance() const;
};

/// Dispersion-free multi-span fiber with lumped amplification.
struct NlpnConfig {
  double launch_power_dbm = 0.0;
  double gamma = 1.27;            // 1/(W km)
  double alpha_db_per_km = 0.2;
  double span_length_km = 100.0;
  int num_spans = 10;
  double noise_figure_db = 5.0;
  double carrier_freq_hz = 193.41e12;
  double symbol_rate_baud = 32e9;
  bool ase_noise = true;

  double launch_power_w() const;
  /// Attenuation in nepers/km.
  double alpha_per_km() const;
  double effective_length_km() const;
  /// Gain exactly compensating one span's loss.
  double amplifier_gain() const;
  /// Total complex ASE variance added per span [W]; zero when ase_noise is off.
  double ase_variance() const;
  /// Phase rotation per span for |z|^2 = 1 W.
  double nonlinear_coefficient() const { return gamma * effective_length_km(); }
};

/// Wiener phase noise, AWGN and blind phase search recovery.
struct PhaseNoiseBpsConfig {
  double snr_db = 15.0;
  double linewidth_hz = 100e3;
  double symbol_rate_baud = 32e9;
  int num_test_phases = 36;
  int window_size = 64;

  double noise_variance() const;
  /// Variance of one Wiener increment, 2 pi dnu T_s.
  double increment_variance() const;
  void validate() const;
};

using ChannelConfig = std::variant<AwgnConfig, NlpnConfig, PhaseNoiseBpsConfig>;

/// "awgn", "nlpn" or "phase_noise_bps".
std::string channel_kind(const ChannelConfig& channel);
/// AWGN and NLPN; the BPS channel contains argmin decisions.
bool is_differentiable(const ChannelConfig& channel);

/// Frozen noise for one pass of a sequence through a channel. Applying the same
/// realization to different inputs lets callers compare inputs under identical
/// impairments.
struct ChannelNoise {
  std::size_t length = 0;
  /// AWGN / phase-noise channel: one sample per symbol.
  /// NLPN: span-major, num_spans * length samples.
  ComplexVec additive;
  /// Phase-noise channel only: Wiener phase per symbol.
  std::vector<double> phase;
};

ChannelNoise draw_noise(const ChannelConfig& channel, std::size_t length, Rng& rng);

/// Pushes x through the channel under a fixed noise realization. `reference` is
/// the decision alphabet used by BPS and is ignored by the other channels.
ComplexVec apply_channel(const ChannelConfig& channel, std::span<const cd> x,
                         const ChannelNoise& noise, const Constellation& reference);

/// Single-symbol map of a memoryless channel (AWGN, NLPN) at position k of the
/// noise realization. Throws UnsupportedChannel for the BPS channel.
cd apply_memoryless(const ChannelConfig& channel, cd x, const ChannelNoise& noise,
                    std::size_t k);

/// 2x2 real Jacobian d(Re y, Im y)/d(Re x, Im x) by central differences with
/// the noise held fixed.
Eigen::Matrix2d channel_jacobian(const ChannelConfig& channel, cd x, const ChannelNoise& noise,
                                 std::size_t k, double step = 1e-6);

ComplexVec awgn_apply(std::span<const cd> x, const AwgnConfig& cfg, Rng& rng);

ComplexVec nlpn_apply(std::span<const cd> x, const NlpnConfig& cfg, Rng& rng);

/// Wiener phase: phi_0 = 0, phi_k = phi_{k-1} + N(0, sigma_phi^2).
std::vector<double> wiener_phase(std::size_t len, const PhaseNoiseBpsConfig& cfg, Rng& rng);

struct BpsResult {
  ComplexVec recovered;
  std::vector<double> phase_estimates;
  std::vector<int> phase_indices;
};

/// Windowed decision distances d_{k,i}: rows are symbols, columns test phases
/// theta_i = 2 pi i / N_s. The window of W symbols is centered on k and
/// truncated at the sequence edges.
Eigen::MatrixXd bps_distances(std::span<const cd> z, const Constellation& reference,
                              const PhaseNoiseBpsConfig& cfg);

/// Blind phase search. Near-equal windowed distances count as ties and go to
/// the test phase closest to zero (then the lowest index); no unwrapping.
BpsResult bps_recover(std::span<const cd> z, const Constellation& reference,
                      const PhaseNoiseBpsConfig& cfg);

ComplexVec phase_noise_channel_apply(std::span<const cd> x, const PhaseNoiseBpsConfig& cfg,
                                     const Constellation& reference, Rng& rng);

}  // namespace gcs

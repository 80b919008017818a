#include <cmath>
#include <numbers>

#include "doctest.h"
#include "gcs/channels.hpp"
#include "gcs/errors.hpp"

using namespace gcs;
using std::numbers::pi;

namespace {

Constellation random_constellation(int M, std::uint64_t seed) {
  Rng rng = make_stream(seed, "points");
  std::normal_distribution<double> n(0.0, 1.0);
  ComplexVec pts(static_cast<std::size_t>(M));
  for (auto& p : pts) p = {n(rng), n(rng)};
  return Constellation::normalized(pts);
}

ComplexVec random_symbols(const Constellation& c, int K, std::uint64_t seed) {
  Rng rng = make_stream(seed, "symbols");
  std::uniform_int_distribution<int> d(0, static_cast<int>(c.size()) - 1);
  std::vector<int> idx(static_cast<std::size_t>(K));
  for (int& i : idx) i = d(rng);
  return c.map(idx);
}

double wrap(double a, double period) {
  return a - period * std::round(a / period);
}

}  // namespace

TEST_CASE("awgn") {
  const Constellation c = square_qam(16);
  const ComplexVec x = random_symbols(c, 1000, 1);
  Rng rng = make_stream(1, "awgn");
  CHECK(awgn_apply(x, AwgnConfig{kNoiseOff}, rng) == x);
  CHECK(AwgnConfig{10.0}.noise_variance() == doctest::Approx(0.1).epsilon(1e-15));

  const ComplexVec zeros(1000000, cd{0, 0});
  const ComplexVec y = awgn_apply(zeros, AwgnConfig{10.0}, rng);
  double p = 0.0, re = 0.0;
  for (const cd& v : y) {
    p += std::norm(v);
    re += v.real() * v.real();
  }
  CHECK(p / y.size() == doctest::Approx(0.1).epsilon(0.01));
  CHECK(re / y.size() == doctest::Approx(0.05).epsilon(0.01));
}

TEST_CASE("noise-free draws leave the stream untouched") {
  Rng a = make_stream(4, "n"), b = make_stream(4, "n");
  const ChannelNoise off = draw_noise(AwgnConfig{kNoiseOff}, 100, a);
  CHECK(off.additive.size() == 100);
  CHECK(a() == b());
}

TEST_CASE("nlpn constants") {
  NlpnConfig f;
  CHECK(f.alpha_per_km() == doctest::Approx(0.046052).epsilon(1e-5));
  CHECK(f.effective_length_km() == doctest::Approx(0.99 / (0.02 * std::log(10.0))).epsilon(1e-12));
  CHECK(f.amplifier_gain() == doctest::Approx(1e2).epsilon(1e-12));
  const double nf = std::pow(10.0, 0.5);
  CHECK(f.ase_variance() ==
        doctest::Approx(6.62607015e-34 * 193.41e12 * 32e9 * (100.0 * nf - 1.0) / 2.0).epsilon(1e-12));
  CHECK(f.launch_power_w() == doctest::Approx(1e-3).epsilon(1e-15));
  f.ase_noise = false;
  CHECK(f.ase_variance() == 0.0);
}

TEST_CASE("nlpn noiseless behaviour") {
  const Constellation c = random_constellation(16, 3);
  const ComplexVec x = random_symbols(c, 200, 3);
  Rng rng = make_stream(3, "nlpn");

  NlpnConfig linear;
  linear.gamma = 0.0;
  linear.ase_noise = false;
  const ComplexVec y = nlpn_apply(x, linear, rng);
  for (std::size_t k = 0; k < x.size(); ++k) CHECK(std::abs(y[k] - x[k]) < 1e-15);

  NlpnConfig one;
  one.num_spans = 1;
  one.ase_noise = false;
  const ComplexVec unit{cd{1.0, 0.0}, cd{0.0, -1.0}};
  const ComplexVec r = nlpn_apply(unit, one, rng);
  const double shift = one.gamma * one.effective_length_km() * 1e-3;
  for (std::size_t k = 0; k < unit.size(); ++k) {
    CHECK(std::abs(r[k]) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(std::arg(r[k] / unit[k]) == doctest::Approx(shift).epsilon(1e-12));
  }

  // Ten spans without noise: amplitude kept, phase grows with |x|^2.
  NlpnConfig ten;
  ten.ase_noise = false;
  const ComplexVec z = nlpn_apply(x, ten, rng);
  for (std::size_t k = 0; k < x.size(); ++k) {
    CHECK(std::abs(z[k]) == doctest::Approx(std::abs(x[k])).epsilon(1e-13));
    const double expect = 10.0 * ten.gamma * ten.effective_length_km() * 1e-3 * std::norm(x[k]);
    CHECK(std::abs(wrap(std::arg(z[k] / x[k]) - expect, 2 * pi)) < 1e-10);
  }
}

TEST_CASE("nlpn noise statistics and errors") {
  NlpnConfig f;
  f.gamma = 0.0;
  const ComplexVec x(200000, cd{1.0, 0.0});
  Rng rng = make_stream(5, "nlpn");
  const ComplexVec y = nlpn_apply(x, f, rng);
  // Residual power after renormalization: N_sp P_n / (P_in + N_sp P_n).
  const double pn = f.num_spans * f.ase_variance();
  const double scale = std::sqrt(f.launch_power_w() / (f.launch_power_w() + pn));
  double err = 0.0, power = 0.0;
  for (const cd& v : y) {
    err += std::norm(v - scale);
    power += std::norm(v);
  }
  CHECK(err / y.size() == doctest::Approx(pn / (f.launch_power_w() + pn)).epsilon(0.02));
  CHECK(power / y.size() == doctest::Approx(1.0).epsilon(1e-3));

  NlpnConfig bad;
  bad.launch_power_dbm = -INFINITY;
  CHECK_THROWS_AS(nlpn_apply(x, bad, rng), InputError);
  bad.launch_power_dbm = NAN;
  CHECK_THROWS_AS(nlpn_apply(x, bad, rng), InputError);
}

TEST_CASE("channel jacobian") {
  const ChannelConfig ch = AwgnConfig{10.0};
  Rng rng = make_stream(6, "jac");
  const ChannelNoise noise = draw_noise(ch, 4, rng);
  const Eigen::Matrix2d J = channel_jacobian(ch, cd(0.3, -0.7), noise, 2);
  CHECK((J - Eigen::Matrix2d::Identity()).cwiseAbs().maxCoeff() < 1e-9);

  // NLPN, noise off, one span: y = x exp(i c |x|^2), closed-form Jacobian.
  NlpnConfig f;
  f.num_spans = 1;
  f.ase_noise = false;
  f.launch_power_dbm = 10.0;
  const ChannelConfig fc = f;
  const ChannelNoise none = draw_noise(fc, 1, rng);
  const double c = f.nonlinear_coefficient() * f.launch_power_w();
  const cd x(0.8, 0.4);
  const double a = x.real(), b = x.imag(), ph = c * std::norm(x);
  auto y = [&](double re, double im) { return cd(re, im) * std::polar(1.0, c * (re * re + im * im)); };
  const cd dre = cd(std::cos(ph), std::sin(ph)) + y(a, b) * cd(0, 2 * c * a);
  const cd dim = cd(-std::sin(ph), std::cos(ph)) + y(a, b) * cd(0, 2 * c * b);
  const Eigen::Matrix2d Jn = channel_jacobian(fc, x, none, 0);
  CHECK(Jn(0, 0) == doctest::Approx(dre.real()).epsilon(1e-8));
  CHECK(Jn(1, 0) == doctest::Approx(dre.imag()).epsilon(1e-8));
  CHECK(Jn(0, 1) == doctest::Approx(dim.real()).epsilon(1e-8));
  CHECK(Jn(1, 1) == doctest::Approx(dim.imag()).epsilon(1e-8));

  CHECK_FALSE(is_differentiable(PhaseNoiseBpsConfig{}));
  CHECK(is_differentiable(NlpnConfig{}));
  ChannelNoise pn_noise;
  pn_noise.length = 1;
  CHECK_THROWS_AS(apply_memoryless(PhaseNoiseBpsConfig{}, cd(1, 0), pn_noise, 0), UnsupportedChannel);
}

TEST_CASE("wiener phase") {
  PhaseNoiseBpsConfig cfg;
  CHECK(cfg.increment_variance() == doctest::Approx(1.9635e-5).epsilon(1e-4));
  Rng rng = make_stream(7, "wiener");
  PhaseNoiseBpsConfig still = cfg;
  still.linewidth_hz = 0.0;
  for (double v : wiener_phase(1000, still, rng)) CHECK(v == 0.0);

  const std::vector<double> phi = wiener_phase(1000001, cfg, rng);
  CHECK(phi[0] == 0.0);
  double s = 0.0;
  for (std::size_t k = 1; k < phi.size(); ++k) s += (phi[k] - phi[k - 1]) * (phi[k] - phi[k - 1]);
  CHECK(s / 1e6 == doctest::Approx(cfg.increment_variance()).epsilon(0.01));
  CHECK_THROWS_AS(wiener_phase(0, cfg, rng), InputError);
}

TEST_CASE("bps config validation") {
  PhaseNoiseBpsConfig cfg;
  cfg.num_test_phases = 1;
  CHECK_THROWS_AS(cfg.validate(), InputError);
  cfg.num_test_phases = 36;
  cfg.window_size = 0;
  CHECK_THROWS_AS(cfg.validate(), InputError);
  const ComplexVec z{cd(1, 0)};
  CHECK_THROWS_AS(bps_recover(z, Constellation{}, PhaseNoiseBpsConfig{}), InputError);
}

TEST_CASE("bps on clean input") {
  const Constellation qam = square_qam(16);
  const ComplexVec x = random_symbols(qam, 500, 8);
  const BpsResult r = bps_recover(x, qam, PhaseNoiseBpsConfig{});
  CHECK(r.recovered == x);
  for (int i : r.phase_indices) CHECK(i == 0);

  PhaseNoiseBpsConfig quiet;
  quiet.snr_db = kNoiseOff;
  quiet.linewidth_hz = 0.0;
  Rng rng = make_stream(8, "bps");
  CHECK(phase_noise_channel_apply(x, quiet, qam, rng) == x);
}

TEST_CASE("bps recovers a constant test-phase offset") {
  const Constellation c = random_constellation(16, 9);
  const ComplexVec x = random_symbols(c, 1000, 9);
  PhaseNoiseBpsConfig cfg;
  const cd rot = std::polar(1.0, 2 * pi * 5 / 36);
  ComplexVec z(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) z[k] = x[k] * rot;
  const BpsResult r = bps_recover(z, c, cfg);
  for (std::size_t k = 0; k < x.size(); ++k) {
    CHECK(r.phase_indices[k] == 5);
    CHECK(std::abs(r.recovered[k] - x[k]) < 1e-14);
  }
}

TEST_CASE("bps distances shift circularly under test-phase rotation") {
  const Constellation c = random_constellation(16, 10);
  PhaseNoiseBpsConfig cfg;
  cfg.window_size = 7;
  ComplexVec z = random_symbols(c, 300, 10);
  Rng rng = make_stream(10, "perturb");
  std::normal_distribution<double> n(0.0, 0.1);
  for (auto& v : z) v += cd(n(rng), n(rng));
  const Eigen::MatrixXd d = bps_distances(z, c, cfg);
  for (int m : {1, 5, 17, 35}) {
    ComplexVec zr(z.size());
    for (std::size_t k = 0; k < z.size(); ++k) zr[k] = z[k] * std::polar(1.0, 2 * pi * m / 36);
    const Eigen::MatrixXd dr = bps_distances(zr, c, cfg);
    double worst = 0.0;
    for (Eigen::Index k = 0; k < d.rows(); ++k)
      for (int i = 0; i < 36; ++i)
        worst = std::max(worst, std::abs(dr(k, i) - d(k, (i - m + 36) % 36)) / d(k, (i - m + 36) % 36));
    CHECK(worst < 1e-12);
  }
}

TEST_CASE("bps window is centred and truncated at the edges") {
  const Constellation c = square_qam(4);
  PhaseNoiseBpsConfig cfg;
  cfg.num_test_phases = 4;
  cfg.window_size = 3;
  ComplexVec z(5, c[0]);
  z[2] = c[0] * cd(1.1, 0.0);  // distance 0.01 |c0|^2 at theta_0 only from symbol 2
  const Eigen::MatrixXd d = bps_distances(z, c, cfg);
  const double e = 0.01 * std::norm(c[0]);
  CHECK(d(0, 0) == doctest::Approx(0.0));
  CHECK(d(1, 0) == doctest::Approx(e));
  CHECK(d(2, 0) == doctest::Approx(e));
  CHECK(d(3, 0) == doctest::Approx(e));
  CHECK(d(4, 0) == doctest::Approx(0.0));
}

TEST_CASE("bps reduces the phase error of QAM-64") {
  const Constellation qam = square_qam(64);
  const ComplexVec x = random_symbols(qam, 100000, 11);
  PhaseNoiseBpsConfig cfg;
  cfg.snr_db = 18.0;
  Rng rng = make_stream(11, "pn");
  const ChannelNoise noise = draw_noise(cfg, x.size(), rng);
  ComplexVec z(x.size());
  for (std::size_t k = 0; k < x.size(); ++k)
    z[k] = x[k] * std::polar(1.0, noise.phase[k]) + noise.additive[k];
  const BpsResult r = bps_recover(z, qam, cfg);
  double raw = 0.0, res = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    raw += noise.phase[k] * noise.phase[k];
    const double e = wrap(noise.phase[k] - r.phase_estimates[k], pi / 2);
    res += e * e;
  }
  CHECK(std::sqrt(res / x.size()) < std::sqrt(raw / x.size()));
  CHECK(std::sqrt(res / x.size()) < 0.1);

  Rng a = make_stream(12, "pn"), b = make_stream(12, "pn");
  const ComplexVec small(x.begin(), x.begin() + 2000);
  CHECK(phase_noise_channel_apply(small, cfg, qam, a) == phase_noise_channel_apply(small, cfg, qam, b));
}

TEST_CASE("noise realization must match the input") {
  const ChannelConfig ch = AwgnConfig{10.0};
  Rng rng = make_stream(1, "len");
  const ChannelNoise noise = draw_noise(ch, 3, rng);
  const ComplexVec x(4, cd(1, 0));
  CHECK_THROWS_AS(apply_channel(ch, x, noise, Constellation{}), InputError);
  CHECK(channel_kind(ch) == "awgn");
  CHECK(channel_kind(NlpnConfig{}) == "nlpn");
  CHECK(channel_kind(PhaseNoiseBpsConfig{}) == "phase_noise_bps");
}

#include <cmath>
#include <numeric>

#include "doctest.h"
#include "gcs/errors.hpp"
#include "gcs/nn.hpp"
#include "oracles.hpp"

using namespace gcs;

namespace {

Eigen::VectorXd one_hot(int M, int k) {
  Eigen::VectorXd u = Eigen::VectorXd::Zero(M);
  u[k] = 1.0;
  return u;
}

WeightVector random_weights(int M, std::uint64_t seed) {
  Rng rng = make_stream(seed, "test");
  return initial_weights(NetLayout::for_alphabet(M), rng);
}

}  // namespace

TEST_CASE("layout sizes follow the architecture") {
  const NetLayout l = NetLayout::for_alphabet(64);
  CHECK(l.hidden() == 32);
  CHECK(l.encoder_size() == 128);
  CHECK(l.decoder_size() == 2 * 32 + 32 + 32 * 64 + 64);
  CHECK(l.size() == 2336);
  CHECK_THROWS_AS(NetLayout::for_alphabet(12), InputError);
  CHECK_THROWS_AS(NetLayout::for_alphabet(1), InputError);
}

TEST_CASE("glorot_init bounds, variance and determinism") {
  Rng a = make_stream(3, "g");
  const Eigen::MatrixXd one = glorot_init(1, 1, a);
  CHECK(std::abs(one(0, 0)) <= std::sqrt(3.0));

  Rng rng = make_stream(5, "g");
  double sum = 0.0, sq = 0.0;
  long n = 0;
  while (n < 100000) {
    const Eigen::MatrixXd m = glorot_init(2, 32, rng);
    sum += m.sum();
    sq += m.squaredNorm();
    n += m.size();
  }
  const double mean = sum / n;
  const double var = sq / n - mean * mean;
  CHECK(var == doctest::Approx(2.0 / 34.0).epsilon(0.05));

  Rng r1 = make_stream(9, "g"), r2 = make_stream(9, "g");
  CHECK(glorot_init(4, 8, r1) == glorot_init(4, 8, r2));
  CHECK_THROWS_AS(glorot_init(0, 3, r1), InputError);
}

TEST_CASE("initial_weights zeroes the biases") {
  const WeightVector w = random_weights(16, 1);
  const DecoderNet d = decoder_of(w);
  CHECK(d.hidden_bias.isZero(0.0));
  CHECK(d.out_bias.isZero(0.0));
  CHECK(encoder_of(w).weights.norm() > 0.0);
}

TEST_CASE("encoder_forward selects the hot row") {
  EncoderNet enc{Eigen::MatrixXd::Zero(4, 2)};
  enc.weights.row(3) << 0.5, -0.5;
  CHECK(encoder_forward(enc, one_hot(4, 3)) == cd(0.5, -0.5));
  CHECK(encoder_forward(enc, one_hot(4, 1)) == cd(0.0, 0.0));

  EncoderNet toy{Eigen::MatrixXd(2, 2)};
  toy.weights << 1, 0, -1, 0;
  CHECK(encoder_forward(toy, one_hot(2, 1)) == cd(-1.0, 0.0));

  Eigen::VectorXd two_hot = one_hot(4, 0);
  two_hot[2] = 1.0;
  CHECK_THROWS_AS(encoder_forward(enc, two_hot), InputError);
  CHECK_THROWS_AS(encoder_forward(enc, Eigen::VectorXd::Zero(4)), InputError);
  Eigen::VectorXd scaled = one_hot(4, 1) * 2.0;
  CHECK_THROWS_AS(encoder_forward(enc, scaled), InputError);
  CHECK_THROWS_AS(encoder_forward(enc, one_hot(5, 1)), InputError);
}

TEST_CASE("constellation_of normalizes over the whole alphabet") {
  Eigen::MatrixXd rows(4, 2);
  rows << 2, 0, -2, 0, 0, 2, 0, -2;
  const Constellation c = constellation_of(EncoderNet{rows});
  CHECK(c[0] == cd(1, 0));
  CHECK(c[1] == cd(-1, 0));
  CHECK(c[2] == cd(0, 1));
  CHECK(c[3] == cd(0, -1));

  Eigen::MatrixXd ones(3, 2);
  ones << 1, 0, 1, 0, 1, 0;
  const Constellation flat = constellation_of(EncoderNet{ones});
  for (const cd& p : flat.points()) CHECK(p == cd(1, 0));

  const WeightVector w = random_weights(16, 11);
  const EncoderNet enc = encoder_of(w);
  const Constellation c16 = constellation_of(enc);
  CHECK(std::abs(c16.mean_power() - 1.0) < 1e-12);

  EncoderNet scaled{enc.weights * 7.25};
  const Constellation c16s = constellation_of(scaled);
  for (std::size_t i = 0; i < 16; ++i) CHECK(std::abs(c16s[i] - c16[i]) < 1e-14);

  CHECK_THROWS_AS(constellation_of(EncoderNet{Eigen::MatrixXd::Zero(4, 2)}), DegenerateConstellation);
}

TEST_CASE("decoder_forward examples") {
  DecoderNet zero;
  zero.hidden_weights = Eigen::MatrixXd::Zero(2, 32);
  zero.hidden_bias = Eigen::VectorXd::Zero(32);
  zero.out_weights = Eigen::MatrixXd::Zero(32, 64);
  zero.out_bias = Eigen::VectorXd::Zero(64);
  const Eigen::VectorXd row = decoder_forward(zero, cd(0.3, -2.0));
  for (Eigen::Index i = 0; i < 64; ++i) CHECK(row[i] == doctest::Approx(1.0 / 64).epsilon(1e-12));

  DecoderNet biased = zero;
  biased.out_bias[0] = 10.0;
  const Eigen::VectorXd b = decoder_forward(biased, cd(1.0, 1.0));
  CHECK(b[0] == doctest::Approx(std::exp(10.0) / (std::exp(10.0) + 63.0)));
  CHECK(b.maxCoeff() == b[0]);

  CHECK(leaky_relu(-1.0, 0.01) == doctest::Approx(-0.01));
  CHECK(leaky_relu(2.5, 0.01) == 2.5);

  // Hidden pre-activation -1 on the only path to the output.
  DecoderNet probe;
  probe.hidden_weights = Eigen::MatrixXd::Zero(2, 1);
  probe.hidden_bias = Eigen::VectorXd::Constant(1, -1.0);
  probe.out_weights = Eigen::MatrixXd::Zero(1, 2);
  probe.out_weights(0, 0) = 1.0;
  probe.out_bias = Eigen::VectorXd::Zero(2);
  const Eigen::VectorXd p = decoder_forward(probe, cd(0, 0));
  CHECK(std::log(p[0] / p[1]) == doctest::Approx(-0.01).epsilon(1e-12));

  CHECK_THROWS_AS(decoder_forward(zero, cd(std::nan(""), 0.0)), InputError);
  CHECK_THROWS_AS(decoder_forward(zero, cd(0.0, INFINITY)), InputError);
}

TEST_CASE("softmax rows are positive and sum to one") {
  Rng rng = make_stream(2, "softmax");
  std::normal_distribution<double> dist(0.0, 30.0);
  for (int t = 0; t < 200; ++t) {
    Eigen::VectorXd logits(16);
    for (auto& v : logits) v = dist(rng);
    const Eigen::VectorXd s = softmax(logits);
    CHECK(std::abs(s.sum() - 1.0) < 1e-9);
    CHECK(s.minCoeff() >= 0.0);
  }
  Eigen::VectorXd huge(3);
  huge << 1000.0, 999.0, -1000.0;
  const Eigen::VectorXd s = softmax(huge);
  CHECK(s.allFinite());
  CHECK(s[0] == doctest::Approx(1.0 / (1.0 + std::exp(-1.0))));
}

TEST_CASE("flatten and unflatten are exact inverses") {
  for (int M : {2, 4, 16, 64}) {
    const WeightVector w = random_weights(M, 100 + M);
    const WeightVector back = flatten(encoder_of(w), decoder_of(w));
    CHECK(back == w);
  }
  EncoderNet enc{Eigen::MatrixXd::Zero(4, 2)};
  DecoderNet dec = decoder_of(random_weights(8, 1));
  CHECK_THROWS_AS(flatten(enc, dec), InputError);
}

TEST_CASE("flat layout: encoder first, neuron by neuron") {
  const NetLayout l = NetLayout::for_alphabet(4);
  Eigen::VectorXd v(l.size());
  std::iota(v.begin(), v.end(), 0.0);
  const WeightVector w(l, v);
  const EncoderNet enc = encoder_of(w);
  CHECK(enc.weights(0, 0) == 0.0);
  CHECK(enc.weights(3, 0) == 3.0);
  CHECK(enc.weights(0, 1) == 4.0);
  const DecoderNet d = decoder_of(w);
  CHECK(d.hidden_weights(0, 0) == 8.0);
  CHECK(d.hidden_weights(1, 0) == 9.0);
  CHECK(d.hidden_weights(0, 1) == 10.0);
  CHECK(d.hidden_bias[0] == 12.0);
  CHECK(d.out_weights(0, 0) == 14.0);
  CHECK(d.out_weights(1, 0) == 15.0);
  CHECK(d.out_bias[3] == static_cast<double>(l.size() - 1));
}

TEST_CASE("ae_forward on clean channels") {
  const ChannelConfig clean = AwgnConfig{kNoiseOff};
  const NetLayout l = NetLayout::for_alphabet(8);
  WeightVector zero_dec = random_weights(8, 4);
  zero_dec.values().tail(l.decoder_size()).setZero();
  Rng rng = make_stream(1, "ae");
  const std::vector<int> idx{0, 1, 2, 3, 4, 5, 6, 7};
  const AeOutput out = ae_forward(zero_dec, idx, AwgnConfig{0.0}, rng);
  CHECK(out.posteriors.rows() == 8);
  CHECK((out.posteriors.array() - 1.0 / 8).abs().maxCoeff() < 1e-15);

  // The sent symbols are the normalized constellation.
  const Constellation c = constellation_of(encoder_of(zero_dec));
  const AeOutput clean_out = ae_forward(zero_dec, idx, clean, rng);
  for (int k = 0; k < 8; ++k) CHECK(clean_out.received[k] == c[k]);

  Rng a = make_stream(7, "ae"), b = make_stream(7, "ae");
  const WeightVector w = random_weights(8, 9);
  CHECK(ae_forward(w, idx, AwgnConfig{5.0}, a).posteriors ==
        ae_forward(w, idx, AwgnConfig{5.0}, b).posteriors);

  Eigen::MatrixXd U = Eigen::MatrixXd::Zero(3, 8);
  U(0, 2) = U(1, 5) = U(2, 2) = 1.0;
  Rng c1 = make_stream(8, "ae"), c2 = make_stream(8, "ae");
  const std::vector<int> same{2, 5, 2};
  CHECK(ae_forward(w, U, AwgnConfig{5.0}, c1).posteriors ==
        ae_forward(w, same, AwgnConfig{5.0}, c2).posteriors);
  CHECK_THROWS_AS(ae_forward(w, Eigen::MatrixXd::Zero(3, 4), clean, c1), InputError);
  const std::vector<int> bad{0, 8};
  CHECK_THROWS_AS(ae_forward(w, bad, clean, c1), InputError);
}

TEST_CASE("cross_entropy clips at the probability floor") {
  Eigen::MatrixXd p(2, 2);
  p << 1.0, 0.0, 0.5, 0.5;
  const std::vector<int> t{1, 0};
  CHECK(cross_entropy(p, t) == doctest::Approx((-std::log(1e-12) + std::log(2.0)) / 2.0));
}

TEST_CASE("backprop gradient matches central differences") {
  const WeightVector w = random_weights(4, 21);
  const ChannelConfig ch = AwgnConfig{8.0};
  Rng rng = make_stream(21, "grad");
  std::vector<int> targets;
  for (int k = 0; k < 64; ++k) targets.push_back(k % 4);
  const ChannelNoise noise = draw_noise(ch, targets.size(), rng);

  const LossGradient g = loss_gradient(w, targets, ch, noise);
  const Eigen::VectorXd fd = oracle::central_gradient(
      [&](const Eigen::VectorXd& v) { return batch_loss(WeightVector(w.layout(), v), targets, ch, noise); },
      w.values(), 1e-5);
  CHECK(g.loss == doctest::Approx(batch_loss(w, targets, ch, noise)).epsilon(1e-14));
  const double scale = fd.cwiseAbs().maxCoeff();
  const double rel = ((g.gradient - fd).cwiseAbs().array() /
                      (g.gradient.cwiseAbs().cwiseMax(fd.cwiseAbs()).array().max(1e-3 * scale)))
                         .maxCoeff();
  CHECK(rel < 1e-5);
}

TEST_CASE("backprop gradient through the fiber channel") {
  const WeightVector w = random_weights(4, 22);
  NlpnConfig fiber;
  fiber.launch_power_dbm = 2.0;
  const ChannelConfig ch = fiber;
  Rng rng = make_stream(22, "grad");
  const std::vector<int> targets{0, 1, 2, 3, 3, 2, 1, 0};
  const ChannelNoise noise = draw_noise(ch, targets.size(), rng);
  const LossGradient g = loss_gradient(w, targets, ch, noise);
  const Eigen::VectorXd fd = oracle::central_gradient(
      [&](const Eigen::VectorXd& v) { return batch_loss(WeightVector(w.layout(), v), targets, ch, noise); },
      w.values(), 1e-5);
  CHECK((g.gradient - fd).cwiseAbs().maxCoeff() < 1e-6 * std::max(1.0, fd.cwiseAbs().maxCoeff()));
}

TEST_CASE("adam step") {
  const WeightVector w = random_weights(4, 3);
  const std::vector<int> targets{0, 1, 2, 3};
  Rng rng = make_stream(3, "adam");
  AdamState state;
  AdamSettings frozen;
  frozen.learning_rate = 0.0;
  CHECK(backprop_adam_step(w, targets, AwgnConfig{10.0}, frozen, state, rng) == w);

  AdamState s2;
  CHECK_THROWS_AS(backprop_adam_step(w, targets, PhaseNoiseBpsConfig{}, {}, s2, rng),
                  UnsupportedChannel);
}

TEST_CASE("500 Adam steps separate a clean 4-point problem") {
  WeightVector w = random_weights(4, 5);
  Rng rng = make_stream(5, "adam");
  AdamState state;
  AdamSettings s;
  s.learning_rate = 3e-2;
  std::vector<int> targets;
  for (int k = 0; k < 128; ++k) targets.push_back(k % 4);
  double loss = 0.0;
  for (int j = 0; j < 500; ++j)
    w = backprop_adam_step(w, targets, AwgnConfig{kNoiseOff}, s, state, rng, &loss);
  CHECK(loss < 0.01);
}

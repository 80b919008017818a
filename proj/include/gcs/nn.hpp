#pragma once

#include <cstdint>
#include <span>

#include <Eigen/Dense>

#include "gcs/channels.hpp"
#include "gcs/constellation.hpp"
#include "gcs/rng.hpp"
#include "gcs/types.hpp"

namespace gcs {

inline constexpr double kDefaultLeakySlope = 0.01;
/// Probabilities are clipped here before taking logs.
inline constexpr double kProbabilityFloor = 1e-12;

/// Offsets of each parameter block inside the flat weight vector.
///
/// Order: encoder weights (M x 2), decoder hidden weights (2 x M/2), hidden
/// bias (M/2), output weights (M/2 x M), output bias (M). Matrices are stored
/// column-major, so each neuron's incoming weights are contiguous and neurons
/// follow one another within a layer.
struct NetLayout {
  int M = 0;

  /// M must be a power of two, at least 2.
  static NetLayout for_alphabet(int M);

  int hidden() const { return M / 2; }
  Eigen::Index encoder_offset() const { return 0; }
  Eigen::Index encoder_size() const { return 2 * M; }
  Eigen::Index hidden_weights_offset() const { return encoder_size(); }
  Eigen::Index hidden_bias_offset() const { return hidden_weights_offset() + 2 * hidden(); }
  Eigen::Index out_weights_offset() const { return hidden_bias_offset() + hidden(); }
  Eigen::Index out_bias_offset() const {
    return out_weights_offset() + static_cast<Eigen::Index>(hidden()) * M;
  }
  Eigen::Index decoder_size() const { return size() - encoder_size(); }
  Eigen::Index size() const { return out_bias_offset() + M; }

  bool operator==(const NetLayout&) const = default;
};

/// No hidden layer, no bias, linear output: row k of `weights` is the
/// (Re, Im) image of one-hot index k.
struct EncoderNet {
  Eigen::MatrixXd weights;  // M x 2

  int alphabet_size() const { return static_cast<int>(weights.rows()); }
};

/// One Leaky-ReLU hidden layer of width M/2, softmax output of width M.
struct DecoderNet {
  Eigen::MatrixXd hidden_weights;  // 2 x M/2
  Eigen::VectorXd hidden_bias;     // M/2
  Eigen::MatrixXd out_weights;     // M/2 x M
  Eigen::VectorXd out_bias;        // M
  double leaky_slope = kDefaultLeakySlope;

  int alphabet_size() const { return static_cast<int>(out_bias.size()); }
};

/// Flattened encoder + decoder parameters.
class WeightVector {
 public:
  WeightVector() = default;
  explicit WeightVector(NetLayout layout);  // zero-filled
  WeightVector(NetLayout layout, Eigen::VectorXd values);

  const NetLayout& layout() const { return layout_; }
  const Eigen::VectorXd& values() const { return values_; }
  Eigen::VectorXd& values() { return values_; }
  Eigen::Index size() const { return values_.size(); }

  bool operator==(const WeightVector&) const;

 private:
  NetLayout layout_;
  Eigen::VectorXd values_;
};

/// Read-only views of the blocks of a flat parameter vector.
struct NetView {
  Eigen::Map<const Eigen::MatrixXd> encoder;         // M x 2
  Eigen::Map<const Eigen::MatrixXd> hidden_weights;  // 2 x H
  Eigen::Map<const Eigen::VectorXd> hidden_bias;
  Eigen::Map<const Eigen::MatrixXd> out_weights;  // H x M
  Eigen::Map<const Eigen::VectorXd> out_bias;

  NetView(const NetLayout& layout, const double* data);
};

EncoderNet encoder_of(const WeightVector& w);
DecoderNet decoder_of(const WeightVector& w, double leaky_slope = kDefaultLeakySlope);
WeightVector flatten(const EncoderNet& enc, const DecoderNet& dec);

/// Glorot-uniform matrix: entries i.i.d. U[-a, a], a = sqrt(6 / (fan_in + fan_out)).
Eigen::MatrixXd glorot_init(int fan_in, int fan_out, Rng& rng);

/// Glorot weights for every layer, zero biases.
WeightVector initial_weights(const NetLayout& layout, Rng& rng);

double leaky_relu(double x, double slope);

cd encoder_forward(const EncoderNet& enc, const Eigen::VectorXd& one_hot);

Constellation constellation_of(const EncoderNet& enc);
Constellation constellation_of(const Eigen::Ref<const Eigen::MatrixXd>& encoder_weights);

/// Posterior row for one received sample.
Eigen::VectorXd decoder_forward(const DecoderNet& dec, cd y);

/// B x M posteriors.
Eigen::MatrixXd decoder_forward(const DecoderNet& dec, std::span<const cd> y);

/// Numerically stable softmax.
Eigen::VectorXd softmax(const Eigen::Ref<const Eigen::VectorXd>& logits);

/// Mean over rows of -ln(max(p[target], floor)), in nats.
double cross_entropy(const Eigen::MatrixXd& posteriors, std::span<const int> targets);

struct AeOutput {
  Eigen::MatrixXd posteriors;  // B x M
  ComplexVec sent;             // normalized encoder outputs
  ComplexVec received;         // channel outputs fed to the decoder
};

/// Encoder -> unit-power normalization over the full alphabet -> channel ->
/// decoder, for each transmitted index.
AeOutput ae_forward(const WeightVector& w, std::span<const int> indices,
                    const ChannelConfig& channel, const ChannelNoise& noise);
AeOutput ae_forward(const WeightVector& w, std::span<const int> indices,
                    const ChannelConfig& channel, Rng& rng);

/// One-hot B x M matrix overload. Rows must be valid one-hot vectors.
AeOutput ae_forward(const WeightVector& w, const Eigen::MatrixXd& one_hot_batch,
                    const ChannelConfig& channel, Rng& rng);

// ---------------------------------------------------------------------------
// Backpropagation baseline (differentiable channels only)

struct AdamSettings {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  Eigen::VectorXd first_moment;
  Eigen::VectorXd second_moment;
  std::int64_t steps = 0;
};

struct LossGradient {
  double loss = 0.0;  // mean cross-entropy, nats
  Eigen::VectorXd gradient;
};

/// Mean cross-entropy of the batch under a frozen noise realization.
double batch_loss(const WeightVector& w, std::span<const int> targets,
                  const ChannelConfig& channel, const ChannelNoise& noise);

/// Analytic gradient through decoder, normalization and encoder; the channel
/// enters through its per-symbol finite-difference Jacobian.
LossGradient loss_gradient(const WeightVector& w, std::span<const int> targets,
                           const ChannelConfig& channel, const ChannelNoise& noise);

/// One Adam update on a fresh noise draw. Throws UnsupportedChannel for BPS.
WeightVector backprop_adam_step(const WeightVector& w, std::span<const int> targets,
                                const ChannelConfig& channel, const AdamSettings& settings,
                                AdamState& state, Rng& rng, double* loss_out = nullptr);

}  // namespace gcs

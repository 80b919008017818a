#include "gcs/nn.hpp"

#include <cmath>
#include <string>

#include "gcs/errors.hpp"

namespace gcs {
namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

// 2 x B matrix of (Re, Im) columns.
MatrixXd to_real_columns(std::span<const cd> y) {
  MatrixXd out(2, static_cast<Index>(y.size()));
  for (std::size_t k = 0; k < y.size(); ++k) {
    if (!std::isfinite(y[k].real()) || !std::isfinite(y[k].imag()))
      throw InputError("decoder input is not finite");
    out(0, static_cast<Index>(k)) = y[k].real();
    out(1, static_cast<Index>(k)) = y[k].imag();
  }
  return out;
}

// Column-wise softmax of an M x B logit matrix, in place.
void softmax_columns(MatrixXd& logits) {
  for (Index b = 0; b < logits.cols(); ++b) {
    auto col = logits.col(b);
    col.array() -= col.maxCoeff();
    col = col.array().exp().matrix();
    col /= col.sum();
  }
}

struct DecoderPass {
  MatrixXd pre;     // H x B
  MatrixXd hidden;  // H x B
  MatrixXd probs;   // M x B
};

template <class Hw, class Hb, class Ow, class Ob>
DecoderPass run_decoder(const Hw& hidden_weights, const Hb& hidden_bias, const Ow& out_weights,
                        const Ob& out_bias, const MatrixXd& y_real, double slope) {
  DecoderPass pass;
  pass.pre = (hidden_weights.transpose() * y_real).colwise() + hidden_bias;
  pass.hidden = pass.pre.unaryExpr([slope](double v) { return leaky_relu(v, slope); });
  pass.probs = (out_weights.transpose() * pass.hidden).colwise() + out_bias;
  softmax_columns(pass.probs);
  return pass;
}

void check_targets(std::span<const int> targets, int M) {
  for (int t : targets)
    if (t < 0 || t >= M) throw InputError("symbol index " + std::to_string(t) + " out of range");
}

}  // namespace

NetLayout NetLayout::for_alphabet(int M) {
  if (M < 2 || (M & (M - 1)) != 0)
    throw InputError("alphabet size must be a power of two >= 2, got " + std::to_string(M));
  return NetLayout{M};
}

WeightVector::WeightVector(NetLayout layout)
    : layout_(layout), values_(VectorXd::Zero(layout.size())) {}

WeightVector::WeightVector(NetLayout layout, VectorXd values)
    : layout_(layout), values_(std::move(values)) {
  if (values_.size() != layout_.size())
    throw InputError("weight vector has " + std::to_string(values_.size()) + " entries, layout needs " +
                     std::to_string(layout_.size()));
}

bool WeightVector::operator==(const WeightVector& other) const {
  return layout_ == other.layout_ && values_.size() == other.values_.size() &&
         values_ == other.values_;
}

NetView::NetView(const NetLayout& l, const double* data)
    : encoder(data + l.encoder_offset(), l.M, 2),
      hidden_weights(data + l.hidden_weights_offset(), 2, l.hidden()),
      hidden_bias(data + l.hidden_bias_offset(), l.hidden()),
      out_weights(data + l.out_weights_offset(), l.hidden(), l.M),
      out_bias(data + l.out_bias_offset(), l.M) {}

EncoderNet encoder_of(const WeightVector& w) {
  const NetView v(w.layout(), w.values().data());
  return EncoderNet{v.encoder};
}

DecoderNet decoder_of(const WeightVector& w, double leaky_slope) {
  const NetView v(w.layout(), w.values().data());
  return DecoderNet{v.hidden_weights, v.hidden_bias, v.out_weights, v.out_bias, leaky_slope};
}

WeightVector flatten(const EncoderNet& enc, const DecoderNet& dec) {
  const NetLayout layout = NetLayout::for_alphabet(enc.alphabet_size());
  const int H = layout.hidden();
  if (dec.alphabet_size() != layout.M || dec.hidden_weights.rows() != 2 ||
      dec.hidden_weights.cols() != H || dec.hidden_bias.size() != H ||
      dec.out_weights.rows() != H || dec.out_weights.cols() != layout.M || enc.weights.cols() != 2)
    throw InputError("encoder/decoder shapes do not match a single layout");
  VectorXd v(layout.size());
  v.segment(layout.encoder_offset(), layout.encoder_size()) = enc.weights.reshaped();
  v.segment(layout.hidden_weights_offset(), 2 * H) = dec.hidden_weights.reshaped();
  v.segment(layout.hidden_bias_offset(), H) = dec.hidden_bias;
  v.segment(layout.out_weights_offset(), static_cast<Index>(H) * layout.M) =
      dec.out_weights.reshaped();
  v.segment(layout.out_bias_offset(), layout.M) = dec.out_bias;
  return WeightVector(layout, std::move(v));
}

MatrixXd glorot_init(int fan_in, int fan_out, Rng& rng) {
  if (fan_in < 1 || fan_out < 1) throw InputError("glorot_init needs positive fan-in and fan-out");
  const double limit = std::sqrt(6.0 / (fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  MatrixXd w(fan_in, fan_out);
  for (Index c = 0; c < w.cols(); ++c)
    for (Index r = 0; r < w.rows(); ++r) w(r, c) = dist(rng);
  return w;
}

WeightVector initial_weights(const NetLayout& layout, Rng& rng) {
  const int H = layout.hidden();
  EncoderNet enc{glorot_init(layout.M, 2, rng)};
  DecoderNet dec{glorot_init(2, H, rng), VectorXd::Zero(H), glorot_init(H, layout.M, rng),
                 VectorXd::Zero(layout.M), kDefaultLeakySlope};
  return flatten(enc, dec);
}

double leaky_relu(double x, double slope) { return x > 0.0 ? x : slope * x; }

cd encoder_forward(const EncoderNet& enc, const VectorXd& one_hot) {
  if (one_hot.size() != enc.weights.rows())
    throw InputError("one-hot length does not match alphabet size");
  Index hot = -1;
  for (Index i = 0; i < one_hot.size(); ++i) {
    if (one_hot[i] == 0.0) continue;
    if (one_hot[i] != 1.0 || hot >= 0) throw InputError("input is not a one-hot vector");
    hot = i;
  }
  if (hot < 0) throw InputError("input is not a one-hot vector");
  return {enc.weights(hot, 0), enc.weights(hot, 1)};
}

Constellation constellation_of(const Eigen::Ref<const MatrixXd>& encoder_weights) {
  ComplexVec pts(static_cast<std::size_t>(encoder_weights.rows()));
  for (Index m = 0; m < encoder_weights.rows(); ++m)
    pts[static_cast<std::size_t>(m)] = {encoder_weights(m, 0), encoder_weights(m, 1)};
  return Constellation::normalized(std::move(pts));
}

Constellation constellation_of(const EncoderNet& enc) { return constellation_of(enc.weights); }

VectorXd softmax(const Eigen::Ref<const VectorXd>& logits) {
  VectorXd p = (logits.array() - logits.maxCoeff()).exp().matrix();
  return p / p.sum();
}

VectorXd decoder_forward(const DecoderNet& dec, cd y) {
  const cd ys[1] = {y};
  return decoder_forward(dec, std::span<const cd>(ys)).row(0).transpose();
}

MatrixXd decoder_forward(const DecoderNet& dec, std::span<const cd> y) {
  const MatrixXd yr = to_real_columns(y);
  return run_decoder(dec.hidden_weights, dec.hidden_bias, dec.out_weights, dec.out_bias, yr,
                     dec.leaky_slope)
      .probs.transpose();
}

double cross_entropy(const MatrixXd& posteriors, std::span<const int> targets) {
  if (static_cast<Index>(targets.size()) != posteriors.rows())
    throw InputError("posterior rows and targets differ in length");
  if (targets.empty()) return 0.0;
  check_targets(targets, static_cast<int>(posteriors.cols()));
  double sum = 0.0;
  for (std::size_t k = 0; k < targets.size(); ++k)
    sum -= std::log(std::max(posteriors(static_cast<Index>(k), targets[k]), kProbabilityFloor));
  return sum / static_cast<double>(targets.size());
}

AeOutput ae_forward(const WeightVector& w, std::span<const int> indices,
                    const ChannelConfig& channel, const ChannelNoise& noise) {
  const NetLayout& l = w.layout();
  check_targets(indices, l.M);
  const NetView v(l, w.values().data());
  const Constellation c = constellation_of(v.encoder);
  AeOutput out;
  out.sent = c.map(indices);
  out.received = apply_channel(channel, out.sent, noise, c);
  const MatrixXd yr = to_real_columns(out.received);
  out.posteriors = run_decoder(v.hidden_weights, v.hidden_bias, v.out_weights, v.out_bias, yr,
                               kDefaultLeakySlope)
                       .probs.transpose();
  return out;
}

AeOutput ae_forward(const WeightVector& w, std::span<const int> indices,
                    const ChannelConfig& channel, Rng& rng) {
  return ae_forward(w, indices, channel, draw_noise(channel, indices.size(), rng));
}

AeOutput ae_forward(const WeightVector& w, const MatrixXd& one_hot_batch,
                    const ChannelConfig& channel, Rng& rng) {
  if (one_hot_batch.cols() != w.layout().M)
    throw InputError("one-hot batch width does not match the weight layout");
  const EncoderNet probe{MatrixXd::Zero(w.layout().M, 2)};
  std::vector<int> indices(static_cast<std::size_t>(one_hot_batch.rows()));
  for (Index b = 0; b < one_hot_batch.rows(); ++b) {
    encoder_forward(probe, one_hot_batch.row(b).transpose());  // validates
    Index hot = 0;
    one_hot_batch.row(b).maxCoeff(&hot);
    indices[static_cast<std::size_t>(b)] = static_cast<int>(hot);
  }
  return ae_forward(w, indices, channel, rng);
}

// ---------------------------------------------------------------------------

double batch_loss(const WeightVector& w, std::span<const int> targets,
                  const ChannelConfig& channel, const ChannelNoise& noise) {
  return cross_entropy(ae_forward(w, targets, channel, noise).posteriors, targets);
}

LossGradient loss_gradient(const WeightVector& w, std::span<const int> targets,
                           const ChannelConfig& channel, const ChannelNoise& noise) {
  if (!is_differentiable(channel))
    throw UnsupportedChannel("backpropagation needs a differentiable channel, got " +
                             channel_kind(channel));
  const NetLayout& l = w.layout();
  check_targets(targets, l.M);
  if (noise.length != targets.size()) throw InputError("noise length does not match the batch");
  const NetView v(l, w.values().data());
  const auto B = static_cast<Index>(targets.size());
  const int M = l.M;

  // Forward.
  const MatrixXd& e = v.encoder;
  const double power = e.squaredNorm() / M;
  if (power == 0.0) throw DegenerateConstellation("encoder weights are all zero");
  const double a = 1.0 / std::sqrt(power);

  MatrixXd y_real(2, B);
  std::vector<Eigen::Matrix2d> jac(static_cast<std::size_t>(B));
  for (Index k = 0; k < B; ++k) {
    const auto t = static_cast<Index>(targets[static_cast<std::size_t>(k)]);
    const cd x{a * e(t, 0), a * e(t, 1)};
    const auto ks = static_cast<std::size_t>(k);
    const cd y = apply_memoryless(channel, x, noise, ks);
    y_real(0, k) = y.real();
    y_real(1, k) = y.imag();
    jac[ks] = channel_jacobian(channel, x, noise, ks);
  }
  const DecoderPass pass = run_decoder(v.hidden_weights, v.hidden_bias, v.out_weights, v.out_bias,
                                       y_real, kDefaultLeakySlope);

  LossGradient out;
  MatrixXd dlogits = pass.probs;  // M x B
  for (Index k = 0; k < B; ++k) {
    const Index t = targets[static_cast<std::size_t>(k)];
    const double p = pass.probs(t, k);
    if (p < kProbabilityFloor) {
      out.loss -= std::log(kProbabilityFloor);
      dlogits.col(k).setZero();  // clipped: flat in the weights
    } else {
      out.loss -= std::log(p);
      dlogits(t, k) -= 1.0;
    }
  }
  out.loss /= static_cast<double>(B);
  dlogits /= static_cast<double>(B);

  // Backward through the decoder.
  const MatrixXd d_out_w = pass.hidden * dlogits.transpose();  // H x M
  const VectorXd d_out_b = dlogits.rowwise().sum();
  MatrixXd d_pre = v.out_weights * dlogits;  // H x B
  d_pre.array() *= pass.pre.unaryExpr([](double p) { return p > 0.0 ? 1.0 : kDefaultLeakySlope; })
                       .array();
  const MatrixXd d_hidden_w = y_real * d_pre.transpose();  // 2 x H
  const VectorXd d_hidden_b = d_pre.rowwise().sum();
  const MatrixXd d_y = v.hidden_weights * d_pre;  // 2 x B

  // Channel, then symbol selection.
  MatrixXd d_c = MatrixXd::Zero(M, 2);
  for (Index k = 0; k < B; ++k) {
    const Eigen::Vector2d d_x = jac[static_cast<std::size_t>(k)].transpose() * d_y.col(k);
    d_c.row(targets[static_cast<std::size_t>(k)]) += d_x.transpose();
  }

  // c = e / sqrt(P), P = |e|^2 / M.
  const double inner = (e.array() * d_c.array()).sum();
  const MatrixXd d_e = a * d_c - (a * a * a / M) * inner * e;

  out.gradient.resize(l.size());
  out.gradient.segment(l.encoder_offset(), l.encoder_size()) = d_e.reshaped();
  out.gradient.segment(l.hidden_weights_offset(), 2 * l.hidden()) = d_hidden_w.reshaped();
  out.gradient.segment(l.hidden_bias_offset(), l.hidden()) = d_hidden_b;
  out.gradient.segment(l.out_weights_offset(), static_cast<Index>(l.hidden()) * M) =
      d_out_w.reshaped();
  out.gradient.segment(l.out_bias_offset(), M) = d_out_b;
  return out;
}

WeightVector backprop_adam_step(const WeightVector& w, std::span<const int> targets,
                                const ChannelConfig& channel, const AdamSettings& s,
                                AdamState& state, Rng& rng, double* loss_out) {
  if (!is_differentiable(channel))
    throw UnsupportedChannel("backpropagation needs a differentiable channel, got " +
                             channel_kind(channel));
  const ChannelNoise noise = draw_noise(channel, targets.size(), rng);
  const LossGradient lg = loss_gradient(w, targets, channel, noise);
  if (loss_out) *loss_out = lg.loss;

  if (state.first_moment.size() != w.size()) {
    state.first_moment = VectorXd::Zero(w.size());
    state.second_moment = VectorXd::Zero(w.size());
    state.steps = 0;
  }
  ++state.steps;
  state.first_moment = s.beta1 * state.first_moment + (1.0 - s.beta1) * lg.gradient;
  state.second_moment =
      s.beta2 * state.second_moment + (1.0 - s.beta2) * lg.gradient.array().square().matrix();
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(state.steps));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(state.steps));
  const VectorXd step = ((state.first_moment.array() / c1) /
                         ((state.second_moment.array() / c2).sqrt() + s.epsilon))
                            .matrix();
  return WeightVector(w.layout(), w.values() - s.learning_rate * step);
}

}  // namespace gcs

#include "gcs/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "gcs/errors.hpp"

namespace gcs {

std::string to_string(ReceiverKind kind) {
  return kind == ReceiverKind::gaussian ? "gaussian" : "decoder";
}

ReceiverKind receiver_from_string(const std::string& name) {
  if (name == "gaussian") return ReceiverKind::gaussian;
  if (name == "decoder" || name == "nn") return ReceiverKind::decoder;
  throw ConfigError("unknown receiver '" + name + "' (expected gaussian|decoder)");
}

double fit_sigma(std::span<const cd> x_sent, std::span<const cd> y_received) {
  if (x_sent.empty()) throw InputError("fit_sigma needs at least one pair");
  if (x_sent.size() != y_received.size()) throw InputError("fit_sigma: length mismatch");
  double sum = 0.0;
  for (std::size_t k = 0; k < x_sent.size(); ++k) sum += std::norm(y_received[k] - x_sent[k]);
  return std::max(sum / (2.0 * static_cast<double>(x_sent.size())), 1e-12);
}

Eigen::VectorXd gaussian_posterior(const GaussianReceiver& rx, cd y) {
  const auto M = static_cast<Eigen::Index>(rx.constellation.size());
  Eigen::VectorXd logq(M);
  for (Eigen::Index i = 0; i < M; ++i)
    logq[i] = -std::norm(y - rx.constellation[static_cast<std::size_t>(i)]) / (2.0 * rx.sigma_sq);
  Eigen::VectorXd p = (logq.array() - logq.maxCoeff()).exp().matrix();
  return p / p.sum();
}

MiEstimate mi_gaussian(std::span<const int> x_indices, std::span<const cd> y_received,
                       const Constellation& constellation) {
  const std::size_t K = x_indices.size();
  if (K == 0) throw InputError("mi_gaussian needs at least one symbol");
  if (y_received.size() != K) throw InputError("mi_gaussian: length mismatch");
  const std::size_t M = constellation.size();
  for (int i : x_indices)
    if (i < 0 || static_cast<std::size_t>(i) >= M) throw InputError("symbol index out of range");

  const ComplexVec sent = constellation.map(x_indices);
  const double two_sigma_sq = 2.0 * fit_sigma(sent, y_received);

  // log q(x_sent|y) = -d_sent - logsumexp_i(-d_i), in nats.
  double sum_log_q = 0.0;
  std::vector<double> neg_d(M);
  for (std::size_t k = 0; k < K; ++k) {
    double peak = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < M; ++i) {
      neg_d[i] = -std::norm(y_received[k] - constellation[i]) / two_sigma_sq;
      peak = std::max(peak, neg_d[i]);
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < M; ++i) acc += std::exp(neg_d[i] - peak);
    sum_log_q += neg_d[static_cast<std::size_t>(x_indices[k])] - (peak + std::log(acc));
  }
  const double bits =
      std::log2(static_cast<double>(M)) + sum_log_q / std::numbers::ln2 / static_cast<double>(K);
  return {std::max(bits, 0.0), K, ReceiverKind::gaussian};
}

MiEstimate mi_decoder(const Eigen::MatrixXd& posteriors, std::span<const int> targets) {
  const std::size_t K = targets.size();
  if (K == 0) throw InputError("mi_decoder needs at least one symbol");
  if (static_cast<std::size_t>(posteriors.rows()) != K)
    throw InputError("mi_decoder: posterior rows and targets differ");
  const auto M = posteriors.cols();
  double sum = 0.0;
  for (std::size_t k = 0; k < K; ++k) {
    const int t = targets[k];
    if (t < 0 || t >= M) throw InputError("target index out of range");
    sum -= std::log2(std::max(posteriors(static_cast<Eigen::Index>(k), t), 1e-12));
  }
  const double bits = std::log2(static_cast<double>(M)) - sum / static_cast<double>(K);
  return {std::max(bits, 0.0), K, ReceiverKind::decoder};
}

}  // namespace gcs

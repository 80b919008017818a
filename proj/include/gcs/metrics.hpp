#pragma once

#include <cstddef>
#include <span>
#include <string>

#include <Eigen/Dense>

#include "gcs/constellation.hpp"
#include "gcs/types.hpp"

namespace gcs {

enum class ReceiverKind { gaussian, decoder };

std::string to_string(ReceiverKind kind);
ReceiverKind receiver_from_string(const std::string& name);

/// Lower bound on I(X;Y) in bits per symbol, clamped at 0.
struct MiEstimate {
  double bits_per_symbol = 0.0;
  std::size_t num_symbols = 0;
  ReceiverKind receiver = ReceiverKind::gaussian;
};

/// Auxiliary channel q(y|x) ~ exp(-|y-x|^2 / (2 sigma_sq)), uniform priors.
struct GaussianReceiver {
  Constellation constellation;
  double sigma_sq = 1.0;  // per real dimension
};

/// ML per-dimension variance (1/2K) sum |y - x|^2, floored at 1e-12.
double fit_sigma(std::span<const cd> x_sent, std::span<const cd> y_received);

Eigen::VectorXd gaussian_posterior(const GaussianReceiver& rx, cd y);

/// log2 M + mean log2 q(x_sent | y) with sigma fitted from the same pairs.
MiEstimate mi_gaussian(std::span<const int> x_indices, std::span<const cd> y_received,
                       const Constellation& constellation);

/// log2 M - mean(-log2 s[target]).
MiEstimate mi_decoder(const Eigen::MatrixXd& posteriors, std::span<const int> targets);

}  // namespace gcs

#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "gcs/channels.hpp"
#include "gcs/nn.hpp"
#include "gcs/rng.hpp"

namespace gcs {

/// Process noise Q = q I and measurement noise R = r I.
struct CkfHyperparams {
  double q = 1e-3;
  double r = 1e-3;

  void validate() const;
  bool operator==(const CkfHyperparams&) const = default;
};

struct CkfState {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
  std::int64_t iteration = 0;

  /// Mean w0 with P0 = I.
  static CkfState initial(const Eigen::VectorXd& w0);
};

/// One iteration's inputs. The measured vector is the zero vector: the filter
/// drives sqrt(cross-entropy) of every batch element towards 0.
struct MeasurementBatch {
  int M = 0;
  std::vector<int> targets;  // hot index per element

  std::size_t size() const { return targets.size(); }
  Eigen::MatrixXd one_hot() const;          // B x M
  Eigen::VectorXd measured() const;         // zeros, length B
};

/// sqrt(-ln s[target]) with s clipped at kProbabilityFloor.
double scalar_measurement(const Eigen::Ref<const Eigen::VectorXd>& posterior_row, int target);

CkfState predict(const CkfState& state, const CkfHyperparams& hp);

/// Lower Cholesky factor with escalating diagonal jitter
/// (1e-12 .. 1e-6 times trace/N). Throws NumericalBreakdown on failure.
Eigen::MatrixXd covariance_sqrt(const Eigen::MatrixXd& P);

/// N x 2N matrix [w + sqrt(N) S, w - sqrt(N) S].
Eigen::MatrixXd cubature_points(const CkfState& predicted);

struct PropagatedMeasurements {
  Eigen::MatrixXd columns;    // B x 2N
  Eigen::VectorXd predicted;  // row means, length B
};

/// Maps an N x K block of weight realizations to a B x K block of measurements.
using MeasurementModel = std::function<Eigen::MatrixXd(const Eigen::MatrixXd& points)>;

PropagatedMeasurements propagate_measurements(const Eigen::MatrixXd& points,
                                              const MeasurementModel& model);

/// Autoencoder measurement for every cubature point. One noise realization
/// is drawn from `rng` and shared by all columns.
PropagatedMeasurements propagate_measurements(const Eigen::MatrixXd& points,
                                              const MeasurementBatch& batch,
                                              const NetLayout& layout,
                                              const ChannelConfig& channel, Rng& rng);

/// Autoencoder measurement model under a fixed noise realization. Columns that
/// share their encoder block reuse one channel pass.
MeasurementModel autoencoder_measurement(const MeasurementBatch& batch, const NetLayout& layout,
                                         const ChannelConfig& channel, const ChannelNoise& noise);

CkfState correct(const CkfState& predicted, const Eigen::MatrixXd& points,
                 const PropagatedMeasurements& measurements, const CkfHyperparams& hp);

struct CkfStepResult {
  CkfState state;
  /// Mean squared measurement at the predicted mean, i.e. batch cross-entropy in nats.
  double loss = 0.0;
};

/// predict -> cubature_points -> propagate -> correct for a generic model.
/// `loss` is the mean of squared measurements of the predicted mean.
CkfStepResult ckf_step(const CkfState& state, const CkfHyperparams& hp,
                       const MeasurementModel& model);

CkfStepResult ckf_step(const CkfState& state, const CkfHyperparams& hp,
                       const MeasurementBatch& batch, const NetLayout& layout,
                       const ChannelConfig& channel, Rng& rng);

}  // namespace gcs

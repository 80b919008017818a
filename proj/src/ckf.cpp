#include "gcs/ckf.hpp"

#include <cmath>
#include <string>

#include "gcs/errors.hpp"

namespace gcs {
namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

const double kMaxMeasurement = std::sqrt(-std::log(kProbabilityFloor));

void symmetrize(MatrixXd& P) {
  const MatrixXd sym = 0.5 * (P + P.transpose());
  P = sym;
}

}  // namespace

void CkfHyperparams::validate() const {
  if (!(q >= 0.0) || !std::isfinite(q)) throw ConfigError("CKF q must be finite and >= 0");
  if (!(r > 0.0) || !std::isfinite(r)) throw ConfigError("CKF r must be finite and > 0");
}

CkfState CkfState::initial(const VectorXd& w0) {
  return CkfState{w0, MatrixXd::Identity(w0.size(), w0.size()), 0};
}

MatrixXd MeasurementBatch::one_hot() const {
  MatrixXd u = MatrixXd::Zero(static_cast<Index>(targets.size()), M);
  for (std::size_t k = 0; k < targets.size(); ++k) u(static_cast<Index>(k), targets[k]) = 1.0;
  return u;
}

VectorXd MeasurementBatch::measured() const {
  return VectorXd::Zero(static_cast<Index>(targets.size()));
}

double scalar_measurement(const Eigen::Ref<const VectorXd>& posterior_row, int target) {
  if (target < 0 || target >= posterior_row.size())
    throw InputError("target index out of range");
  return std::sqrt(-std::log(std::max(posterior_row[target], kProbabilityFloor)));
}

CkfState predict(const CkfState& state, const CkfHyperparams& hp) {
  CkfState out = state;
  out.covariance.diagonal().array() += hp.q;
  return out;
}

MatrixXd covariance_sqrt(const MatrixXd& P) {
  const Index N = P.rows();
  if (P.isZero(0.0)) return MatrixXd::Zero(N, N);
  Eigen::LLT<MatrixXd> llt(P);
  if (llt.info() == Eigen::Success) return llt.matrixL();

  const double scale = P.trace() / static_cast<double>(N);
  if (!(scale > 0.0) || !std::isfinite(scale))
    throw NumericalBreakdown("covariance has non-positive or non-finite trace");
  for (double jitter = 1e-12; jitter <= 1e-6 * (1.0 + 1e-9); jitter *= 10.0) {
    MatrixXd J = P;
    J.diagonal().array() += jitter * scale;
    llt.compute(J);
    if (llt.info() == Eigen::Success) return llt.matrixL();
  }
  throw NumericalBreakdown("Cholesky of the state covariance failed after maximum jitter");
}

MatrixXd cubature_points(const CkfState& predicted) {
  const Index N = predicted.mean.size();
  const MatrixXd spread = std::sqrt(static_cast<double>(N)) * covariance_sqrt(predicted.covariance);
  MatrixXd points(N, 2 * N);
  points.leftCols(N) = spread.colwise() + predicted.mean;
  points.rightCols(N) = (-spread).colwise() + predicted.mean;
  return points;
}

PropagatedMeasurements propagate_measurements(const MatrixXd& points,
                                              const MeasurementModel& model) {
  PropagatedMeasurements out;
  out.columns = model(points);
  if (out.columns.cols() != points.cols())
    throw InputError("measurement model returned the wrong number of columns");
  out.predicted = out.columns.rowwise().mean();
  return out;
}

MeasurementModel autoencoder_measurement(const MeasurementBatch& batch, const NetLayout& layout,
                                         const ChannelConfig& channel, const ChannelNoise& noise) {
  if (noise.length != batch.size()) throw InputError("noise length does not match the batch");
  if (batch.M != layout.M) throw InputError("batch alphabet does not match the weight layout");
  return [targets = batch.targets, layout, channel, noise](const MatrixXd& points) {
    if (points.rows() != layout.size())
      throw InputError("cubature points do not match the weight layout");
    const auto B = static_cast<Index>(targets.size());
    const Index enc = layout.encoder_size();
    MatrixXd T(B, points.cols());

    VectorXd cached_encoder;
    MatrixXd y_real(2, B);
    for (Index j = 0; j < points.cols(); ++j) {
      const NetView v(layout, points.col(j).data());
      // Columns sharing an encoder block see the same constellation and thus,
      // under the shared noise draw, the same channel output.
      if (cached_encoder.size() != enc || cached_encoder != points.col(j).head(enc)) {
        cached_encoder = points.col(j).head(enc);
        const Constellation c = constellation_of(v.encoder);
        const ComplexVec y = apply_channel(channel, c.map(targets), noise, c);
        for (Index k = 0; k < B; ++k) {
          y_real(0, k) = y[static_cast<std::size_t>(k)].real();
          y_real(1, k) = y[static_cast<std::size_t>(k)].imag();
        }
      }
      MatrixXd hidden = (v.hidden_weights.transpose() * y_real).colwise() + v.hidden_bias;
      hidden = hidden.unaryExpr([](double x) { return leaky_relu(x, kDefaultLeakySlope); });
      MatrixXd logits = (v.out_weights.transpose() * hidden).colwise() + v.out_bias;
      const Eigen::RowVectorXd peak = logits.colwise().maxCoeff();
      logits.rowwise() -= peak;
      const Eigen::RowVectorXd lse = logits.array().exp().colwise().sum().log().matrix();
      for (Index k = 0; k < B; ++k) {
        const double nll = lse[k] - logits(targets[static_cast<std::size_t>(k)], k);
        T(k, j) = std::min(std::sqrt(std::max(nll, 0.0)), kMaxMeasurement);
      }
    }
    return T;
  };
}

PropagatedMeasurements propagate_measurements(const MatrixXd& points,
                                              const MeasurementBatch& batch,
                                              const NetLayout& layout,
                                              const ChannelConfig& channel, Rng& rng) {
  const ChannelNoise noise = draw_noise(channel, batch.size(), rng);
  return propagate_measurements(points, autoencoder_measurement(batch, layout, channel, noise));
}

CkfState correct(const CkfState& predicted, const MatrixXd& points,
                 const PropagatedMeasurements& meas, const CkfHyperparams& hp) {
  const Index N = predicted.mean.size();
  const Index B = meas.predicted.size();
  if (points.rows() != N || meas.columns.cols() != points.cols() || meas.columns.rows() != B)
    throw InputError("inconsistent dimensions in CKF correction");
  if (!meas.columns.allFinite())
    throw NumericalBreakdown("measurement propagation produced non-finite values");

  const double inv = 1.0 / static_cast<double>(points.cols());
  const MatrixXd t_dev = meas.columns.colwise() - meas.predicted;  // B x 2N
  const MatrixXd w_dev = points.colwise() - predicted.mean;       // N x 2N

  MatrixXd p_tt = MatrixXd::Identity(B, B) * hp.r;
  p_tt.selfadjointView<Eigen::Lower>().rankUpdate(t_dev, inv);
  p_tt.triangularView<Eigen::StrictlyUpper>() = p_tt.transpose();
  const MatrixXd p_wt = inv * (w_dev * t_dev.transpose());  // N x B

  const Eigen::LLT<MatrixXd> llt(p_tt);
  if (llt.info() != Eigen::Success)
    throw NumericalBreakdown("innovation covariance is not positive definite");

  // With P_TT = L L^T: X = L^-1 P_WT^T, G^T = L^-T X and G P_TT G^T = X^T X.
  const MatrixXd x = llt.matrixL().solve(p_wt.transpose());  // B x N
  const MatrixXd gain_t = llt.matrixU().solve(x);             // B x N

  CkfState out;
  out.iteration = predicted.iteration + 1;
  out.mean = predicted.mean + gain_t.transpose() * (-meas.predicted);
  out.covariance = predicted.covariance;
  out.covariance.selfadjointView<Eigen::Lower>().rankUpdate(x.transpose(), -1.0);
  out.covariance.triangularView<Eigen::StrictlyUpper>() = out.covariance.transpose();
  symmetrize(out.covariance);
  if (!out.mean.allFinite() || !out.covariance.allFinite())
    throw NumericalBreakdown("CKF update produced non-finite values");
  return out;
}

CkfStepResult ckf_step(const CkfState& state, const CkfHyperparams& hp,
                       const MeasurementModel& model) {
  hp.validate();
  const CkfState predicted = predict(state, hp);
  const MatrixXd points = cubature_points(predicted);
  const Index n2 = points.cols();

  // Evaluate the predicted mean alongside the cubature points for telemetry.
  MatrixXd augmented(points.rows(), n2 + 1);
  augmented.leftCols(n2) = points;
  augmented.col(n2) = predicted.mean;
  const MatrixXd all = model(augmented);
  if (all.cols() != n2 + 1) throw InputError("measurement model returned the wrong shape");

  PropagatedMeasurements meas;
  meas.columns = all.leftCols(n2);
  meas.predicted = meas.columns.rowwise().mean();

  CkfStepResult out;
  out.loss = all.col(n2).squaredNorm() / static_cast<double>(all.rows());
  out.state = correct(predicted, points, meas, hp);
  return out;
}

CkfStepResult ckf_step(const CkfState& state, const CkfHyperparams& hp,
                       const MeasurementBatch& batch, const NetLayout& layout,
                       const ChannelConfig& channel, Rng& rng) {
  const ChannelNoise noise = draw_noise(channel, batch.size(), rng);
  return ckf_step(state, hp, autoencoder_measurement(batch, layout, channel, noise));
}

}  // namespace gcs

#pragma once

// Reference computations used only by the tests. None of these share code
// with the library paths they check.

#include <cmath>
#include <complex>
#include <numbers>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

/// Gauss-Hermite nodes/weights for int exp(-t^2) f(t) dt (Golub-Welsch).
inline std::pair<std::vector<double>, std::vector<double>> gauss_hermite(int n) {
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
  for (int k = 1; k < n; ++k) J(k, k - 1) = J(k - 1, k) = std::sqrt(k / 2.0);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
  std::vector<double> nodes(n), weights(n);
  for (int i = 0; i < n; ++i) {
    nodes[i] = es.eigenvalues()[i];
    const double v0 = es.eigenvectors()(0, i);
    weights[i] = std::sqrt(std::numbers::pi) * v0 * v0;
  }
  return {nodes, weights};
}

/// Mutual information (bits) of a uniform-prior constellation on complex AWGN
/// with total noise variance `noise_var`, by 2-D Gauss-Hermite quadrature of
///   I = log2 M - 1/M sum_j E_n log2 sum_i exp(-(|x_j - x_i + n|^2 - |n|^2) / noise_var).
inline double awgn_mi_quadrature(const std::vector<std::complex<double>>& pts, double noise_var,
                                 int nodes = 80) {
  const auto [t, w] = gauss_hermite(nodes);
  const double sigma = std::sqrt(noise_var);
  const std::size_t M = pts.size();
  double acc = 0.0;
  for (std::size_t j = 0; j < M; ++j) {
    for (int a = 0; a < nodes; ++a) {
      for (int b = 0; b < nodes; ++b) {
        // n = sigma (t_a + i t_b) has per-dimension variance noise_var / 2
        // under the weight exp(-t_a^2 - t_b^2) / pi.
        const std::complex<double> n(sigma * t[a], sigma * t[b]);
        std::vector<double> e(M);
        double peak = -1e300;
        for (std::size_t i = 0; i < M; ++i) {
          e[i] = -(std::norm(pts[j] - pts[i] + n) - std::norm(n)) / noise_var;
          peak = std::max(peak, e[i]);
        }
        double s = 0.0;
        for (double v : e) s += std::exp(v - peak);
        acc += w[a] * w[b] / std::numbers::pi * (peak + std::log(s)) / std::numbers::ln2;
      }
    }
  }
  return std::log2(static_cast<double>(M)) - acc / static_cast<double>(M);
}

/// Square QAM built independently of the library generator.
inline std::vector<std::complex<double>> qam(int side) {
  std::vector<std::complex<double>> pts;
  double power = 0.0;
  for (int i = 0; i < side; ++i)
    for (int q = 0; q < side; ++q) {
      pts.emplace_back(2 * i - side + 1, 2 * q - side + 1);
      power += std::norm(pts.back());
    }
  for (auto& p : pts) p /= std::sqrt(power / pts.size());
  return pts;
}

/// Closed-form scalar Kalman filter: predict with process noise q, then update
/// with observation z of h(w) = w under measurement noise r.
struct ScalarKalman {
  double mean;
  double var;
};

inline ScalarKalman scalar_kalman_step(ScalarKalman s, double q, double r, double z) {
  const double prior_var = s.var + q;
  const double gain = prior_var / (prior_var + r);
  return {s.mean + gain * (z - s.mean), (1.0 - gain) * prior_var};
}

/// Central finite-difference gradient of f at x.
template <class F>
Eigen::VectorXd central_gradient(F&& f, const Eigen::VectorXd& x, double step) {
  Eigen::VectorXd g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Eigen::VectorXd xp = x, xm = x;
    xp[i] += step;
    xm[i] -= step;
    g[i] = (f(xp) - f(xm)) / (2.0 * step);
  }
  return g;
}

}  // namespace oracle

// Slow, independently coded reference computations used to pin down expected
// values in the unit tests. These deliberately avoid the code paths of the
// library (fixed-point iteration instead of an SDP, truncated Taylor series
// instead of a Pade approximant) so a shared bug cannot cancel out.

#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>

namespace oracle {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Fixed point of the discrete algebraic Riccati equation by value iteration:
// P <- Q + A'PA - A'PB (R + B'PB)^{-1} B'PA starting from P = Q.
inline MatrixXd dare_fixed_point(const MatrixXd& A, const MatrixXd& B, const MatrixXd& Q,
                                 const MatrixXd& R, double tol = 1e-14, int max_iters = 200000) {
  MatrixXd P = Q;
  for (int k = 0; k < max_iters; ++k) {
    MatrixXd BtP = B.transpose() * P;
    MatrixXd S = R + BtP * B;
    MatrixXd K = S.ldlt().solve(BtP * A);
    MatrixXd Pn = Q + A.transpose() * P * A - A.transpose() * P * B * K;
    Pn = 0.5 * (Pn + Pn.transpose());
    double diff = (Pn - P).cwiseAbs().maxCoeff();
    P = Pn;
    if (diff <= tol * std::max(1.0, P.cwiseAbs().maxCoeff())) return P;
  }
  throw std::runtime_error("dare_fixed_point did not converge");
}

// LQR gain u = -Kx for the DARE solution P.
inline MatrixXd dare_gain(const MatrixXd& A, const MatrixXd& B, const MatrixXd& Q,
                          const MatrixXd& R) {
  MatrixXd P = dare_fixed_point(A, B, Q, R);
  MatrixXd S = R + B.transpose() * P * B;
  return S.ldlt().solve(B.transpose() * P * A);
}

// Matrix exponential by scaling-and-squaring over a truncated Taylor series.
inline MatrixXd series_expm(const MatrixXd& M, int terms = 30) {
  double nrm = M.cwiseAbs().rowwise().sum().maxCoeff();
  int squarings = 0;
  while (nrm > 0.5 && squarings < 60) {
    nrm /= 2.0;
    ++squarings;
  }
  MatrixXd S = M / std::pow(2.0, squarings);
  MatrixXd term = MatrixXd::Identity(M.rows(), M.cols());
  MatrixXd out = term;
  for (int k = 1; k <= terms; ++k) {
    term = term * S / static_cast<double>(k);
    out += term;
  }
  for (int s = 0; s < squarings; ++s) out = out * out;
  return out;
}

// Exact zero-order-hold pair via the augmented-matrix exponential identity
// expm([[Ac, Bc], [0, 0]] dt) = [[A, B], [0, I]].
inline void zoh_series(const MatrixXd& Ac, const MatrixXd& Bc, double dt, MatrixXd& A,
                       MatrixXd& B) {
  const int n = static_cast<int>(Ac.rows());
  const int m = static_cast<int>(Bc.cols());
  MatrixXd aug = MatrixXd::Zero(n + m, n + m);
  aug.topLeftCorner(n, n) = Ac * dt;
  aug.topRightCorner(n, m) = Bc * dt;
  MatrixXd E = series_expm(aug);
  A = E.topLeftCorner(n, n);
  B = E.topRightCorner(n, m);
}

}  // namespace oracle

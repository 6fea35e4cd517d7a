#pragma once

#include <vector>

#include "hjlab/linalg.hpp"

namespace hjlab {

/// Orthogonal decomposition R^N = E_0 + ... + E_kappa adapted to (A, P0).
struct KalmanFrame {
  int N = 0;
  int kappa = 0;
  std::vector<int> n;         ///< dim E_j
  std::vector<int> offset;    ///< first column of block j in Q
  Mat Q;                      ///< orthonormal, column blocks span E_j
  std::vector<Mat> P;         ///< orthogonal projections onto E_j
  Mat A0;                     ///< principal part

  Mat block(int j) const { return Q.middleCols(offset[j], n[j]); }
  /// sum_j j*n_j
  int weighted_dim() const;
  /// stratum index of adapted coordinate k
  int stratum_of(int k) const;
};

/// Drift matrix, control projection and the frame built from them.
struct DriftBundle {
  Mat A;
  Mat P0;
  KalmanFrame frame;
};

struct RankInfo {
  int rank = 0;
  Vec singular_values;
  double threshold = 0;
  /// min(smallest kept / threshold, threshold / largest dropped)
  double gap = 0;
};

RankInfo kalman_rank_info(const Mat& A, const Mat& P0, int K);

bool check_kalman_rank(const Mat& A, const Mat& P0, int K);

KalmanFrame build_frame(const Mat& A, const Mat& P0);

DriftBundle make_bundle(const Mat& A, const Mat& P0);

/// A_h = sum_j sum_{i <= min(kappa, j+1)} h^{j+1-i} P_i A P_j.
Mat rescaled_drift(const KalmanFrame& frame, const Mat& A, double h);

/// e^{tau A0}; A0 is nilpotent so the series is finite.
Mat principal_flow(const KalmanFrame& frame, double tau);

/// Remainder R_A(tau; h) with e^{tau A_h} = e^{tau A0} + R_A(tau; h).
Mat flow_remainder_RA(const KalmanFrame& frame, const Mat& A, double tau, double h,
                      double tol = 1e-15);

/// e^{r tau A_h}, cross-checked against S(r)(e^{tau A0}+R_A(tau;hr))S(r)^{-1}.
Mat flow_matrix(const KalmanFrame& frame, const Mat& A, double r, double tau, double h);

/// Relative deviation between the two routes of flow_matrix.
double flow_identity_deviation(const KalmanFrame& frame, const Mat& A, double r, double tau,
                               double h);

}  // namespace hjlab

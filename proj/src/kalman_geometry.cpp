#include "hjlab/kalman_geometry.hpp"

#include <cmath>

#include "hjlab/errors.hpp"
#include "hjlab/scaling.hpp"

namespace hjlab {

namespace {

constexpr double kRankRel = 1e-10;
// singular values within this factor of the threshold are refused
constexpr double kAmbiguity = 1e3;

void require_square(const Mat& A, const Mat& P0) {
  if (A.rows() != A.cols() || P0.rows() != P0.cols() || A.rows() != P0.rows() || A.rows() == 0)
    throw InvalidInput("matrices must be square and of equal size");
  if (!is_projection(P0, 1e-10)) throw InvalidInput("P0 is not an orthogonal projection");
}

void fix_sign(Eigen::Ref<Vec> v) {
  Eigen::Index k;
  v.cwiseAbs().maxCoeff(&k);
  if (v(k) < 0) v = -v;
}

double rank_gap(const Vec& s, double thr, int rank) {
  double gap = std::numeric_limits<double>::infinity();
  if (rank > 0) gap = std::min(gap, s(rank - 1) / thr);
  if (rank < s.size() && s(rank) > 0) gap = std::min(gap, thr / s(rank));
  return gap;
}

}  // namespace

int KalmanFrame::weighted_dim() const {
  int s = 0;
  for (int j = 0; j <= kappa; ++j) s += j * n[j];
  return s;
}

int KalmanFrame::stratum_of(int k) const {
  for (int j = 0; j <= kappa; ++j)
    if (k < offset[j] + n[j]) return j;
  throw InvalidInput("coordinate index out of range");
}

RankInfo kalman_rank_info(const Mat& A, const Mat& P0, int K) {
  require_square(A, P0);
  if (K < 0) throw InvalidInput("K must be non-negative");
  const Eigen::Index N = A.rows();
  Mat stacked(N, N * (K + 1));
  Mat blk = P0;
  for (int k = 0; k <= K; ++k) {
    stacked.middleCols(k * N, N) = blk;
    blk = A * blk;
  }
  Eigen::JacobiSVD<Mat> svd(stacked);
  RankInfo info;
  info.singular_values = svd.singularValues();
  const double smax = info.singular_values.size() ? info.singular_values(0) : 0.0;
  info.threshold = kRankRel * smax;
  for (Eigen::Index i = 0; i < info.singular_values.size(); ++i)
    if (info.singular_values(i) > info.threshold) ++info.rank;
  info.gap = rank_gap(info.singular_values, info.threshold, info.rank);
  return info;
}

bool check_kalman_rank(const Mat& A, const Mat& P0, int K) {
  RankInfo info = kalman_rank_info(A, P0, K);
  if (info.gap < kAmbiguity)
    throw RankAmbiguous("Kalman matrix rank is ambiguous at the 1e-10 threshold", info.gap);
  return info.rank == A.rows();
}

KalmanFrame build_frame(const Mat& A, const Mat& P0) {
  require_square(A, P0);
  const int N = static_cast<int>(A.rows());
  const double scale = std::max(norm2(A), 1.0);
  std::vector<Mat> blocks{projection_range(P0)};
  if (blocks[0].cols() == 0) throw NotControllable("P0 has rank zero");
  for (Eigen::Index c = 0; c < blocks[0].cols(); ++c) fix_sign(blocks[0].col(c));
  int dim = static_cast<int>(blocks[0].cols());
  Mat V = blocks[0];
  while (dim < N) {
    Mat M = A * blocks.back();
    M -= V * (V.transpose() * M);
    Eigen::JacobiSVD<Mat> svd(M, Eigen::ComputeThinU);
    const Vec& s = svd.singularValues();
    const double thr = kRankRel * scale;
    int r = 0;
    for (Eigen::Index i = 0; i < s.size(); ++i)
      if (s(i) > thr) ++r;
    const double gap = rank_gap(s, thr, r);
    if (gap < kAmbiguity)
      throw RankAmbiguous("stratum rank is ambiguous at the 1e-10 threshold", gap);
    if (r == 0) throw NotControllable("Kalman rank condition fails");
    Mat U = svd.matrixU().leftCols(r);
    // re-orthogonalize against V once more for accuracy
    U -= V * (V.transpose() * U);
    Eigen::HouseholderQR<Mat> qr(U);
    Mat Uq = qr.householderQ() * Mat::Identity(N, r);
    for (int c = 0; c < r; ++c) fix_sign(Uq.col(c));
    blocks.push_back(Uq);
    Mat Vn(N, dim + r);
    Vn << V, Uq;
    V = Vn;
    dim += r;
  }
  KalmanFrame f;
  f.N = N;
  f.kappa = static_cast<int>(blocks.size()) - 1;
  f.Q = V;
  int off = 0;
  for (const Mat& b : blocks) {
    f.n.push_back(static_cast<int>(b.cols()));
    f.offset.push_back(off);
    off += static_cast<int>(b.cols());
    f.P.push_back(b * b.transpose());
  }
  f.A0 = Mat::Zero(N, N);
  for (int j = 0; j < f.kappa; ++j) f.A0 += f.P[j + 1] * A * f.P[j];
  return f;
}

DriftBundle make_bundle(const Mat& A, const Mat& P0) { return {A, P0, build_frame(A, P0)}; }

Mat rescaled_drift(const KalmanFrame& frame, const Mat& A, double h) {
  if (h == 0.0) return frame.A0;
  Mat Ah = Mat::Zero(frame.N, frame.N);
  for (int j = 0; j <= frame.kappa; ++j)
    for (int i = 0; i <= std::min(frame.kappa, j + 1); ++i)
      Ah += std::pow(h, j + 1 - i) * (frame.P[i] * A * frame.P[j]);
  return Ah;
}

Mat principal_flow(const KalmanFrame& frame, double tau) {
  Mat E = Mat::Identity(frame.N, frame.N);
  Mat term = E;
  for (int k = 1; k <= frame.kappa; ++k) {
    term = term * frame.A0 * (tau / k);
    E += term;
  }
  return E;
}

Mat flow_remainder_RA(const KalmanFrame& frame, const Mat& A, double tau, double h, double tol) {
  const int N = frame.N, K = frame.kappa;
  Mat R = Mat::Zero(N, N);
  if (h == 0.0) return R;
  const double a = norm2(A);
  const double hb = std::max(1.0, std::abs(h));
  Mat Al = Mat::Identity(N, N);
  double coef = 1.0;  // tau^l / l!
  double bound = 1.0; // ||A||^l / l!
  for (int l = 1;; ++l) {
    Al = Al * A;
    coef *= tau / l;
    bound *= a / l;
    for (int i = 0; i <= K; ++i)
      for (int j = 0; j <= K; ++j) {
        const int m = l - i + j;
        if (m < 1) continue;
        R += (coef * std::pow(h, m)) * (frame.P[i] * Al * frame.P[j]);
      }
    // every term of order >= l+1 is dominated by hb^{l+1+K} ||A||^{l+1}/(l+1)!
    if (l > 2 && bound * a / (l + 1) * std::pow(hb, l + 1 + K) < tol) break;
    if (l > 400) break;
  }
  return R;
}

double flow_identity_deviation(const KalmanFrame& frame, const Mat& A, double r, double tau,
                               double h) {
  const Mat direct = expm(rescaled_drift(frame, A, h) * (r * tau));
  const Mat S = scale_matrix_S(frame, r);
  const Mat Sinv = scale_matrix_S(frame, 1.0 / r);
  const Mat series = S * (principal_flow(frame, tau) + flow_remainder_RA(frame, A, tau, h * r)) * Sinv;
  return (direct - series).norm() / std::max(direct.norm(), 1e-300);
}

Mat flow_matrix(const KalmanFrame& frame, const Mat& A, double r, double tau, double h) {
  if (r == 0.0) throw InvalidInput("flow_matrix: r must be nonzero");
  const double dev = flow_identity_deviation(frame, A, r, tau, h);
  if (!(dev <= 1e-8))
    throw InternalConsistency("flow representation disagrees with direct exponential");
  return expm(rescaled_drift(frame, A, h) * (r * tau));
}

}  // namespace hjlab

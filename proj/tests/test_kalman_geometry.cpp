#include <gtest/gtest.h>

#include "hjlab/kalman_geometry.hpp"
#include "hjlab/scaling.hpp"
#include "test_support.hpp"

namespace hjlab {
namespace {

using testing::kolmogorov_A;
using testing::kolmogorov_P0;

// Kalman matrix [e1 | e2] has rank 2.
TEST(KalmanRank, KolmogorovK1) { EXPECT_TRUE(check_kalman_rank(kolmogorov_A(), kolmogorov_P0(), 1)); }

TEST(KalmanRank, FullProjection) {
  std::mt19937_64 rng(1);
  EXPECT_TRUE(check_kalman_rank(testing::random_matrix(rng, 4, 4), Mat::Identity(4, 4), 0));
}

TEST(KalmanRank, ZeroDriftFails) {
  EXPECT_FALSE(check_kalman_rank(Mat::Zero(2, 2), kolmogorov_P0(), 5));
}

TEST(KalmanRank, RejectsBadInput) {
  Mat P(2, 2);
  P << 1, 1, 0, 0;
  EXPECT_THROW(check_kalman_rank(kolmogorov_A(), P, 1), InvalidInput);
  EXPECT_THROW(check_kalman_rank(Mat::Zero(2, 3), kolmogorov_P0(), 1), InvalidInput);
}

TEST(KalmanRank, NearDeficientIsRefused) {
  Mat A = kolmogorov_A();
  A(1, 0) = 1e-10;
  EXPECT_THROW(build_frame(A, kolmogorov_P0()), RankAmbiguous);
}

TEST(BuildFrame, Kolmogorov) {
  KalmanFrame f = build_frame(kolmogorov_A(), kolmogorov_P0());
  EXPECT_EQ(f.kappa, 1);
  ASSERT_EQ(f.n.size(), 2u);
  EXPECT_EQ(f.n[0], 1);
  EXPECT_EQ(f.n[1], 1);
  EXPECT_NEAR((f.Q - Mat::Identity(2, 2)).norm(), 0.0, 1e-14);
  EXPECT_NEAR((f.A0 - kolmogorov_A()).norm(), 0.0, 1e-14);
}

TEST(BuildFrame, FullProjection) {
  std::mt19937_64 rng(2);
  KalmanFrame f = build_frame(testing::random_matrix(rng, 3, 3), Mat::Identity(3, 3));
  EXPECT_EQ(f.kappa, 0);
  EXPECT_EQ(f.n[0], 3);
  EXPECT_EQ(f.A0.norm(), 0.0);
}

TEST(BuildFrame, NotControllable) {
  EXPECT_THROW(build_frame(Mat::Zero(2, 2), kolmogorov_P0()), NotControllable);
}

TEST(BuildFrame, RandomInvariants) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 1000; ++trial) {
    DriftBundle b = testing::random_bundle(rng);
    const KalmanFrame& f = b.frame;
    const int N = f.N;
    int total = 0;
    Mat sum = Mat::Zero(N, N);
    for (int j = 0; j <= f.kappa; ++j) {
      total += f.n[j];
      sum += f.P[j];
      ASSERT_LT((f.P[j] * f.P[j] - f.P[j]).norm(), 1e-10);
      ASSERT_LT((f.P[j] - f.P[j].transpose()).norm(), 1e-10);
      for (int i = 0; i < j; ++i) ASSERT_LT((f.P[i] * f.P[j]).norm(), 1e-10);
    }
    ASSERT_EQ(total, N);
    ASSERT_LT((sum - Mat::Identity(N, N)).norm(), 1e-10);
    ASSERT_LT((f.Q.transpose() * f.Q - Mat::Identity(N, N)).norm(), 1e-10);
    ASSERT_LT((f.P[0] - b.P0).norm(), 1e-10);
    // V_k matches the Kalman filtration
    Mat Vk = f.P[0];
    Mat blk = b.P0;
    Mat stacked = b.P0;
    for (int k = 1; k <= f.kappa; ++k) {
      Vk += f.P[k];
      blk = b.A * blk;
      Mat s(N, stacked.cols() + N);
      s << stacked, blk;
      stacked = s;
      // columns of the Kalman matrix lie in V_k and span it
      ASSERT_LT(((Mat::Identity(N, N) - Vk) * stacked).norm(), 1e-8 * stacked.norm());
      Eigen::JacobiSVD<Mat> svd(stacked);
      int r = 0;
      for (Eigen::Index i = 0; i < svd.singularValues().size(); ++i)
        if (svd.singularValues()(i) > 1e-10 * svd.singularValues()(0)) ++r;
      int dimV = 0;
      for (int j = 0; j <= k; ++j) dimV += f.n[j];
      ASSERT_EQ(r, dimV);
    }
    // block form and ranks of the subdiagonal blocks
    for (int k = 0; k <= f.kappa; ++k)
      for (int i = k + 2; i <= f.kappa; ++i) ASSERT_LT((f.P[i] * b.A * f.P[k]).norm(), 1e-8 * b.A.norm());
    for (int j = 1; j <= f.kappa; ++j) {
      Mat blk2 = f.block(j).transpose() * b.A * f.block(j - 1);
      Eigen::JacobiSVD<Mat> svd(blk2);
      int r = 0;
      for (Eigen::Index i = 0; i < svd.singularValues().size(); ++i)
        if (svd.singularValues()(i) > 1e-10 * b.A.norm()) ++r;
      ASSERT_EQ(r, f.n[j]);
    }
    // nilpotency
    Mat pw = Mat::Identity(N, N);
    for (int k = 0; k <= f.kappa; ++k) pw = pw * f.A0;
    ASSERT_LT(pw.norm(), 1e-10 * std::pow(std::max(1.0, f.A0.norm()), f.kappa + 1));
    // minimal kappa agrees with the rank test
    int kmin = 0;
    while (!check_kalman_rank(b.A, b.P0, kmin)) ++kmin;
    ASSERT_EQ(kmin, f.kappa);
  }
}

TEST(RescaledDrift, KolmogorovInvariant) {
  KalmanFrame f = build_frame(kolmogorov_A(), kolmogorov_P0());
  for (double h : {0.0, 0.1, 1.0, 7.0})
    EXPECT_NEAR((rescaled_drift(f, kolmogorov_A(), h) - kolmogorov_A()).norm(), 0.0, 1e-14);
}

TEST(RescaledDrift, DiagonalBlockPicksH) {
  Mat A(2, 2);
  A << 3, 0, 1, 0;
  KalmanFrame f = build_frame(A, kolmogorov_P0());
  Mat expect(2, 2);
  expect << 0.3, 0, 1, 0;
  EXPECT_NEAR((rescaled_drift(f, A, 0.1) - expect).norm(), 0.0, 1e-14);
  EXPECT_NEAR((rescaled_drift(f, A, 0.0) - f.A0).norm(), 0.0, 0.0);
}

TEST(RescaledDrift, MatchesConjugation) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    DriftBundle b = testing::random_bundle(rng);
    for (double h : {0.1, 0.5, 1.0, 3.0}) {
      Mat conj = h * scale_matrix_S(b.frame, 1.0 / h) * b.A * scale_matrix_S(b.frame, h);
      ASSERT_LT((rescaled_drift(b.frame, b.A, h) - conj).norm(), 1e-10 * std::max(1.0, conj.norm()));
    }
  }
}

TEST(RescaledDrift, LinearApproachToPrincipalPart) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    DriftBundle b = testing::random_bundle(rng);
    double prev = std::numeric_limits<double>::infinity();
    for (double h = 1.0; h > 1e-3; h *= 0.5) {
      const double c = (rescaled_drift(b.frame, b.A, h) - b.frame.A0).norm() / h;
      ASSERT_LE(c, prev * (1 + 1e-12));
      prev = c;
    }
  }
}

TEST(RescaledDrift, PrincipalPartScaleInvariant) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    DriftBundle b = testing::random_bundle(rng);
    for (double h : {0.1, 1.0, 10.0}) {
      Mat conj = h * scale_matrix_S(b.frame, 1.0 / h) * b.frame.A0 * scale_matrix_S(b.frame, h);
      ASSERT_LT((conj - b.frame.A0).norm(), 1e-12 * std::max(1.0, b.frame.A0.norm()));
    }
  }
}

TEST(FlowRemainder, ZeroAtHZero) {
  std::mt19937_64 rng(7);
  DriftBundle b = testing::random_bundle(rng);
  EXPECT_EQ(flow_remainder_RA(b.frame, b.A, 0.5, 0.0).norm(), 0.0);
}

TEST(FlowRemainder, KolmogorovVanishes) {
  KalmanFrame f = build_frame(kolmogorov_A(), kolmogorov_P0());
  EXPECT_LT(flow_remainder_RA(f, kolmogorov_A(), 1.0, 0.5).norm(), 1e-16);
}

// Independent exponential: Taylor series after scaling by 2^-s, then squaring.
Mat taylor_expm(const Mat& A) {
  int s = 0;
  double nrm = A.lpNorm<Eigen::Infinity>();
  while (nrm > 0.5) {
    nrm /= 2;
    ++s;
  }
  const Mat B = A / std::pow(2.0, s);
  Mat E = Mat::Identity(A.rows(), A.cols()), term = E;
  for (int k = 1; k < 30; ++k) {
    term = term * B / k;
    E += term;
  }
  for (int i = 0; i < s; ++i) E = E * E;
  return E;
}

TEST(FlowRemainder, RandomThreeByThree) {
  std::mt19937_64 rng(8);
  int done = 0;
  while (done < 20) {
    Mat A = testing::random_matrix(rng, 3, 3);
    Mat P0 = testing::random_projection(rng, 3, 1);
    KalmanFrame f;
    try {
      f = build_frame(A, P0);
    } catch (const Error&) {
      continue;
    }
    const double tau = 0.7, h = 0.2, r = 0.3;
    Mat M = flow_remainder_RA(f, A, tau, h * r);
    Mat lhs = scale_matrix_S(f, r) * (principal_flow(f, tau) + M) * scale_matrix_S(f, 1 / r);
    Mat rhs = taylor_expm(rescaled_drift(f, A, h) * (r * tau));
    ASSERT_LE((lhs - rhs).norm(), 1e-8);
    ++done;
  }
}

TEST(FlowMatrix, Basics) {
  KalmanFrame f = build_frame(kolmogorov_A(), kolmogorov_P0());
  EXPECT_NEAR((flow_matrix(f, kolmogorov_A(), 1.0, 0.0, 0.3) - Mat::Identity(2, 2)).norm(), 0, 1e-15);
  Mat expect(2, 2);
  expect << 1, 0, 1, 1;
  EXPECT_NEAR((flow_matrix(f, kolmogorov_A(), 1.0, 1.0, 0.0) - expect).norm(), 0, 1e-14);
  EXPECT_THROW(flow_matrix(f, kolmogorov_A(), 0.0, 1.0, 0.0), InvalidInput);
}

TEST(FlowMatrix, RandomFourByFour) {
  std::mt19937_64 rng(9);
  int done = 0;
  while (done < 20) {
    Mat A = testing::random_matrix(rng, 4, 4);
    Mat P0 = testing::random_projection(rng, 4, 2);
    KalmanFrame f;
    try {
      f = build_frame(A, P0);
    } catch (const Error&) {
      continue;
    }
    EXPECT_NO_THROW(flow_matrix(f, A, 0.25, 0.6, 0.8));
    ++done;
  }
}

}  // namespace
}  // namespace hjlab

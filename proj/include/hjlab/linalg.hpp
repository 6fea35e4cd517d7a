#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

namespace hjlab {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

/// Dense matrix exponential (Pade scaling and squaring).
Mat expm(const Mat& A);

/// Returns (e^{dt A}, int_0^dt e^{s A} ds).
std::pair<Mat, Mat> expm_with_integral(const Mat& A, double dt);

/// Spectral norm.
double norm2(const Mat& A);

bool is_projection(const Mat& P, double tol = 1e-10);

/// Orthonormal basis of Im(P) for an orthogonal projection P.
Mat projection_range(const Mat& P);

/// Quadrature rule: nodes and weights.
struct Rule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

/// Composite 8-point Gauss-Legendre on [a,b] with m equal panels.
Rule composite_gauss(double a, double b, int m);

/// 8-point Gauss-Legendre on panels [1-2^-k, 1-2^-(k+1)], k < levels, mapped
/// onto [a,b] so that the panels accumulate at b. The uncovered tail has
/// length (b-a)*2^-levels.
Rule graded_gauss(double a, double b, int levels);

/// Ordinary least squares y = slope*x + intercept.
struct LineFit {
  double slope = 0;
  double intercept = 0;
  double slope_stderr = 0;
  int count = 0;
};

LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace hjlab

#include "hjlab/linalg.hpp"

#include <unsupported/Eigen/MatrixFunctions>
#include <boost/math/quadrature/gauss.hpp>
#include <cmath>

#include "hjlab/errors.hpp"

namespace hjlab {

Mat expm(const Mat& A) { return A.exp(); }

std::pair<Mat, Mat> expm_with_integral(const Mat& A, double dt) {
  const Eigen::Index n = A.rows();
  Mat big = Mat::Zero(2 * n, 2 * n);
  big.topLeftCorner(n, n) = A * dt;
  big.topRightCorner(n, n) = Mat::Identity(n, n) * dt;
  Mat e = big.exp();
  return {e.topLeftCorner(n, n), e.topRightCorner(n, n)};
}

double norm2(const Mat& A) {
  if (A.size() == 0) return 0.0;
  Eigen::JacobiSVD<Mat> svd(A);
  return svd.singularValues()(0);
}

bool is_projection(const Mat& P, double tol) {
  if (P.rows() != P.cols()) return false;
  return (P * P - P).norm() <= tol * std::max(1.0, P.norm()) &&
         (P - P.transpose()).norm() <= tol * std::max(1.0, P.norm());
}

Mat projection_range(const Mat& P) {
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (P + P.transpose()));
  std::vector<int> keep;
  for (int i = static_cast<int>(P.rows()) - 1; i >= 0; --i)
    if (es.eigenvalues()(i) > 0.5) keep.push_back(i);
  Mat U(P.rows(), static_cast<Eigen::Index>(keep.size()));
  for (size_t k = 0; k < keep.size(); ++k) U.col(k) = es.eigenvectors().col(keep[k]);
  return U;
}

namespace {

void append_panel(Rule& rule, double a, double b) {
  using G = boost::math::quadrature::gauss<double, 8>;
  const auto& x = G::abscissa();
  const auto& w = G::weights();
  const double c = 0.5 * (a + b), h = 0.5 * (b - a);
  for (size_t i = 0; i < x.size(); ++i) {
    if (x[i] == 0.0) {
      rule.nodes.push_back(c);
      rule.weights.push_back(h * w[i]);
      continue;
    }
    rule.nodes.push_back(c - h * x[i]);
    rule.weights.push_back(h * w[i]);
    rule.nodes.push_back(c + h * x[i]);
    rule.weights.push_back(h * w[i]);
  }
}

}  // namespace

Rule composite_gauss(double a, double b, int m) {
  if (m < 1) throw InvalidInput("composite_gauss: need at least one panel");
  Rule rule;
  const double len = (b - a) / m;
  for (int k = 0; k < m; ++k) append_panel(rule, a + k * len, a + (k + 1) * len);
  return rule;
}

Rule graded_gauss(double a, double b, int levels) {
  Rule rule;
  double lo = 0.0, step = 0.5;
  for (int k = 0; k < levels; ++k) {
    append_panel(rule, a + (b - a) * lo, a + (b - a) * (lo + step));
    lo += step;
    step *= 0.5;
  }
  return rule;
}

LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  LineFit f;
  const size_t n = x.size();
  f.count = static_cast<int>(n);
  if (n < 2) return f;
  double mx = 0, my = 0;
  for (size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0;
  for (size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (sxx == 0) return f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  if (n > 2) {
    double ss = 0;
    for (size_t i = 0; i < n; ++i) {
      const double r = y[i] - f.intercept - f.slope * x[i];
      ss += r * r;
    }
    f.slope_stderr = std::sqrt(ss / (n - 2) / sxx);
  }
  return f;
}

}  // namespace hjlab

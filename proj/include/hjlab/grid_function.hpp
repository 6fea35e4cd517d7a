#pragma once

#include <string>
#include <vector>

#include "hjlab/kalman_geometry.hpp"
#include "hjlab/scaling.hpp"

namespace hjlab {

/// Tensor box in adapted coordinates times a uniform time grid.
struct GridSpec {
  Vec lo, hi;
  std::vector<int> n;  ///< nodes per axis, each >= 2
  double t0 = 0;
  double t1 = 1;
  int nt = 1;  ///< number of time steps
};

/// Box [-e_j, e_j] on stratum j axes, with `nodes` per axis.
GridSpec box_spec(const KalmanFrame& frame, const std::vector<double>& extent_per_stratum,
                  int nodes, double t0, double t1, int nt);

/// Space-time samples with multilinear interpolation. Spatial coordinates are
/// adapted coordinates z = Q^T x of the frame.
class GridFunction {
 public:
  GridFunction() = default;
  GridFunction(const GridSpec& spec, const DriftBundle& drift, double h);

  const GridSpec& spec() const { return spec_; }
  const DriftBundle& drift() const { return drift_; }
  int dim() const { return static_cast<int>(spec_.n.size()); }
  int slices() const { return spec_.nt + 1; }
  size_t slice_size() const { return slice_size_; }
  double dt() const { return dt_; }
  const Vec& step() const { return step_; }
  double time(int k) const { return spec_.t0 + k * dt_; }

  double& at(int k, size_t idx) { return values_[k * slice_size_ + idx]; }
  double at(int k, size_t idx) const { return values_[k * slice_size_ + idx]; }
  double* slice(int k) { return values_.data() + k * slice_size_; }
  const double* slice(int k) const { return values_.data() + k * slice_size_; }
  const std::vector<double>& values() const { return values_; }
  std::vector<double>& values() { return values_; }

  /// Adapted coordinates of node idx.
  Vec node(size_t idx) const;
  /// Per-axis integer index of node idx.
  std::vector<int> index(size_t idx) const;
  size_t flat(const std::vector<int>& index) const;
  Vec physical(const Vec& z) const { return drift_.frame.Q * z; }
  Vec adapted(const Vec& x) const { return drift_.frame.Q.transpose() * x; }

  /// Multilinear interpolation on slice k; points outside the box are
  /// projected onto it.
  double interp_slice(int k, const Vec& z) const;
  double interp_slice(const double* data, const double* z) const;
  /// Interpolation in (t, z) with linear weights in time.
  double eval_adapted(double t, const Vec& z) const;
  double eval(double t, const Vec& x) const { return eval_adapted(t, adapted(x)); }

  bool inside_box(const Vec& z, double margin_cells = 0) const;

  /// Drift scale of the equation these values refer to.
  double h = 0;
  /// Multiplier applied to ||f||_{L^p} by rescaling.
  double lp_multiplier = 1;
  double source_p = 0;  ///< p of the attached source, 0 if none
  /// Fraction of accepted minimizers at the control bound.
  double saturation_fraction = 0;
  bool saturated = false;
  std::vector<std::string> warnings;

 private:
  GridSpec spec_;
  DriftBundle drift_;
  double dt_ = 0;
  Vec step_;
  std::vector<size_t> stride_;
  size_t slice_size_ = 0;
  std::vector<double> values_;
};

/// Matrix M(t) = diag(1/r^j) Q^T e^{-t A_h} Q so that the cylinder ratio of
/// adapted point z is |M(t) z| / r^gamma.
Mat cylinder_ratio_matrix(const Cylinder& cyl, double t);

}  // namespace hjlab

#include "hjlab/grid_function.hpp"

#include <algorithm>
#include <cmath>

#include "hjlab/errors.hpp"

namespace hjlab {

GridSpec box_spec(const KalmanFrame& frame, const std::vector<double>& extent_per_stratum,
                  int nodes, double t0, double t1, int nt) {
  if (static_cast<int>(extent_per_stratum.size()) != frame.kappa + 1)
    throw GridSpecError("one extent per stratum is required");
  GridSpec s;
  s.lo.resize(frame.N);
  s.hi.resize(frame.N);
  s.n.assign(frame.N, nodes);
  for (int k = 0; k < frame.N; ++k) {
    const double e = extent_per_stratum[frame.stratum_of(k)];
    s.lo(k) = -e;
    s.hi(k) = e;
  }
  s.t0 = t0;
  s.t1 = t1;
  s.nt = nt;
  return s;
}

GridFunction::GridFunction(const GridSpec& spec, const DriftBundle& drift, double h_)
    : h(h_), spec_(spec), drift_(drift) {
  const int d = static_cast<int>(spec.n.size());
  if (d != drift.frame.N || spec.lo.size() != d || spec.hi.size() != d)
    throw GridSpecError("grid dimension does not match the frame");
  if (d > 4) throw GridSpecError("grids are limited to four spatial dimensions");
  if (spec.nt < 1 || !(spec.t1 > spec.t0)) throw GridSpecError("time grid is empty");
  step_.resize(d);
  stride_.resize(d);
  size_t total = 1;
  for (int k = 0; k < d; ++k) {
    if (spec.n[k] < 2 || !(spec.hi(k) > spec.lo(k))) throw GridSpecError("degenerate axis");
    step_(k) = (spec.hi(k) - spec.lo(k)) / (spec.n[k] - 1);
    stride_[k] = total;
    total *= spec.n[k];
  }
  slice_size_ = total;
  dt_ = (spec.t1 - spec.t0) / spec.nt;
  values_.assign(total * (spec.nt + 1), 0.0);
}

Vec GridFunction::node(size_t idx) const {
  Vec z(dim());
  for (int k = 0; k < dim(); ++k) {
    const int i = static_cast<int>((idx / stride_[k]) % spec_.n[k]);
    z(k) = spec_.lo(k) + i * step_(k);
  }
  return z;
}

std::vector<int> GridFunction::index(size_t idx) const {
  std::vector<int> out(dim());
  for (int k = 0; k < dim(); ++k) out[k] = static_cast<int>((idx / stride_[k]) % spec_.n[k]);
  return out;
}

size_t GridFunction::flat(const std::vector<int>& index) const {
  size_t idx = 0;
  for (int k = 0; k < dim(); ++k) idx += index[k] * stride_[k];
  return idx;
}

double GridFunction::interp_slice(const double* data, const double* z) const {
  const int d = dim();
  size_t base = 0;
  double w[16];
  size_t off[16];
  for (int k = 0; k < d; ++k) {
    double s = (z[k] - spec_.lo(k)) / step_(k);
    s = std::clamp(s, 0.0, static_cast<double>(spec_.n[k] - 1));
    int i = static_cast<int>(s);
    if (i > spec_.n[k] - 2) i = spec_.n[k] - 2;
    w[k] = s - i;
    off[k] = stride_[k];
    base += i * stride_[k];
  }
  double acc = 0;
  const int corners = 1 << d;
  for (int c = 0; c < corners; ++c) {
    double weight = 1;
    size_t idx = base;
    for (int k = 0; k < d; ++k) {
      if (c & (1 << k)) {
        weight *= w[k];
        idx += off[k];
      } else {
        weight *= 1 - w[k];
      }
    }
    if (weight != 0) acc += weight * data[idx];
  }
  return acc;
}

double GridFunction::interp_slice(int k, const Vec& z) const {
  if (z.size() != dim()) throw DomainMismatch("point dimension does not match the grid");
  return interp_slice(slice(k), z.data());
}

double GridFunction::eval_adapted(double t, const Vec& z) const {
  double s = std::clamp((t - spec_.t0) / dt_, 0.0, static_cast<double>(spec_.nt));
  int k = std::min(static_cast<int>(s), spec_.nt - 1);
  const double w = s - k;
  const double a = interp_slice(k, z);
  if (w == 0) return a;
  return (1 - w) * a + w * interp_slice(k + 1, z);
}

bool GridFunction::inside_box(const Vec& z, double margin_cells) const {
  for (int k = 0; k < dim(); ++k) {
    const double m = margin_cells * step_(k);
    if (z(k) < spec_.lo(k) + m - 1e-12 || z(k) > spec_.hi(k) - m + 1e-12) return false;
  }
  return true;
}

Mat cylinder_ratio_matrix(const Cylinder& cyl, double t) {
  const KalmanFrame& f = cyl.frame;
  Mat M = f.Q.transpose() * expm(cyl.Ah * (-t)) * f.Q;
  for (int k = 0; k < f.N; ++k) M.row(k) /= std::pow(cyl.r, f.stratum_of(k));
  return M;
}

}  // namespace hjlab

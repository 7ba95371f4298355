#include "mfsde/sensitivity.hpp"

#include <cmath>
#include <stdexcept>

namespace mfsde {

JacobianFlow malliavin_derivative(const DriftSpec& drift, const PathBundle& bundle,
                                  std::size_t path, const MeasureFlow& flow, std::size_t s_index) {
  if (s_index >= bundle.grid.points())
    throw std::out_of_range("malliavin_derivative: anchor index out of range");
  if (flow.grid() != bundle.grid.times())
    throw std::invalid_argument("malliavin_derivative: flow/bundle grid mismatch");
  const int d = bundle.dim;
  JacobianFlow out;
  out.kind = JacobianKind::malliavin_from_s;
  out.anchor = s_index;
  out.grid = bundle.grid;
  out.dim = d;
  out.mats.reserve(bundle.grid.points() - s_index);
  out.mats.push_back(Mat::identity(d));
  Mat jac(d, d), prod(d, d);
  const double dt = bundle.grid.dt();
  for (std::size_t k = s_index; k < bundle.grid.steps; ++k) {
    spatial_jacobian_into(drift, bundle.grid.time(k), bundle.state(path, k), flow.at(k), jac);
    const Mat& cur = out.mats.back();
    Mat::mat_mul(jac, cur, prod);
    Mat next = cur;
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) next(i, j) += dt * prod(i, j);
    out.mats.push_back(std::move(next));
  }
  return out;
}

GradXbFlow::GradXbFlow(DriftSpec drift, TimeGrid grid, double h, std::vector<MeasureFlow> plus,
                       std::vector<MeasureFlow> minus)
    : drift_(std::move(drift)), grid_(grid), h_(h), plus_(std::move(plus)), minus_(std::move(minus)) {
  if (static_cast<int>(plus_.size()) != drift_.dim() || static_cast<int>(minus_.size()) != drift_.dim())
    throw std::invalid_argument("GradXbFlow: need one +/- flow per direction");
  if (!(h_ > 0.0)) throw std::invalid_argument("GradXbFlow: h must be positive");
}

void GradXbFlow::eval_into(std::size_t k, std::span<const double> y, Mat& out) const {
  const int d = drift_.dim();
  const double t = grid_.time(k);
  double bp[kMaxDim], bm[kMaxDim];
  for (int j = 0; j < d; ++j) {
    drift_.eval(t, y, plus_[static_cast<std::size_t>(j)].at(k), {bp, static_cast<std::size_t>(d)});
    drift_.eval(t, y, minus_[static_cast<std::size_t>(j)].at(k), {bm, static_cast<std::size_t>(d)});
    const double inv = 1.0 / (2.0 * h_);
    for (int i = 0; i < d; ++i) out(i, j) = (bp[i] - bm[i]) * inv;
  }
}

GradXbFlow grad_x_b(const DriftSpec& drift, std::span<const double> x0, const TimeGrid& grid,
                    std::size_t paths, double h, std::uint64_t seed, const PicardOptions& options) {
  if (!drift.metadata().law_lipschitz)
    throw std::invalid_argument("grad_x_b: drift '" + drift.name() +
                                "' must declare a law-Lipschitz constant");
  const int d = drift.dim();
  if (h <= 0.0) h = 1e-2 * std::max(1.0, norm(x0));
  std::vector<MeasureFlow> plus, minus;
  plus.reserve(static_cast<std::size_t>(d));
  minus.reserve(static_cast<std::size_t>(d));
  std::vector<double> shifted(x0.begin(), x0.end());
  for (int j = 0; j < d; ++j) {
    shifted[static_cast<std::size_t>(j)] = x0[j] + h;
    plus.push_back(picard_law_iteration(drift, shifted, grid, paths, seed, options).flow);
    shifted[static_cast<std::size_t>(j)] = x0[j] - h;
    minus.push_back(picard_law_iteration(drift, shifted, grid, paths, seed, options).flow);
    shifted[static_cast<std::size_t>(j)] = x0[j];
  }
  return GradXbFlow(drift, grid, h, std::move(plus), std::move(minus));
}

JacobianFlow first_variation(const DriftSpec& drift, const PathBundle& bundle, std::size_t path,
                             const MeasureFlow& flow, const GradXbFlow& gxb) {
  if (flow.grid() != bundle.grid.times())
    throw std::invalid_argument("first_variation: flow/bundle grid mismatch");
  if (gxb.grid() != bundle.grid)
    throw std::invalid_argument("first_variation: gxb grid mismatch");
  const int d = bundle.dim;
  JacobianFlow out;
  out.kind = JacobianKind::first_variation;
  out.anchor = 0;
  out.grid = bundle.grid;
  out.dim = d;
  out.mats.reserve(bundle.grid.points());
  out.mats.push_back(Mat::identity(d));
  Mat jac(d, d), src(d, d), prod(d, d);
  const double dt = bundle.grid.dt();
  for (std::size_t k = 0; k < bundle.grid.steps; ++k) {
    const auto y = bundle.state(path, k);
    spatial_jacobian_into(drift, bundle.grid.time(k), y, flow.at(k), jac);
    gxb.eval_into(k, y, src);
    const Mat& cur = out.mats.back();
    Mat::mat_mul(jac, cur, prod);
    Mat next = cur;
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) next(i, j) += dt * (prod(i, j) + src(i, j));
    out.mats.push_back(std::move(next));
  }
  return out;
}

double check_representation(const DriftSpec& drift, const PathBundle& bundle, std::size_t path,
                            const MeasureFlow& flow, const GradXbFlow& gxb, std::size_t s_index) {
  const std::size_t points = bundle.grid.points();
  if (s_index >= points) throw std::out_of_range("check_representation: s index out of range");
  const int d = bundle.dim;
  const double dt = bundle.grid.dt();
  const std::size_t steps = bundle.grid.steps;

  // Step factors I + J_k dt along the path.
  std::vector<Mat> factor(steps, Mat(d, d));
  Mat jac(d, d);
  for (std::size_t k = 0; k < steps; ++k) {
    spatial_jacobian_into(drift, bundle.grid.time(k), bundle.state(path, k), flow.at(k), jac);
    Mat& f = factor[k];
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) f(i, j) = (i == j ? 1.0 : 0.0) + dt * jac(i, j);
  }

  // Suffix products S_k = D_{t_k} X_T (Malliavin flow anchored at t_k).
  std::vector<Mat> suffix(points, Mat(d, d));
  suffix[steps] = Mat::identity(d);
  for (std::size_t k = steps; k-- > 0;) Mat::mat_mul(suffix[k + 1], factor[k], suffix[k]);

  const JacobianFlow fv = first_variation(drift, bundle, path, flow, gxb);

  // Left-point rule for the source integral, as everywhere else in the scheme.
  Mat acc(d, d), src(d, d), term(d, d);
  Mat::mat_mul(suffix[s_index], fv.at(s_index), acc);
  for (std::size_t k = s_index; k < steps; ++k) {
    gxb.eval_into(k, bundle.state(path, k), src);
    Mat::mat_mul(suffix[k], src, term);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) acc(i, j) += dt * term(i, j);
  }
  Mat res = fv.terminal();
  res -= acc;
  return res.frobenius();
}

}  // namespace mfsde

#pragma once

#include <cstdint>
#include <vector>

#include "mfsde/drift.hpp"
#include "mfsde/solver.hpp"

namespace mfsde {

enum class JacobianKind { first_variation, malliavin_from_s };

/// Time-indexed d x d matrices along one path: the first-variation process
/// (anchor 0, identity start) or the Malliavin derivative D_s X_t (identity at
/// the anchor index s, undefined before it).
struct JacobianFlow {
  JacobianKind kind = JacobianKind::first_variation;
  std::size_t anchor = 0;
  TimeGrid grid;
  int dim = 0;
  std::vector<Mat> mats;  // entry i corresponds to time index anchor + i

  const Mat& at(std::size_t k) const {
    if (k < anchor || k - anchor >= mats.size())
      throw std::out_of_range("JacobianFlow: time index outside the defined range");
    return mats[k - anchor];
  }
  const Mat& terminal() const { return mats.back(); }
};

/// Forward Euler for D_s X: D_{k+1} = D_k + grad_y b(t_k, X_k, mu_k) D_k dt,
/// D_s = I. A left-to-right product integral; the factors are applied in time
/// order and do NOT commute in general, so this is not exp(sum J dt).
JacobianFlow malliavin_derivative(const DriftSpec& drift, const PathBundle& bundle,
                                  std::size_t path, const MeasureFlow& flow, std::size_t s_index);

/// grad_x b(t_k, y, law(X_{t_k}^x)) via central differences of Picard measure
/// flows at x0 +/- h e_j (shared noise); columns are the x-directions.
/// Evaluation is lazy in y.
class GradXbFlow {
 public:
  GradXbFlow(DriftSpec drift, TimeGrid grid, double h, std::vector<MeasureFlow> plus,
             std::vector<MeasureFlow> minus);

  int dim() const { return drift_.dim(); }
  double step() const { return h_; }
  const TimeGrid& grid() const { return grid_; }

  void eval_into(std::size_t k, std::span<const double> y, Mat& out) const;
  Mat eval(std::size_t k, std::span<const double> y) const {
    Mat m(dim(), dim());
    eval_into(k, y, m);
    return m;
  }

 private:
  DriftSpec drift_;
  TimeGrid grid_;
  double h_;
  std::vector<MeasureFlow> plus_, minus_;  // one flow per x-direction
};

/// Builds the differenced flows with 2d Picard solves sharing one noise array.
/// h <= 0 selects the default 1e-2 * max(1, ||x0||).
GradXbFlow grad_x_b(const DriftSpec& drift, std::span<const double> x0, const TimeGrid& grid,
                    std::size_t paths, double h, std::uint64_t seed,
                    const PicardOptions& options = {});

/// Forward Euler for the first variation:
/// Z_{k+1} = Z_k + [grad_y b(t_k, X_k, mu_k) Z_k + gxb(t_k, X_k)] dt, Z_0 = I.
JacobianFlow first_variation(const DriftSpec& drift, const PathBundle& bundle, std::size_t path,
                             const MeasureFlow& flow, const GradXbFlow& gxb);

/// Frobenius residual of the flow decomposition
///   grad_x X_T ~ D_s X_T grad_x X_s + sum_{k>=s} D_{t_k} X_T gxb(t_k, X_k) dt
/// with the left-point rule for the time integral; O(dt) in general and zero
/// when the law term vanishes.
double check_representation(const DriftSpec& drift, const PathBundle& bundle, std::size_t path,
                            const MeasureFlow& flow, const GradXbFlow& gxb, std::size_t s_index);

}  // namespace mfsde

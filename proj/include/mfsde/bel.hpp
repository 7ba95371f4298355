#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mfsde/report.hpp"
#include "mfsde/sensitivity.hpp"
#include "mfsde/solver.hpp"
#include "mfsde/stats.hpp"

namespace mfsde {

/// Piecewise-constant weight a(t) on the grid with integral one; the free
/// parameter of the gradient representation. Renormalized at construction so
/// sum_k a(t_k) dt == 1 to machine precision.
class WeightFunction {
 public:
  static WeightFunction uniform(const TimeGrid& grid);
  /// a proportional to 1_{[0, tau)}; the front-loaded alternative.
  static WeightFunction indicator_front(const TimeGrid& grid, double tau);
  static WeightFunction piecewise(const TimeGrid& grid, std::vector<double> values);

  const std::string& kind() const { return kind_; }
  double at(std::size_t k) const { return a_[k]; }
  /// A(t_k) = sum_{l<k} a(t_l) dt (so A(t_0) = 0, A(t_M) = 1).
  double cumulative(std::size_t k) const { return cum_[k]; }
  std::size_t steps() const { return a_.size(); }

 private:
  WeightFunction(std::string kind, const TimeGrid& grid, std::vector<double> values);
  std::string kind_;
  std::vector<double> a_;    // one value per step
  std::vector<double> cum_;  // size steps + 1
};

/// The stochastic-integral weight of one path:
///   W_j = sum_k sum_i M_k[i][j] dB_i(k),
///   M_k = a(t_k) grad_x X_{t_k} + gxb(t_k, X_{t_k}) A(t_k),
/// a left-point Ito sum (adapted integrand, so E[W] = 0 holds discretely).
std::vector<double> bel_weight(const WeightFunction& a, const JacobianFlow& fv,
                               const std::vector<Mat>& gxb_along_path, const NoiseArray& noise,
                               std::size_t path);

struct BelOptions {
  PicardOptions picard;
  double fd_step = 0.0;   // <= 0: 1e-2 * max(1, ||x0||)
  int mollify_n = 64;     // smoothing index used when the drift is not spatially smooth
  int kernel_samples = 32;
};

struct GradientDiagnostics {
  std::vector<double> weight_mean;  // [weight_index * d + j]
  std::vector<double> weight_se;
  std::vector<double> picard_trace;
  double gxb_step = 0.0;
  int mollify_n = 0;  // 0 when the drift was used as-is
};

struct GradientResult {
  std::vector<EstimatorReport> reports;  // one per weight function
  GradientDiagnostics diagnostics;
};

/// Monte Carlo estimate of grad_x E[Phi(X_T^x)]: Picard flow, differenced-flow
/// gxb, per-path first variation, then (1/N) sum Phi(X_T) W. Spatially
/// non-smooth drifts are transparently replaced by their mollification for the
/// whole system. Several weight functions are evaluated on the shared paths.
GradientResult estimate_gradient_multi(const DriftSpec& drift, std::span<const double> x0,
                                       const TimeGrid& grid, std::size_t paths,
                                       std::span<const WeightFunction> weights,
                                       const Observable& phi, std::uint64_t seed,
                                       const BelOptions& options = {});

EstimatorReport estimate_gradient(const DriftSpec& drift, std::span<const double> x0,
                                  const TimeGrid& grid, std::size_t paths,
                                  const WeightFunction& a, const Observable& phi,
                                  std::uint64_t seed, const BelOptions& options = {});

struct GirsanovResult {
  EstimatorReport report;    // estimate of E[Phi(X_T^x)], method "girsanov"
  MeanSE exponential_stats;  // ensemble mean/SE of the stochastic exponential
};

/// E[Phi(B_T^x) E_T] with log E_T = sum_k b_k . dB_k - 1/2 sum_k ||b_k||^2 dt,
/// b_k = b(t_k, B^x_k, mu_k) along driftless paths built from the same stored
/// increments; mu is the Picard flow of the mean-field equation.
GirsanovResult girsanov_estimate(const DriftSpec& drift, std::span<const double> x0,
                                 const TimeGrid& grid, std::size_t paths, const Observable& phi,
                                 std::uint64_t seed, const PicardOptions& options = {});

struct PhiIntegrability {
  bool pass = false;
  double value = 0.0;           // quadrature of Phi^2 w_T over [-R, R]^d
  double shell_fraction = 0.0;  // contribution of the outer 10% band
  std::string message;
};

/// Tensor-grid quadrature of Phi(y)^2 exp(-||y||^2 / 4T) over [-R, R]^d with
/// R = 10 sqrt(T); passes iff the value is finite and the outer shell
/// contributes less than 1%. d <= 3.
PhiIntegrability check_phi_integrability(const Observable& phi, int dim, double horizon);

}  // namespace mfsde

#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "mfsde/linalg.hpp"
#include "mfsde/measure.hpp"

namespace mfsde {

/// Declared regularity of a drift; validated by randomized probes
/// (validate_drift_metadata) rather than trusted blindly.
struct DriftMetadata {
  std::optional<double> bound;             // ||b|| <= bound everywhere
  std::optional<double> linear_growth;     // ||b|| <= C (1 + ||y|| + K(mu, delta_0))
  std::optional<double> law_lipschitz;     // ||b(.,.,mu) - b(.,.,nu)|| <= L K(mu, nu)
  bool spatially_smooth = false;           // analytic spatial Jacobian available
  std::optional<std::string> modulus;      // tag naming the modulus of continuity
};

/// A drift coefficient b(t, y, mu) plus metadata. Evaluation is pure and
/// reentrant; specs are shared read-only across workers.
class DriftSpec {
 public:
  using Eval = std::function<void(double t, std::span<const double> y, const EmpiricalMeasure& mu,
                                  std::span<double> out)>;
  using Jacobian = std::function<void(double t, std::span<const double> y,
                                      const EmpiricalMeasure& mu, Mat& out)>;

  DriftSpec(std::string name, int dim, Eval eval, DriftMetadata meta, Jacobian analytic_jacobian = {});

  const std::string& name() const { return name_; }
  int dim() const { return dim_; }
  const DriftMetadata& metadata() const { return meta_; }
  bool has_analytic_jacobian() const { return static_cast<bool>(jacobian_); }

  /// Evaluates b; throws numeric_error-style runtime_error naming the drift and
  /// inputs if the output is non-finite.
  void eval(double t, std::span<const double> y, const EmpiricalMeasure& mu,
            std::span<double> out) const;

  void analytic_jacobian(double t, std::span<const double> y, const EmpiricalMeasure& mu,
                         Mat& out) const;

 private:
  std::string name_;
  int dim_;
  Eval eval_;
  Jacobian jacobian_;
  DriftMetadata meta_;
};

/// d x d matrix J[i][j] = d b_i / d y_j. Analytic when declared (or mollified);
/// otherwise central finite differences with step fd_step (default
/// 1e-5 * max(1, ||y||)).
Mat spatial_jacobian(const DriftSpec& spec, double t, std::span<const double> y,
                     const EmpiricalMeasure& mu, double fd_step = 0.0);

/// Allocation-free variant for per-step propagation loops.
void spatial_jacobian_into(const DriftSpec& spec, double t, std::span<const double> y,
                           const EmpiricalMeasure& mu, Mat& out, double fd_step = 0.0);

/// Gaussian mollification of a bounded drift: b_n(t,y,mu) is the average of
/// b(t, y + z_q/sqrt(n), mu) over Q fixed nodes. The node set is symmetric
/// (+/- pairs) and whitened to unit second moment, so constants and odd parts
/// are preserved exactly and the score-identity Jacobian
///   grad_y b_n = sqrt(n) * avg[ b(t, y + z_q/sqrt(n), mu) (x) z_q ]
/// is exact on linear drifts. Smoothing acts only in y, so the base drift's
/// law-Lipschitz constant carries over to every n unchanged.
class MollifiedDrift {
 public:
  MollifiedDrift(DriftSpec base, int n, int kernel_samples = 32);

  const DriftSpec& base() const { return base_; }
  int n() const { return n_; }
  int kernel_samples() const { return kernel_samples_; }
  /// The mollified coefficient as a regular (smooth, bounded) DriftSpec.
  const DriftSpec& spec() const { return spec_; }

 private:
  DriftSpec base_;
  int n_;
  int kernel_samples_;
  std::shared_ptr<const std::vector<double>> nodes_;  // Q x d
  DriftSpec spec_;
};

inline MollifiedDrift mollify(const DriftSpec& base, int n, int kernel_samples = 32) {
  return MollifiedDrift(base, n, kernel_samples);
}

/// Built-in drift registry used by the CLI config:
///   {"name":"zero"} | {"name":"constant","value":[..]} |
///   {"name":"linear","matrix":[[..],..]} |
///   {"name":"mean_field_ou","alpha":a,"beta":b[,"clip":c]} |
///   {"name":"sign_attractor"} | {"name":"tanh_attractor","gamma":g}
DriftSpec make_drift(const nlohmann::json& params, int dim);

struct ProbeViolation {
  std::string what;     // which declared property failed
  double lhs, rhs;      // observed value vs declared bound
};

/// Randomized metadata probes (bound / linear growth / law-Lipschitz) on
/// `probes` pseudo-random (t, y, mu) triples drawn from the given seed.
std::vector<ProbeViolation> validate_drift_metadata(const DriftSpec& spec, double horizon,
                                                    std::size_t probes = 1000,
                                                    std::uint64_t seed = 0xD81F7u);

}  // namespace mfsde

#pragma once

#include <cstdint>

#include "mfsde/report.hpp"
#include "mfsde/sensitivity.hpp"
#include "mfsde/solver.hpp"

namespace mfsde {

/// Mean-field Ornstein-Uhlenbeck family b = -alpha y + beta mean(mu),
/// componentwise; the closed forms below make it the main test oracle.
struct OUParams {
  double alpha = 1.0;
  double beta = 0.0;
  double x0 = 1.0;  // componentwise initial value
  double horizon = 1.0;
  int dim = 1;
};

struct OUClosedForm {
  double mean_T;       // x0 e^{(beta-alpha) T}
  double var_T;        // per component: (1 - e^{-2 alpha T}) / (2 alpha), or T at alpha=0
  double dmean_dx0;    // e^{(beta-alpha) T}
};

OUClosedForm ou_closed_form(const OUParams& p);

/// Central-difference gradient of x -> E[Phi(X_T^x)] with common random
/// numbers: all 2d Picard runs consume identical increments, standard errors
/// come from the per-path differenced samples.
EstimatorReport fd_gradient(const DriftSpec& drift, std::span<const double> x0,
                            const TimeGrid& grid, std::size_t paths, double h,
                            const Observable& phi, std::uint64_t seed,
                            const PicardOptions& options = {});

/// exp(A t) by scaling and squaring with a truncated series; d <= 8.
Mat matrix_exp(const Mat& a, double t = 1.0);

/// Fraction of (path, step) pairs at which a componentwise clip at +/-level
/// would bind for the given pre-clip drift values; used to verify that a
/// clipped drift variant ran in its linear regime.
double clip_active_fraction(const DriftSpec& preclip_drift, const PathBundle& bundle,
                            const MeasureFlow& flow, double level);

}  // namespace mfsde

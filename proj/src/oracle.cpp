#include "mfsde/oracle.hpp"

#include <chrono>
#include <cmath>

#include "mfsde/parallel.hpp"
#include "mfsde/stats.hpp"

namespace mfsde {

OUClosedForm ou_closed_form(const OUParams& p) {
  OUClosedForm r{};
  const double g = std::exp((p.beta - p.alpha) * p.horizon);
  if (!std::isfinite(g)) throw std::invalid_argument("ou_closed_form: mean flow not finite on [0,T]");
  r.mean_T = p.x0 * g;
  r.dmean_dx0 = g;
  r.var_T = p.alpha > 0.0 ? (1.0 - std::exp(-2.0 * p.alpha * p.horizon)) / (2.0 * p.alpha)
                          : p.horizon;
  return r;
}

EstimatorReport fd_gradient(const DriftSpec& drift, std::span<const double> x0,
                            const TimeGrid& grid, std::size_t paths, double h,
                            const Observable& phi, std::uint64_t seed,
                            const PicardOptions& options) {
  if (!(h > 0.0)) throw std::invalid_argument("fd_gradient: h must be positive");
  const auto t_start = std::chrono::steady_clock::now();
  const int d = drift.dim();

  // phi(X_T) per path for one shifted initial point; flows are dropped as soon
  // as the terminal values are harvested.
  auto terminal_phi = [&](std::span<const double> x) {
    const PicardResult res = picard_law_iteration(drift, x, grid, paths, seed, options);
    std::vector<double> vals(paths);
    parallel_for(paths, [&](std::size_t lo, std::size_t hi) {
      for (std::size_t p = lo; p < hi; ++p) vals[p] = phi.phi(res.bundle.state(p, grid.steps));
    });
    return vals;
  };

  EstimatorReport report;
  report.method = "fd";
  report.seed = seed;
  report.n = paths;
  report.estimate.resize(static_cast<std::size_t>(d));
  report.std_error.resize(static_cast<std::size_t>(d));
  std::vector<double> shifted(x0.begin(), x0.end());
  std::vector<double> diff(paths);
  for (int j = 0; j < d; ++j) {
    shifted[static_cast<std::size_t>(j)] = x0[j] + h;
    const std::vector<double> up = terminal_phi(shifted);
    shifted[static_cast<std::size_t>(j)] = x0[j] - h;
    const std::vector<double> down = terminal_phi(shifted);
    shifted[static_cast<std::size_t>(j)] = x0[j];
    for (std::size_t p = 0; p < paths; ++p) diff[p] = (up[p] - down[p]) / (2.0 * h);
    const MeanSE ms = mean_se(diff);
    report.estimate[static_cast<std::size_t>(j)] = ms.mean;
    report.std_error[static_cast<std::size_t>(j)] = ms.se;
  }
  report.runtime_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t_start).count();
  return report;
}

Mat matrix_exp(const Mat& a, double t) {
  const int d = a.rows();
  if (d != a.cols() || d < 1 || d > 8) throw std::invalid_argument("matrix_exp: need square d <= 8");
  Mat b = a;
  b *= t;
  // Scale so ||B|| <= 0.5, series, then square back.
  int squarings = 0;
  double scale = b.max_abs() * d;
  while (scale > 0.5) {
    scale *= 0.5;
    ++squarings;
  }
  b *= std::pow(0.5, squarings);
  Mat result = Mat::identity(d);
  Mat term = Mat::identity(d);
  Mat tmp(d, d);
  for (int k = 1; k <= 40; ++k) {
    Mat::mat_mul(term, b, tmp);
    term = tmp;
    term *= 1.0 / k;
    result += term;
    if (term.max_abs() < 1e-18) break;
  }
  for (int s = 0; s < squarings; ++s) {
    Mat::mat_mul(result, result, tmp);
    result = tmp;
  }
  return result;
}

double clip_active_fraction(const DriftSpec& preclip_drift, const PathBundle& bundle,
                            const MeasureFlow& flow, double level) {
  const int d = bundle.dim;
  std::vector<double> active(bundle.paths, 0.0);
  parallel_for(bundle.paths, [&](std::size_t lo, std::size_t hi) {
    double b[kMaxDim];
    for (std::size_t p = lo; p < hi; ++p) {
      std::size_t hits = 0;
      for (std::size_t k = 0; k < bundle.grid.steps; ++k) {
        preclip_drift.eval(bundle.grid.time(k), bundle.state(p, k), flow.at(k),
                           {b, static_cast<std::size_t>(d)});
        for (int c = 0; c < d; ++c)
          if (std::abs(b[c]) >= level) {
            ++hits;
            break;
          }
      }
      active[p] = static_cast<double>(hits) / static_cast<double>(bundle.grid.steps);
    }
  });
  return pairwise_sum(active) / static_cast<double>(bundle.paths);
}

}  // namespace mfsde

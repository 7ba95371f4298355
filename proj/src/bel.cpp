#include "mfsde/bel.hpp"

#include <chrono>
#include <cmath>
#include <sstream>

#include "mfsde/parallel.hpp"

namespace mfsde {

WeightFunction::WeightFunction(std::string kind, const TimeGrid& grid, std::vector<double> values)
    : kind_(std::move(kind)), a_(std::move(values)) {
  if (a_.size() != grid.steps) throw std::invalid_argument("WeightFunction: one value per step required");
  const double dt = grid.dt();
  double mass = 0.0;
  for (double v : a_) {
    if (!std::isfinite(v)) throw std::invalid_argument("WeightFunction: non-finite value");
    mass += v * dt;
  }
  if (!(std::abs(mass) > 0.0)) throw std::invalid_argument("WeightFunction: zero total mass");
  for (double& v : a_) v /= mass;
  cum_.assign(a_.size() + 1, 0.0);
  for (std::size_t k = 0; k < a_.size(); ++k) cum_[k + 1] = cum_[k] + a_[k] * dt;
}

WeightFunction WeightFunction::uniform(const TimeGrid& grid) {
  return WeightFunction("uniform", grid,
                        std::vector<double>(grid.steps, 1.0 / grid.horizon));
}

WeightFunction WeightFunction::indicator_front(const TimeGrid& grid, double tau) {
  if (!(tau > 0.0) || tau > grid.horizon)
    throw std::invalid_argument("WeightFunction: tau must lie in (0, T]");
  std::vector<double> v(grid.steps, 0.0);
  bool any = false;
  for (std::size_t k = 0; k < grid.steps; ++k)
    if (grid.time(k) < tau) {
      v[k] = 1.0;
      any = true;
    }
  if (!any) throw std::invalid_argument("WeightFunction: indicator support contains no grid step");
  return WeightFunction("indicator_front", grid, std::move(v));
}

WeightFunction WeightFunction::piecewise(const TimeGrid& grid, std::vector<double> values) {
  return WeightFunction("piecewise", grid, std::move(values));
}

std::vector<double> bel_weight(const WeightFunction& a, const JacobianFlow& fv,
                               const std::vector<Mat>& gxb_along_path, const NoiseArray& noise,
                               std::size_t path) {
  if (fv.kind != JacobianKind::first_variation || fv.anchor != 0)
    throw std::invalid_argument("bel_weight: fv must be a first-variation flow");
  if (a.steps() != fv.grid.steps || gxb_along_path.size() != fv.grid.steps ||
      noise.steps != fv.grid.steps || noise.dim != fv.dim)
    throw std::invalid_argument("bel_weight: shape mismatch");
  const int d = fv.dim;
  std::vector<double> w(static_cast<std::size_t>(d), 0.0);
  for (std::size_t k = 0; k < fv.grid.steps; ++k) {
    const Mat& z = fv.at(k);
    const Mat& g = gxb_along_path[k];
    const auto db = noise.at(path, k);
    const double ak = a.at(k);
    const double acc = a.cumulative(k);
    for (int j = 0; j < d; ++j)
      for (int i = 0; i < d; ++i) w[static_cast<std::size_t>(j)] += (ak * z(i, j) + acc * g(i, j)) * db[i];
  }
  return w;
}

Observable make_observable(const nlohmann::json& params) {
  if (!params.contains("name") || !params.at("name").is_string())
    throw std::invalid_argument("phi config: missing 'name'");
  const std::string name = params.at("name").get<std::string>();
  Observable obs;
  obs.name = name;
  if (name == "constant") {
    const double c = params.value("value", 1.0);
    obs.phi = [c](std::span<const double>) { return c; };
    obs.declared = Observable::Class::smooth_bounded;
  } else if (name == "coordinate") {
    const std::size_t j = params.value("index", 0);
    obs.phi = [j](std::span<const double> y) { return y[j]; };
    obs.declared = Observable::Class::weighted_L2;
  } else if (name == "indicator_positive") {
    const std::size_t j = params.value("index", 0);
    obs.phi = [j](std::span<const double> y) { return y[j] > 0.0 ? 1.0 : 0.0; };
    obs.declared = Observable::Class::weighted_L2;
  } else if (name == "norm_sq") {
    obs.phi = [](std::span<const double> y) { return dot(y, y); };
    obs.declared = Observable::Class::weighted_L2;
  } else if (name == "exp_norm_sq") {
    const double s = params.value("scale", 0.5);
    obs.phi = [s](std::span<const double> y) { return std::exp(s * dot(y, y)); };
    obs.declared = Observable::Class::weighted_L2;
  } else {
    throw std::invalid_argument("phi config: unknown observable '" + name + "'");
  }
  return obs;
}

namespace {

void require_bismut_hypotheses(const DriftSpec& drift) {
  const auto& m = drift.metadata();
  if (!m.bound || !m.law_lipschitz) {
    std::ostringstream os;
    os << "estimate_gradient: drift '" << drift.name()
       << "' does not satisfy the gradient-formula hypotheses (needs a declared uniform bound"
       << " and a law-Lipschitz constant; declared: bound="
       << (m.bound ? std::to_string(*m.bound) : "none")
       << ", law_lipschitz=" << (m.law_lipschitz ? std::to_string(*m.law_lipschitz) : "none")
       << ")";
    throw std::invalid_argument(os.str());
  }
}

}  // namespace

GradientResult estimate_gradient_multi(const DriftSpec& drift, std::span<const double> x0,
                                       const TimeGrid& grid, std::size_t paths,
                                       std::span<const WeightFunction> weights,
                                       const Observable& phi, std::uint64_t seed,
                                       const BelOptions& options) {
  const auto t_start = std::chrono::steady_clock::now();
  require_bismut_hypotheses(drift);
  if (weights.empty()) throw std::invalid_argument("estimate_gradient: no weight function given");
  for (const auto& w : weights)
    if (w.steps() != grid.steps) throw std::invalid_argument("estimate_gradient: weight grid mismatch");

  // Irregular drifts go through mollification; Jacobians need a smooth system.
  const bool mollified = !drift.metadata().spatially_smooth;
  const DriftSpec work =
      mollified ? mollify(drift, options.mollify_n, options.kernel_samples).spec() : drift;

  const PicardResult pic = picard_law_iteration(work, x0, grid, paths, seed, options.picard);
  const double h = options.fd_step > 0.0 ? options.fd_step : 1e-2 * std::max(1.0, norm(x0));
  const GradXbFlow gxb = grad_x_b(work, x0, grid, paths, h, seed, options.picard);

  const int d = work.dim();
  const std::size_t nw = weights.size();
  const double dt = grid.dt();
  std::vector<double> w_samples(nw * paths * static_cast<std::size_t>(d));
  std::vector<double> phi_vals(paths);

  parallel_for(paths, [&](std::size_t lo, std::size_t hi) {
    Mat z(d, d), jac(d, d), g(d, d), prod(d, d), next(d, d);
    for (std::size_t p = lo; p < hi; ++p) {
      z = Mat::identity(d);
      double* wp = w_samples.data() + p * nw * static_cast<std::size_t>(d);
      for (std::size_t i = 0; i < nw * static_cast<std::size_t>(d); ++i) wp[i] = 0.0;
      for (std::size_t k = 0; k < grid.steps; ++k) {
        const auto y = pic.bundle.state(p, k);
        spatial_jacobian_into(work, grid.time(k), y, pic.flow.at(k), jac);
        gxb.eval_into(k, y, g);
        const auto db = pic.bundle.noise->at(p, k);
        for (std::size_t w = 0; w < nw; ++w) {
          const double ak = weights[w].at(k);
          const double acc = weights[w].cumulative(k);
          double* wj = wp + w * static_cast<std::size_t>(d);
          for (int j = 0; j < d; ++j)
            for (int i = 0; i < d; ++i) wj[j] += (ak * z(i, j) + acc * g(i, j)) * db[i];
        }
        // advance Z with the same update as first_variation()
        Mat::mat_mul(jac, z, prod);
        next = z;
        for (int i = 0; i < d; ++i)
          for (int j = 0; j < d; ++j) next(i, j) += dt * (prod(i, j) + g(i, j));
        z = next;
      }
      phi_vals[p] = phi.phi(pic.bundle.state(p, grid.steps));
    }
  });

  GradientResult result;
  result.diagnostics.picard_trace = pic.trace;
  result.diagnostics.gxb_step = h;
  result.diagnostics.mollify_n = mollified ? options.mollify_n : 0;
  result.diagnostics.weight_mean.resize(nw * static_cast<std::size_t>(d));
  result.diagnostics.weight_se.resize(nw * static_cast<std::size_t>(d));

  std::vector<double> column(paths);
  for (std::size_t w = 0; w < nw; ++w) {
    EstimatorReport report;
    report.method = "bel";
    report.seed = seed;
    report.n = paths;
    report.estimate.resize(static_cast<std::size_t>(d));
    report.std_error.resize(static_cast<std::size_t>(d));
    for (int j = 0; j < d; ++j) {
      for (std::size_t p = 0; p < paths; ++p)
        column[p] = w_samples[(p * nw + w) * static_cast<std::size_t>(d) + j];
      const MeanSE ws = mean_se(column);
      result.diagnostics.weight_mean[w * static_cast<std::size_t>(d) + j] = ws.mean;
      result.diagnostics.weight_se[w * static_cast<std::size_t>(d) + j] = ws.se;
      for (std::size_t p = 0; p < paths; ++p) column[p] *= phi_vals[p];
      const MeanSE ms = mean_se(column);
      report.estimate[static_cast<std::size_t>(j)] = ms.mean;
      report.std_error[static_cast<std::size_t>(j)] = ms.se;
    }
    report.runtime_ms = std::chrono::duration<double, std::milli>(
                            std::chrono::steady_clock::now() - t_start)
                            .count();
    result.reports.push_back(std::move(report));
  }
  return result;
}

EstimatorReport estimate_gradient(const DriftSpec& drift, std::span<const double> x0,
                                  const TimeGrid& grid, std::size_t paths, const WeightFunction& a,
                                  const Observable& phi, std::uint64_t seed,
                                  const BelOptions& options) {
  GradientResult r = estimate_gradient_multi(drift, x0, grid, paths, {&a, 1}, phi, seed, options);
  return std::move(r.reports.front());
}

GirsanovResult girsanov_estimate(const DriftSpec& drift, std::span<const double> x0,
                                 const TimeGrid& grid, std::size_t paths, const Observable& phi,
                                 std::uint64_t seed, const PicardOptions& options) {
  const auto t_start = std::chrono::steady_clock::now();
  if (!drift.metadata().bound)
    throw std::invalid_argument("girsanov_estimate: drift '" + drift.name() +
                                "' must declare a uniform bound");
  const PicardResult pic = picard_law_iteration(drift, x0, grid, paths, seed, options);
  const PathBundle driftless = brownian_bundle(x0, grid, pic.bundle.noise);

  const int d = drift.dim();
  const double dt = grid.dt();
  std::vector<double> ecal(paths), weighted(paths);
  parallel_for(paths, [&](std::size_t lo, std::size_t hi) {
    double b[kMaxDim];
    for (std::size_t p = lo; p < hi; ++p) {
      double log_e = 0.0;
      for (std::size_t k = 0; k < grid.steps; ++k) {
        const auto y = driftless.state(p, k);
        drift.eval(grid.time(k), y, pic.flow.at(k), {b, static_cast<std::size_t>(d)});
        const auto db = driftless.noise->at(p, k);
        double bdb = 0.0, b2 = 0.0;
        for (int c = 0; c < d; ++c) {
          bdb += b[c] * db[c];
          b2 += b[c] * b[c];
        }
        log_e += bdb - 0.5 * b2 * dt;
      }
      ecal[p] = std::exp(log_e);
      weighted[p] = phi.phi(driftless.state(p, grid.steps)) * ecal[p];
    }
  });

  GirsanovResult out;
  out.exponential_stats = mean_se(ecal);
  const MeanSE ms = mean_se(weighted);
  out.report.method = "girsanov";
  out.report.seed = seed;
  out.report.n = paths;
  out.report.estimate = {ms.mean};
  out.report.std_error = {ms.se};
  out.report.runtime_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t_start).count();
  return out;
}

PhiIntegrability check_phi_integrability(const Observable& phi, int dim, double horizon) {
  if (dim < 1 || dim > 3)
    throw std::invalid_argument("check_phi_integrability: quadrature supports d <= 3 only");
  if (!(horizon > 0.0)) throw std::invalid_argument("check_phi_integrability: T must be positive");
  const double radius = 10.0 * std::sqrt(horizon);
  const int nodes = dim == 3 ? 101 : 201;  // odd, Simpson
  const double h = 2.0 * radius / (nodes - 1);

  std::vector<double> axis(static_cast<std::size_t>(nodes)), wts(static_cast<std::size_t>(nodes));
  for (int i = 0; i < nodes; ++i) {
    axis[static_cast<std::size_t>(i)] = -radius + h * i;
    wts[static_cast<std::size_t>(i)] =
        (i == 0 || i == nodes - 1) ? h / 3.0 : (i % 2 == 1 ? 4.0 * h / 3.0 : 2.0 * h / 3.0);
  }

  PhiIntegrability out;
  double total = 0.0, shell = 0.0;
  const double inner = 0.9 * radius;
  int idx[3] = {0, 0, 0};
  double y[3];
  const std::size_t cells = static_cast<std::size_t>(std::pow(nodes, dim));
  for (std::size_t cell = 0; cell < cells; ++cell) {
    double w = 1.0, max_abs = 0.0, norm2 = 0.0;
    for (int c = 0; c < dim; ++c) {
      y[c] = axis[static_cast<std::size_t>(idx[c])];
      w *= wts[static_cast<std::size_t>(idx[c])];
      max_abs = std::max(max_abs, std::abs(y[c]));
      norm2 += y[c] * y[c];
    }
    const double f = phi.phi({y, static_cast<std::size_t>(dim)});
    if (!std::isfinite(f)) {
      std::ostringstream os;
      os << "Phi is non-finite at y=(";
      for (int c = 0; c < dim; ++c) os << (c ? "," : "") << y[c];
      os << ")";
      out.pass = false;
      out.message = os.str();
      return out;
    }
    const double v = w * f * f * std::exp(-norm2 / (4.0 * horizon));
    total += v;
    if (max_abs >= inner) shell += v;
    for (int c = 0; c < dim; ++c) {
      if (++idx[c] < nodes) break;
      idx[c] = 0;
    }
  }
  out.value = total;
  out.shell_fraction = total > 0.0 ? shell / total : 0.0;
  if (!std::isfinite(total)) {
    out.pass = false;
    out.message = "quadrature diverged (non-finite total)";
  } else if (out.shell_fraction >= 0.01) {
    out.pass = false;
    std::ostringstream os;
    os << "tail shell contributes " << out.shell_fraction * 100.0 << "% of the weighted mass";
    out.message = os.str();
  } else {
    out.pass = true;
    out.message = "ok";
  }
  return out;
}

}  // namespace mfsde

#include "mfsde/drift.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "mfsde/rng.hpp"

namespace mfsde {

DriftSpec::DriftSpec(std::string name, int dim, Eval eval, DriftMetadata meta,
                     Jacobian analytic_jacobian)
    : name_(std::move(name)),
      dim_(dim),
      eval_(std::move(eval)),
      jacobian_(std::move(analytic_jacobian)),
      meta_(meta) {
  if (dim_ < 1 || dim_ > kMaxDim) throw std::invalid_argument("DriftSpec: bad dimension");
  if (!eval_) throw std::invalid_argument("DriftSpec: missing eval function");
}

void DriftSpec::eval(double t, std::span<const double> y, const EmpiricalMeasure& mu,
                     std::span<double> out) const {
  eval_(t, y, mu, out);
  for (double v : out) {
    if (!std::isfinite(v)) {
      std::ostringstream os;
      os << "drift '" << name_ << "' produced a non-finite value at t=" << t << ", y=(";
      for (std::size_t i = 0; i < y.size(); ++i) os << (i ? "," : "") << y[i];
      os << "), K(mu,delta_0)=" << mu.first_moment();
      throw std::runtime_error(os.str());
    }
  }
}

void DriftSpec::analytic_jacobian(double t, std::span<const double> y, const EmpiricalMeasure& mu,
                                  Mat& out) const {
  if (!jacobian_) throw std::logic_error("DriftSpec: no analytic Jacobian declared");
  jacobian_(t, y, mu, out);
}

void spatial_jacobian_into(const DriftSpec& spec, double t, std::span<const double> y,
                           const EmpiricalMeasure& mu, Mat& out, double fd_step) {
  const int d = spec.dim();
  if (spec.has_analytic_jacobian()) {
    spec.analytic_jacobian(t, y, mu, out);
  } else {
    const double h = fd_step > 0.0 ? fd_step : 1e-5 * std::max(1.0, norm(y));
    double yp[kMaxDim], bp[kMaxDim], bm[kMaxDim];
    for (int j = 0; j < d; ++j) {
      for (int c = 0; c < d; ++c) yp[c] = y[c];
      yp[j] = y[j] + h;
      spec.eval(t, {yp, static_cast<std::size_t>(d)}, mu, {bp, static_cast<std::size_t>(d)});
      yp[j] = y[j] - h;
      spec.eval(t, {yp, static_cast<std::size_t>(d)}, mu, {bm, static_cast<std::size_t>(d)});
      for (int i = 0; i < d; ++i) out(i, j) = (bp[i] - bm[i]) / (2.0 * h);
    }
  }
  if (!out.finite())
    throw std::runtime_error("spatial_jacobian: non-finite entries for drift '" + spec.name() + "'");
}

Mat spatial_jacobian(const DriftSpec& spec, double t, std::span<const double> y,
                     const EmpiricalMeasure& mu, double fd_step) {
  Mat jac(spec.dim(), spec.dim());
  spatial_jacobian_into(spec, t, y, mu, jac, fd_step);
  return jac;
}

namespace {

constexpr std::uint64_t kNodeSeed = 0x90DE5EEDull;

// Q/2 Gaussian draws mirrored to +/- pairs, then whitened so the empirical
// second moment is exactly the identity.
std::vector<double> make_nodes(int dim, int q) {
  if (q < 2 || q % 2 != 0) throw std::invalid_argument("mollify: kernel_samples must be even and >= 2");
  const int half = q / 2;
  std::vector<double> nodes(static_cast<std::size_t>(q) * dim);
  for (int i = 0; i < half; ++i)
    for (int c = 0; c < dim; ++c) {
      const double z = rng::normal(kNodeSeed, rng::Stream::mollifier, static_cast<std::uint64_t>(i),
                                   0, static_cast<std::uint32_t>(c));
      nodes[static_cast<std::size_t>(i) * dim + c] = z;
      nodes[static_cast<std::size_t>(i + half) * dim + c] = -z;
    }
  // Sample covariance (mean is exactly zero by symmetry).
  Mat cov(dim, dim);
  for (int i = 0; i < q; ++i)
    for (int r = 0; r < dim; ++r)
      for (int c = 0; c < dim; ++c)
        cov(r, c) += nodes[static_cast<std::size_t>(i) * dim + r] *
                     nodes[static_cast<std::size_t>(i) * dim + c] / q;
  // Cholesky cov = L L^T, then z <- L^{-1} z.
  Mat L(dim, dim);
  for (int r = 0; r < dim; ++r) {
    for (int c = 0; c <= r; ++c) {
      double s = cov(r, c);
      for (int k = 0; k < c; ++k) s -= L(r, k) * L(c, k);
      if (r == c) {
        if (s <= 0.0) throw std::runtime_error("mollify: degenerate node covariance");
        L(r, r) = std::sqrt(s);
      } else {
        L(r, c) = s / L(c, c);
      }
    }
  }
  for (int i = 0; i < q; ++i) {
    double* z = nodes.data() + static_cast<std::size_t>(i) * dim;
    for (int r = 0; r < dim; ++r) {  // forward substitution in place
      double s = z[r];
      for (int k = 0; k < r; ++k) s -= L(r, k) * z[k];
      z[r] = s / L(r, r);
    }
  }
  return nodes;
}

}  // namespace

MollifiedDrift::MollifiedDrift(DriftSpec base, int n, int kernel_samples)
    : base_(std::move(base)),
      n_(n),
      kernel_samples_(kernel_samples),
      nodes_(std::make_shared<const std::vector<double>>(make_nodes(base_.dim(), kernel_samples))),
      spec_("", 1, [](double, std::span<const double>, const EmpiricalMeasure&, std::span<double>) {},
            DriftMetadata{}) {
  if (n_ < 1) throw std::invalid_argument("mollify: smoothing index must be >= 1");
  if (!base_.metadata().bound)
    throw std::invalid_argument("mollify: base drift '" + base_.name() +
                                "' does not declare a uniform bound");
  const int d = base_.dim();
  const int q = kernel_samples_;
  const double bandwidth = 1.0 / std::sqrt(static_cast<double>(n_));
  auto nodes = nodes_;
  const DriftSpec base_copy = base_;

  DriftSpec::Eval eval = [base_copy, nodes, q, d, bandwidth](
                             double t, std::span<const double> y, const EmpiricalMeasure& mu,
                             std::span<double> out) {
    double shifted[kMaxDim], b[kMaxDim], acc[kMaxDim] = {};
    for (int i = 0; i < q; ++i) {
      const double* z = nodes->data() + static_cast<std::size_t>(i) * d;
      for (int c = 0; c < d; ++c) shifted[c] = y[c] + bandwidth * z[c];
      base_copy.eval(t, {shifted, static_cast<std::size_t>(d)}, mu, {b, static_cast<std::size_t>(d)});
      for (int c = 0; c < d; ++c) acc[c] += b[c];
    }
    for (int c = 0; c < d; ++c) out[c] = acc[c] / q;
  };

  // Score identity: grad_y b_n = sqrt(n) avg[ b(y + z/sqrt(n)) (x) z ].
  DriftSpec::Jacobian jac = [base_copy, nodes, q, d, bandwidth, n = n_](
                                double t, std::span<const double> y, const EmpiricalMeasure& mu,
                                Mat& out) {
    double shifted[kMaxDim], b[kMaxDim];
    for (int r = 0; r < d; ++r)
      for (int c = 0; c < d; ++c) out(r, c) = 0.0;
    for (int i = 0; i < q; ++i) {
      const double* z = nodes->data() + static_cast<std::size_t>(i) * d;
      for (int c = 0; c < d; ++c) shifted[c] = y[c] + bandwidth * z[c];
      base_copy.eval(t, {shifted, static_cast<std::size_t>(d)}, mu, {b, static_cast<std::size_t>(d)});
      for (int r = 0; r < d; ++r)
        for (int c = 0; c < d; ++c) out(r, c) += b[r] * z[c];
    }
    const double scale = std::sqrt(static_cast<double>(n)) / q;
    for (int r = 0; r < d; ++r)
      for (int c = 0; c < d; ++c) out(r, c) *= scale;
  };

  DriftMetadata meta = base_.metadata();
  meta.spatially_smooth = true;  // averaging a bounded drift keeps the bound
  spec_ = DriftSpec(base_.name() + "_mollified_" + std::to_string(n_), d, std::move(eval), meta,
                    std::move(jac));
}

namespace {

double get_num(const nlohmann::json& j, const std::string& key, std::optional<double> fallback = {}) {
  if (!j.contains(key)) {
    if (fallback) return *fallback;
    throw std::invalid_argument("drift config: missing parameter '" + key + "'");
  }
  if (!j.at(key).is_number()) throw std::invalid_argument("drift config: '" + key + "' must be a number");
  return j.at(key).get<double>();
}

DriftSpec make_zero(int d) {
  return DriftSpec(
      "zero", d,
      [](double, std::span<const double>, const EmpiricalMeasure&, std::span<double> out) {
        for (double& v : out) v = 0.0;
      },
      DriftMetadata{.bound = 0.0, .linear_growth = 0.0, .law_lipschitz = 0.0, .spatially_smooth = true},
      [](double, std::span<const double>, const EmpiricalMeasure&, Mat& out) {
        for (int i = 0; i < out.rows(); ++i)
          for (int j = 0; j < out.cols(); ++j) out(i, j) = 0.0;
      });
}

DriftSpec make_constant(const nlohmann::json& p, int d) {
  std::vector<double> value(static_cast<std::size_t>(d), 0.0);
  if (p.contains("value")) {
    const auto& v = p.at("value");
    if (!v.is_array() || v.size() != static_cast<std::size_t>(d))
      throw std::invalid_argument("drift config: 'value' must be an array of length d");
    value = v.get<std::vector<double>>();
  }
  const double b = norm(value);
  return DriftSpec(
      "constant", d,
      [value](double, std::span<const double>, const EmpiricalMeasure&, std::span<double> out) {
        for (std::size_t c = 0; c < out.size(); ++c) out[c] = value[c];
      },
      DriftMetadata{.bound = b, .linear_growth = b, .law_lipschitz = 0.0, .spatially_smooth = true},
      [](double, std::span<const double>, const EmpiricalMeasure&, Mat& out) {
        for (int i = 0; i < out.rows(); ++i)
          for (int j = 0; j < out.cols(); ++j) out(i, j) = 0.0;
      });
}

DriftSpec make_linear(const nlohmann::json& p, int d) {
  if (!p.contains("matrix")) throw std::invalid_argument("drift config: 'linear' needs 'matrix'");
  const auto rows = p.at("matrix").get<std::vector<std::vector<double>>>();
  if (rows.size() != static_cast<std::size_t>(d))
    throw std::invalid_argument("drift config: 'matrix' must be d x d");
  Mat a(d, d);
  double growth = 0.0;
  for (int i = 0; i < d; ++i) {
    if (rows[static_cast<std::size_t>(i)].size() != static_cast<std::size_t>(d))
      throw std::invalid_argument("drift config: 'matrix' must be d x d");
    for (int j = 0; j < d; ++j) a(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  }
  growth = a.op_norm();
  return DriftSpec(
      "linear", d,
      [a](double, std::span<const double> y, const EmpiricalMeasure&, std::span<double> out) {
        a.apply(y, out);
      },
      DriftMetadata{.linear_growth = std::max(growth, 1.0), .law_lipschitz = 0.0,
                    .spatially_smooth = true},
      [a](double, std::span<const double>, const EmpiricalMeasure&, Mat& out) { out = a; });
}

// b(t, y, mu) = -alpha y + beta mean(mu), componentwise; optional clip to
// [-clip, clip] per component makes it bounded.
DriftSpec make_mean_field_ou(const nlohmann::json& p, int d) {
  const double alpha = get_num(p, "alpha");
  const double beta = get_num(p, "beta");
  const bool clipped = p.contains("clip");
  const double clip = clipped ? get_num(p, "clip") : 0.0;
  if (clipped && clip <= 0.0) throw std::invalid_argument("drift config: 'clip' must be > 0");

  DriftMetadata meta;
  meta.law_lipschitz = std::abs(beta);
  meta.linear_growth = std::max(alpha, std::abs(beta));
  meta.spatially_smooth = true;
  meta.modulus = "linear";
  if (clipped) meta.bound = clip * std::sqrt(static_cast<double>(d));

  auto eval = [alpha, beta, clipped, clip](double, std::span<const double> y,
                                            const EmpiricalMeasure& mu, std::span<double> out) {
    const auto m = mu.mean();
    for (std::size_t c = 0; c < out.size(); ++c) {
      double v = -alpha * y[c] + beta * m[c];
      if (clipped) v = std::clamp(v, -clip, clip);
      out[c] = v;
    }
  };
  auto jac = [alpha, beta, clipped, clip](double, std::span<const double> y,
                                          const EmpiricalMeasure& mu, Mat& out) {
    const auto m = mu.mean();
    for (int i = 0; i < out.rows(); ++i)
      for (int j = 0; j < out.cols(); ++j) out(i, j) = 0.0;
    for (int c = 0; c < out.rows(); ++c) {
      const double pre = -alpha * y[c] + beta * m[c];
      out(c, c) = (clipped && std::abs(pre) >= clip) ? 0.0 : -alpha;
    }
  };
  return DriftSpec(clipped ? "mean_field_ou_clipped" : "mean_field_ou", d, std::move(eval), meta,
                   std::move(jac));
}

// b(t, y, mu) = (-sign(y_1) + min(K(mu, delta_0), 1)) e_1: bounded,
// law-Lipschitz, spatially discontinuous.
DriftSpec make_sign_attractor(int d) {
  DriftMetadata meta;
  meta.bound = 2.0;
  meta.law_lipschitz = 1.0;
  meta.linear_growth = 2.0;
  meta.spatially_smooth = false;
  meta.modulus = "linear";
  return DriftSpec(
      "sign_attractor", d,
      [](double, std::span<const double> y, const EmpiricalMeasure& mu, std::span<double> out) {
        for (double& v : out) v = 0.0;
        const double s = (y[0] > 0.0) ? 1.0 : (y[0] < 0.0 ? -1.0 : 0.0);
        out[0] = -s + std::min(mu.first_moment(), 1.0);
      },
      meta);
}

// b(t, y, mu) = -tanh(y) componentwise + gamma min(K(mu, delta_0), 1) e_1:
// smooth, bounded, law-Lipschitz. Used where a regular bounded drift with a
// genuinely nonlinear spatial part is wanted.
DriftSpec make_tanh_attractor(const nlohmann::json& p, int d) {
  const double gamma = get_num(p, "gamma", 0.5);
  DriftMetadata meta;
  meta.bound = std::sqrt(static_cast<double>(d)) + std::abs(gamma);
  meta.law_lipschitz = std::abs(gamma);
  meta.linear_growth = meta.bound;
  meta.spatially_smooth = true;
  meta.modulus = "linear";
  return DriftSpec(
      "tanh_attractor", d,
      [gamma](double, std::span<const double> y, const EmpiricalMeasure& mu, std::span<double> out) {
        for (std::size_t c = 0; c < out.size(); ++c) out[c] = -std::tanh(y[c]);
        out[0] += gamma * std::min(mu.first_moment(), 1.0);
      },
      meta,
      [](double, std::span<const double> y, const EmpiricalMeasure&, Mat& out) {
        for (int i = 0; i < out.rows(); ++i)
          for (int j = 0; j < out.cols(); ++j) out(i, j) = 0.0;
        for (int c = 0; c < out.rows(); ++c) {
          const double th = std::tanh(y[c]);
          out(c, c) = -(1.0 - th * th);
        }
      });
}

}  // namespace

DriftSpec make_drift(const nlohmann::json& params, int dim) {
  if (!params.contains("name") || !params.at("name").is_string())
    throw std::invalid_argument("drift config: missing 'name'");
  const std::string name = params.at("name").get<std::string>();
  if (name == "zero") return make_zero(dim);
  if (name == "constant") return make_constant(params, dim);
  if (name == "linear") return make_linear(params, dim);
  if (name == "mean_field_ou") return make_mean_field_ou(params, dim);
  if (name == "sign_attractor") return make_sign_attractor(dim);
  if (name == "tanh_attractor") return make_tanh_attractor(params, dim);
  throw std::invalid_argument("drift config: unknown drift '" + name + "'");
}

std::vector<ProbeViolation> validate_drift_metadata(const DriftSpec& spec, double horizon,
                                                    std::size_t probes, std::uint64_t seed) {
  const int d = spec.dim();
  const auto& meta = spec.metadata();
  std::vector<ProbeViolation> out;

  auto random_point = [&](std::uint64_t id, double scale, std::span<double> y) {
    for (int c = 0; c < d; ++c)
      y[c] = scale * rng::normal(seed, rng::Stream::probes, id, 1, static_cast<std::uint32_t>(c));
  };
  auto random_measure = [&](std::uint64_t id) {
    const std::size_t atoms = 64;
    double center[kMaxDim];
    random_point(id, 2.0, {center, static_cast<std::size_t>(d)});
    const double scale = 0.5 + 2.5 * rng::uniform(seed, rng::Stream::probes, id, 2, 0);
    std::vector<double> pts(atoms * static_cast<std::size_t>(d));
    for (std::size_t i = 0; i < atoms; ++i)
      for (int c = 0; c < d; ++c)
        pts[i * d + c] = center[c] + scale * rng::normal(seed, rng::Stream::probes, id, 3 + i,
                                                         static_cast<std::uint32_t>(c));
    return EmpiricalMeasure(std::move(pts), d);
  };

  double y[kMaxDim], b[kMaxDim], b2[kMaxDim];
  for (std::size_t i = 0; i < probes; ++i) {
    const double t = horizon * rng::uniform(seed, rng::Stream::probes, i, 0, 0);
    const double scale = (i % 7 == 0) ? 10.0 : 3.0;  // occasional far probes
    random_point(i, scale, {y, static_cast<std::size_t>(d)});
    const auto mu = random_measure(2 * i);
    spec.eval(t, {y, static_cast<std::size_t>(d)}, mu, {b, static_cast<std::size_t>(d)});
    const double bn = norm({b, static_cast<std::size_t>(d)});
    if (meta.bound && bn > *meta.bound * (1.0 + 1e-12))
      out.push_back({"bound", bn, *meta.bound});
    if (meta.linear_growth) {
      const double rhs = *meta.linear_growth *
                         (1.0 + norm({y, static_cast<std::size_t>(d)}) + mu.first_moment());
      if (bn > rhs * (1.0 + 1e-12)) out.push_back({"linear_growth", bn, rhs});
    }
    if (meta.law_lipschitz && i % 5 == 0) {
      const auto nu = random_measure(2 * i + 1);
      spec.eval(t, {y, static_cast<std::size_t>(d)}, nu, {b2, static_cast<std::size_t>(d)});
      double diff[kMaxDim];
      for (int c = 0; c < d; ++c) diff[c] = b[c] - b2[c];
      const double lhs = norm({diff, static_cast<std::size_t>(d)});
      const double k = kantorovich_exact(mu, nu);
      if (lhs > *meta.law_lipschitz * k * (1.0 + 1e-9) + 1e-12)
        out.push_back({"law_lipschitz", lhs, *meta.law_lipschitz * k});
    }
  }
  return out;
}

}  // namespace mfsde

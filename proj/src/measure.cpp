#include "mfsde/measure.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <stdexcept>

#include "mfsde/parallel.hpp"
#include "mfsde/rng.hpp"
#include "mfsde/stats.hpp"

namespace mfsde {

EmpiricalMeasure::EmpiricalMeasure(std::vector<double> atoms, int dim)
    : dim_(dim), count_(0), atoms_(std::move(atoms)), first_moment_(0.0) {
  if (dim_ < 1 || dim_ > kMaxDim) throw std::invalid_argument("EmpiricalMeasure: bad dimension");
  if (atoms_.empty() || atoms_.size() % static_cast<std::size_t>(dim_) != 0)
    throw std::invalid_argument("EmpiricalMeasure: atom buffer size not a multiple of dim");
  count_ = atoms_.size() / static_cast<std::size_t>(dim_);
  for (std::size_t i = 0; i < atoms_.size(); ++i)
    if (!std::isfinite(atoms_[i]))
      throw std::invalid_argument("EmpiricalMeasure: non-finite atom component at index " +
                                  std::to_string(i));
  mean_.assign(static_cast<std::size_t>(dim_), 0.0);
  std::vector<double> col(count_);
  for (int c = 0; c < dim_; ++c) {
    for (std::size_t i = 0; i < count_; ++i) col[i] = atoms_[i * dim_ + c];
    mean_[static_cast<std::size_t>(c)] = pairwise_sum(col) / static_cast<double>(count_);
  }
  for (std::size_t i = 0; i < count_; ++i) col[i] = norm(atom(i));
  first_moment_ = pairwise_sum(col) / static_cast<double>(count_);
}

EmpiricalMeasure EmpiricalMeasure::dirac(std::span<const double> point, std::size_t count) {
  std::vector<double> atoms(count * point.size());
  for (std::size_t i = 0; i < count; ++i)
    std::copy(point.begin(), point.end(), atoms.begin() + i * point.size());
  return EmpiricalMeasure(std::move(atoms), static_cast<int>(point.size()));
}

EmpiricalMeasure EmpiricalMeasure::origin(int dim, std::size_t count) {
  return EmpiricalMeasure(std::vector<double>(count * static_cast<std::size_t>(dim), 0.0), dim);
}

double EmpiricalMeasure::expect(const std::function<double(std::span<const double>)>& f) const {
  std::vector<double> vals(count_);
  for (std::size_t i = 0; i < count_; ++i) vals[i] = f(atom(i));
  return pairwise_sum(vals) / static_cast<double>(count_);
}

double first_moment(const EmpiricalMeasure& mu) { return mu.first_moment(); }

namespace detail {

// LSD radix sort on order-preserving bit-flipped doubles; ~3x std::sort at
// N ~ 1e5, which dominates the Picard flow-distance step.
void radix_sort(std::vector<double>& values, std::vector<double>& scratch) {
  const std::size_t n = values.size();
  if (n < 2048) {
    std::sort(values.begin(), values.end());
    return;
  }
  scratch.resize(n);
  auto* a = reinterpret_cast<std::uint64_t*>(values.data());
  auto* b = reinterpret_cast<std::uint64_t*>(scratch.data());
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint64_t x = a[i];
    a[i] = x ^ ((x >> 63) ? ~std::uint64_t(0) : (std::uint64_t(1) << 63));
  }
  std::uint32_t hist[8][256] = {};
  for (std::size_t i = 0; i < n; ++i)
    for (int p = 0; p < 8; ++p) ++hist[p][(a[i] >> (8 * p)) & 0xFF];
  for (int p = 0; p < 8; ++p) {
    std::uint32_t prefix = 0;
    for (int d = 0; d < 256; ++d) {
      const std::uint32_t c = hist[p][d];
      hist[p][d] = prefix;
      prefix += c;
    }
    for (std::size_t i = 0; i < n; ++i) b[hist[p][(a[i] >> (8 * p)) & 0xFF]++] = a[i];
    std::swap(a, b);
  }
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint64_t x = a[i];
    a[i] = x ^ ((x & (std::uint64_t(1) << 63)) ? (std::uint64_t(1) << 63) : ~std::uint64_t(0));
  }
}

namespace {

double mean_abs_sorted_diff(std::span<const double> a, std::span<const double> b) {
  std::vector<double> diff(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) diff[i] = std::abs(a[i] - b[i]);
  return pairwise_sum(diff) / static_cast<double>(a.size());
}

// Shortest-augmenting-path assignment (Jonker-Volgenant flavour), O(N^3).
// cost is row-major N x N; returns the optimal total cost.
double solve_assignment(const std::vector<double>& cost, std::size_t n) {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<std::size_t> match(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    match[0] = i;
    std::size_t j0 = 0;
    std::fill(minv.begin(), minv.end(), kInf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = match[j0];
      double delta = kInf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  double total = 0.0;
  for (std::size_t j = 1; j <= n; ++j) total += cost[(match[j] - 1) * n + (j - 1)];
  return total;
}

double exact_1d(std::span<const double> a, std::span<const double> b) {
  std::vector<double> sa(a.begin(), a.end()), sb(b.begin(), b.end()), scratch;
  radix_sort(sa, scratch);
  radix_sort(sb, scratch);
  return mean_abs_sorted_diff(sa, sb);
}

void check_compatible(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu) {
  if (mu.dim() != nu.dim())
    throw std::invalid_argument("kantorovich: dimension mismatch (" + std::to_string(mu.dim()) +
                                " vs " + std::to_string(nu.dim()) + ")");
  if (mu.size() != nu.size())
    throw std::invalid_argument("kantorovich: unequal atom counts (" + std::to_string(mu.size()) +
                                " vs " + std::to_string(nu.size()) + "); only the equal-mass case is supported");
}

// Fixed unit projections shared by every sliced evaluation; one set per (d, P).
// d=2 uses equally spaced half-circle angles (the directional average is then
// quadrature-exact); higher d falls back to a seeded Gaussian set.
std::vector<double> projection_directions(int dim, int projections, std::uint64_t seed) {
  std::vector<double> dirs(static_cast<std::size_t>(projections) * dim);
  if (dim == 2) {
    for (int p = 0; p < projections; ++p) {
      const double angle = M_PI * (p + 0.5) / projections;
      dirs[static_cast<std::size_t>(p) * 2 + 0] = std::cos(angle);
      dirs[static_cast<std::size_t>(p) * 2 + 1] = std::sin(angle);
    }
    return dirs;
  }
  for (int p = 0; p < projections; ++p) {
    double n2 = 0.0;
    do {
      for (int c = 0; c < dim; ++c) {
        const double z = rng::normal(seed, rng::Stream::projections, static_cast<std::uint64_t>(p),
                                     0, static_cast<std::uint32_t>(c));
        dirs[static_cast<std::size_t>(p) * dim + c] = z;
      }
      n2 = dot({dirs.data() + static_cast<std::size_t>(p) * dim, static_cast<std::size_t>(dim)},
               {dirs.data() + static_cast<std::size_t>(p) * dim, static_cast<std::size_t>(dim)});
    } while (n2 == 0.0);
    const double inv = 1.0 / std::sqrt(n2);
    for (int c = 0; c < dim; ++c) dirs[static_cast<std::size_t>(p) * dim + c] *= inv;
  }
  return dirs;
}

// A raw average of projected 1-d distances understates W1 by the mean
// projection of a unit displacement, E|<theta, e>| (2/pi at d=2); dividing it
// back out makes the sliced value an estimator of the matching distance
// itself (exact for translations).
double projection_factor(int dim) {
  return std::tgamma(dim / 2.0) / (std::sqrt(M_PI) * std::tgamma((dim + 1) / 2.0));
}

void project(const EmpiricalMeasure& mu, std::span<const double> dir, std::vector<double>& out) {
  const int d = mu.dim();
  out.resize(mu.size());
  const double* a = mu.atoms().data();
  for (std::size_t i = 0; i < mu.size(); ++i) {
    double s = 0.0;
    for (int c = 0; c < d; ++c) s += a[i * d + c] * dir[c];
    out[i] = s;
  }
}

}  // namespace
}  // namespace detail

double kantorovich_exact(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu) {
  detail::check_compatible(mu, nu);
  if (mu.dim() == 1) return detail::exact_1d(mu.atoms(), nu.atoms());
  const std::size_t n = mu.size();
  std::vector<double> cost(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto x = mu.atom(i);
    for (std::size_t j = 0; j < n; ++j) {
      const auto y = nu.atom(j);
      double s = 0.0;
      for (int c = 0; c < mu.dim(); ++c) {
        const double d = x[c] - y[c];
        s += d * d;
      }
      cost[i * n + j] = std::sqrt(s);
    }
  }
  return detail::solve_assignment(cost, n) / static_cast<double>(n);
}

double kantorovich_sliced(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, int projections,
                          std::uint64_t seed) {
  detail::check_compatible(mu, nu);
  const auto dirs = detail::projection_directions(mu.dim(), projections, seed);
  std::vector<double> per_projection(static_cast<std::size_t>(projections));
  std::vector<double> pa, pb, scratch;
  for (int p = 0; p < projections; ++p) {
    const std::span<const double> dir{dirs.data() + static_cast<std::size_t>(p) * mu.dim(),
                                      static_cast<std::size_t>(mu.dim())};
    detail::project(mu, dir, pa);
    detail::project(nu, dir, pb);
    detail::radix_sort(pa, scratch);
    detail::radix_sort(pb, scratch);
    per_projection[static_cast<std::size_t>(p)] = detail::mean_abs_sorted_diff(pa, pb);
  }
  return pairwise_sum(per_projection) / static_cast<double>(projections) /
         detail::projection_factor(mu.dim());
}

KantorovichResult kantorovich(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu) {
  detail::check_compatible(mu, nu);
  if (mu.dim() == 1 || mu.size() <= kExactMatchingLimit)
    return {kantorovich_exact(mu, nu), false};
  return {kantorovich_sliced(mu, nu), true};
}

MeasureFlow::MeasureFlow(std::vector<double> grid, std::vector<EmpiricalMeasure> measures)
    : grid_(std::move(grid)), measures_(std::move(measures)) {
  if (grid_.size() != measures_.size() || grid_.empty())
    throw std::invalid_argument("MeasureFlow: grid/measure count mismatch");
  if (grid_.front() != 0.0) throw std::invalid_argument("MeasureFlow: grid must start at 0");
  for (std::size_t k = 1; k < grid_.size(); ++k)
    if (!(grid_[k] > grid_[k - 1]))
      throw std::invalid_argument("MeasureFlow: grid not strictly increasing");
  for (const auto& m : measures_)
    if (m.dim() != measures_.front().dim() || m.size() != measures_.front().size())
      throw std::invalid_argument("MeasureFlow: measures must share (N, d)");
}

namespace detail {

FlowDistanceCache::FlowDistanceCache(const MeasureFlow& flow) : flow_(&flow) {
  const int d = flow.dim();
  const std::size_t n = flow.atoms();
  sorted_mode_ = (d == 1) || (n > kExactMatchingLimit);
  if (!sorted_mode_) return;
  const int projections = (d == 1) ? 1 : kSlicedProjections;
  sorted_.resize(flow.size() * static_cast<std::size_t>(projections));
  const auto dirs = (d == 1) ? std::vector<double>{}
                             : projection_directions(d, projections, kProjectionSeed);
  parallel_for(flow.size() * static_cast<std::size_t>(projections),
               [&](std::size_t lo, std::size_t hi) {
                 std::vector<double> scratch;
                 for (std::size_t idx = lo; idx < hi; ++idx) {
                   const std::size_t k = idx / static_cast<std::size_t>(projections);
                   const int p = static_cast<int>(idx % static_cast<std::size_t>(projections));
                   auto& slot = sorted_[idx];
                   if (d == 1) {
                     const auto a = flow.at(k).atoms();
                     slot.assign(a.begin(), a.end());
                   } else {
                     project(flow.at(k),
                             {dirs.data() + static_cast<std::size_t>(p) * d,
                              static_cast<std::size_t>(d)},
                             slot);
                   }
                   radix_sort(slot, scratch);
                 }
               });
}

double FlowDistanceCache::distance_to(const FlowDistanceCache& other) const {
  const MeasureFlow& f = *flow_;
  const MeasureFlow& g = *other.flow_;
  if (f.grid() != g.grid()) throw std::invalid_argument("flow_distance: grid mismatch");
  if (f.dim() != g.dim() || f.atoms() != g.atoms())
    throw std::invalid_argument("flow_distance: flows must share (N, d)");
  if (!sorted_mode_) {
    double worst = 0.0;
    for (std::size_t k = 0; k < f.size(); ++k)
      worst = std::max(worst, kantorovich(f.at(k), g.at(k)).value);
    return worst;
  }
  const std::size_t projections = sorted_.size() / f.size();
  std::vector<double> per_time(f.size(), 0.0);
  parallel_for(f.size(), [&](std::size_t lo, std::size_t hi) {
    for (std::size_t k = lo; k < hi; ++k) {
      std::vector<double> per_proj(projections);
      for (std::size_t p = 0; p < projections; ++p)
        per_proj[p] = mean_abs_sorted_diff(sorted_[k * projections + p],
                                           other.sorted_[k * projections + p]);
      per_time[k] = pairwise_sum(per_proj) / static_cast<double>(projections);
    }
  });
  double worst = 0.0;
  for (double v : per_time) worst = std::max(worst, v);
  return worst;
}

}  // namespace detail

double flow_distance(const MeasureFlow& f, const MeasureFlow& g) {
  detail::FlowDistanceCache cf(f), cg(g);
  return cf.distance_to(cg);
}

}  // namespace mfsde

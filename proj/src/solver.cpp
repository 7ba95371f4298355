#include "mfsde/solver.hpp"

#include <cmath>
#include <cstring>

#include "mfsde/parallel.hpp"
#include "mfsde/rng.hpp"

namespace mfsde {

std::shared_ptr<const NoiseArray> make_noise(std::uint64_t seed, std::size_t paths,
                                             const TimeGrid& grid, int dim) {
  auto noise = std::make_shared<NoiseArray>();
  noise->seed = seed;
  noise->paths = paths;
  noise->steps = grid.steps;
  noise->dim = dim;
  noise->db.resize(paths * grid.steps * static_cast<std::size_t>(dim));
  const double sqrt_dt = std::sqrt(grid.dt());
  parallel_for(paths, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t p = lo; p < hi; ++p)
      for (std::size_t k = 0; k < grid.steps; ++k)
        for (int c = 0; c < dim; ++c)
          noise->db[(p * grid.steps + k) * dim + c] =
              sqrt_dt * rng::normal(seed, rng::Stream::increments, p, k,
                                    static_cast<std::uint32_t>(c));
  });
  return noise;
}

namespace {

void check_x0(std::span<const double> x0, int dim) {
  if (static_cast<int>(x0.size()) != dim) throw std::invalid_argument("solver: x0 has wrong dimension");
  if (!all_finite(x0)) throw std::invalid_argument("solver: x0 has non-finite components");
}

PathBundle empty_bundle(std::span<const double> x0, const TimeGrid& grid,
                        std::shared_ptr<const NoiseArray> noise) {
  PathBundle b;
  b.x0.assign(x0.begin(), x0.end());
  b.grid = grid;
  b.paths = noise->paths;
  b.dim = noise->dim;
  b.noise = std::move(noise);
  b.states.resize(b.paths * grid.points() * static_cast<std::size_t>(b.dim));
  return b;
}

EmpiricalMeasure measure_at(const PathBundle& bundle, std::size_t k) {
  const int d = bundle.dim;
  std::vector<double> atoms(bundle.paths * static_cast<std::size_t>(d));
  for (std::size_t p = 0; p < bundle.paths; ++p) {
    const auto s = bundle.state(p, k);
    std::copy(s.begin(), s.end(), atoms.begin() + p * static_cast<std::size_t>(d));
  }
  return EmpiricalMeasure(std::move(atoms), d);
}

}  // namespace

PathBundle brownian_bundle(std::span<const double> x0, const TimeGrid& grid,
                           std::shared_ptr<const NoiseArray> noise) {
  check_x0(x0, noise->dim);
  PathBundle bundle = empty_bundle(x0, grid, std::move(noise));
  const int d = bundle.dim;
  parallel_for(bundle.paths, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t p = lo; p < hi; ++p) {
      auto cur = bundle.state(p, 0);
      std::copy(x0.begin(), x0.end(), cur.begin());
      for (std::size_t k = 0; k < grid.steps; ++k) {
        const auto db = bundle.noise->at(p, k);
        auto next = bundle.state(p, k + 1);
        for (int c = 0; c < d; ++c) next[c] = bundle.state(p, k)[c] + db[c];
      }
    }
  });
  return bundle;
}

MeasureFlow flow_from_bundle(const PathBundle& bundle) {
  std::vector<EmpiricalMeasure> measures;
  measures.reserve(bundle.grid.points());
  for (std::size_t k = 0; k < bundle.grid.points(); ++k) measures.push_back(measure_at(bundle, k));
  return MeasureFlow(bundle.grid.times(), std::move(measures));
}

std::pair<PathBundle, MeasureFlow> simulate_particles(const DriftSpec& drift,
                                                      std::span<const double> x0,
                                                      const TimeGrid& grid, std::size_t paths,
                                                      std::uint64_t seed) {
  if (paths < 2) throw std::invalid_argument("simulate_particles: need at least 2 particles");
  if (drift.dim() != static_cast<int>(x0.size()))
    throw std::invalid_argument("simulate_particles: drift/x0 dimension mismatch");
  if (!drift.metadata().linear_growth && !drift.metadata().bound)
    throw std::invalid_argument("simulate_particles: drift must declare linear growth or a bound");

  auto noise = make_noise(seed, paths, grid, drift.dim());
  PathBundle bundle = empty_bundle(x0, grid, std::move(noise));
  const int d = bundle.dim;

  for (std::size_t p = 0; p < paths; ++p) {
    auto s = bundle.state(p, 0);
    std::copy(x0.begin(), x0.end(), s.begin());
  }

  std::vector<EmpiricalMeasure> measures;
  measures.reserve(grid.points());
  for (std::size_t k = 0; k < grid.steps; ++k) {
    measures.push_back(measure_at(bundle, k));  // barrier: ensemble law at t_k
    const EmpiricalMeasure& mu = measures.back();
    const double t = grid.time(k);
    const double dt = grid.dt();
    parallel_for(paths, [&](std::size_t lo, std::size_t hi) {
      double b[kMaxDim];
      for (std::size_t p = lo; p < hi; ++p) {
        const auto cur = bundle.state(p, k);
        drift.eval(t, cur, mu, {b, static_cast<std::size_t>(d)});
        const auto db = bundle.noise->at(p, k);
        auto next = bundle.state(p, k + 1);
        for (int c = 0; c < d; ++c) next[c] = cur[c] + b[c] * dt + db[c];
        if (!all_finite(next))
          throw numeric_error("simulate_particles: non-finite state at step " + std::to_string(k + 1),
                              k + 1);
      }
    });
  }
  measures.push_back(measure_at(bundle, grid.steps));
  MeasureFlow flow(grid.times(), std::move(measures));
  return {std::move(bundle), std::move(flow)};
}

PathBundle solve_frozen_law(const DriftSpec& drift, const MeasureFlow& flow,
                            std::span<const double> x0, const TimeGrid& grid,
                            std::shared_ptr<const NoiseArray> noise) {
  if (flow.grid() != grid.times()) throw std::invalid_argument("solve_frozen_law: flow grid mismatch");
  if (noise->steps != grid.steps || noise->dim != drift.dim() || flow.dim() != drift.dim())
    throw std::invalid_argument("solve_frozen_law: noise/flow shape mismatch");
  check_x0(x0, drift.dim());

  PathBundle bundle = empty_bundle(x0, grid, std::move(noise));
  const int d = bundle.dim;
  const double dt = grid.dt();
  parallel_for(bundle.paths, [&](std::size_t lo, std::size_t hi) {
    double b[kMaxDim];
    for (std::size_t p = lo; p < hi; ++p) {
      auto s0 = bundle.state(p, 0);
      std::copy(x0.begin(), x0.end(), s0.begin());
      for (std::size_t k = 0; k < grid.steps; ++k) {
        const auto cur = bundle.state(p, k);
        drift.eval(grid.time(k), cur, flow.at(k), {b, static_cast<std::size_t>(d)});
        const auto db = bundle.noise->at(p, k);
        auto next = bundle.state(p, k + 1);
        for (int c = 0; c < d; ++c) next[c] = cur[c] + b[c] * dt + db[c];
        if (!all_finite(next))
          throw numeric_error("solve_frozen_law: non-finite state at step " + std::to_string(k + 1),
                              k + 1);
      }
    }
  });
  return bundle;
}

PicardResult picard_law_iteration(const DriftSpec& drift, std::span<const double> x0,
                                  const TimeGrid& grid, std::size_t paths, std::uint64_t seed,
                                  const PicardOptions& options, const MeasureFlow* initial_flow) {
  if (!(options.tol > 0.0) || options.max_iter < 1)
    throw std::invalid_argument("picard_law_iteration: need tol > 0 and max_iter >= 1");
  auto noise = make_noise(seed, paths, grid, drift.dim());

  MeasureFlow flow = initial_flow ? *initial_flow
                                  : flow_from_bundle(brownian_bundle(x0, grid, noise));
  detail::FlowDistanceCache cache(flow);

  std::vector<double> trace;
  for (std::size_t it = 0; it < options.max_iter; ++it) {
    PathBundle bundle = solve_frozen_law(drift, flow, x0, grid, noise);
    MeasureFlow next = flow_from_bundle(bundle);
    detail::FlowDistanceCache next_cache(next);  // each new flow is sorted once
    trace.push_back(cache.distance_to(next_cache));
    flow = std::move(next);
    next_cache.rebind(flow);
    cache = std::move(next_cache);
    if (trace.back() < options.tol) return {std::move(flow), std::move(bundle), std::move(trace)};
  }
  throw picard_error("picard_law_iteration: no fixed point within " +
                         std::to_string(options.max_iter) + " iterations (last distance " +
                         std::to_string(trace.back()) + ")",
                     trace);
}

}  // namespace mfsde

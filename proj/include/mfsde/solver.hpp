#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <vector>

#include "mfsde/drift.hpp"
#include "mfsde/measure.hpp"

namespace mfsde {

/// Uniform time grid 0 = t_0 < ... < t_M = T with step T/M.
struct TimeGrid {
  double horizon = 1.0;
  std::size_t steps = 1;

  TimeGrid() = default;
  TimeGrid(double T, std::size_t M) : horizon(T), steps(M) {
    if (!(T > 0.0) || M < 1) throw std::invalid_argument("TimeGrid: need T > 0 and M >= 1");
  }
  double dt() const { return horizon / static_cast<double>(steps); }
  double time(std::size_t k) const {
    return (k == steps) ? horizon : horizon * static_cast<double>(k) / static_cast<double>(steps);
  }
  std::size_t points() const { return steps + 1; }
  std::vector<double> times() const {
    std::vector<double> t(points());
    for (std::size_t k = 0; k < t.size(); ++k) t[k] = time(k);
    return t;
  }
  bool operator==(const TimeGrid&) const = default;
};

/// Stored Brownian increments dB (already scaled by sqrt(dt)), generated once
/// per experiment from the counter RNG and shared read-only by every solver
/// and estimator touching the experiment (common random numbers, Girsanov).
struct NoiseArray {
  std::uint64_t seed = 0;
  std::size_t paths = 0, steps = 0;
  int dim = 0;
  std::vector<double> db;  // paths x steps x dim

  std::span<const double> at(std::size_t path, std::size_t step) const {
    return {db.data() + (path * steps + step) * static_cast<std::size_t>(dim),
            static_cast<std::size_t>(dim)};
  }
};

std::shared_ptr<const NoiseArray> make_noise(std::uint64_t seed, std::size_t paths,
                                             const TimeGrid& grid, int dim);

/// N Euler paths plus the increments that drove them. Increments are kept, not
/// regenerated: Girsanov weights, BEL weights and common-random-number
/// differencing all reuse them.
struct PathBundle {
  std::vector<double> x0;
  TimeGrid grid;
  std::size_t paths = 0;
  int dim = 0;
  std::vector<double> states;  // paths x (steps+1) x dim
  std::shared_ptr<const NoiseArray> noise;

  std::span<const double> state(std::size_t path, std::size_t k) const {
    return {states.data() + (path * grid.points() + k) * static_cast<std::size_t>(dim),
            static_cast<std::size_t>(dim)};
  }
  std::span<double> state(std::size_t path, std::size_t k) {
    return {states.data() + (path * grid.points() + k) * static_cast<std::size_t>(dim),
            static_cast<std::size_t>(dim)};
  }
  std::uint64_t seed() const { return noise ? noise->seed : 0; }
};

/// Thrown when a state turns non-finite; carries the offending step.
class numeric_error : public std::runtime_error {
 public:
  numeric_error(const std::string& what, std::size_t step_index)
      : std::runtime_error(what), step(step_index) {}
  std::size_t step;
};

/// Thrown by picard_law_iteration on non-convergence; carries the distance
/// trace so the caller can decide to accept or reject.
class picard_error : public std::runtime_error {
 public:
  picard_error(const std::string& what, std::vector<double> trace_in)
      : std::runtime_error(what), trace(std::move(trace_in)) {}
  std::vector<double> trace;
};

/// Empirical flow of a bundle: measure k holds all paths' states at time t_k.
MeasureFlow flow_from_bundle(const PathBundle& bundle);

/// Interacting-particle Euler scheme: the law argument at step k is the
/// ensemble's own empirical measure. The per-step measure build is the only
/// synchronisation barrier; the particle update itself runs parallel.
std::pair<PathBundle, MeasureFlow> simulate_particles(const DriftSpec& drift,
                                                      std::span<const double> x0,
                                                      const TimeGrid& grid, std::size_t paths,
                                                      std::uint64_t seed);

/// Euler scheme for the frozen-law equation dY = b(t, Y, flow(t)) dt + dB with
/// caller-supplied increments; deterministic given the noise, no cross-path
/// coupling.
PathBundle solve_frozen_law(const DriftSpec& drift, const MeasureFlow& flow,
                            std::span<const double> x0, const TimeGrid& grid,
                            std::shared_ptr<const NoiseArray> noise);

struct PicardOptions {
  double tol = 1e-3;
  std::size_t max_iter = 25;
};

struct PicardResult {
  MeasureFlow flow;
  PathBundle bundle;
  std::vector<double> trace;  // trace[k] = flow_distance(mu^{k+1}, mu^k)
};

/// Fixed-point iteration on the measure flow: start from the zero-drift
/// ensemble x0 + B (same stored noise), repeatedly solve the frozen-law
/// equation and replace the flow with the solution's empirical law, until
/// flow_distance drops below tol.
PicardResult picard_law_iteration(const DriftSpec& drift, std::span<const double> x0,
                                  const TimeGrid& grid, std::size_t paths, std::uint64_t seed,
                                  const PicardOptions& options = {},
                                  const MeasureFlow* initial_flow = nullptr);

/// Zero-drift ensemble x0 + B built directly from the increments.
PathBundle brownian_bundle(std::span<const double> x0, const TimeGrid& grid,
                           std::shared_ptr<const NoiseArray> noise);

}  // namespace mfsde

#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mfsde/linalg.hpp"

namespace mfsde {

/// Uniform empirical probability measure: N atoms in R^d, mass 1/N each.
/// Immutable after construction; the mean and the first moment are cached with
/// deterministic pairwise sums so drift evaluations stay O(1) per call.
class EmpiricalMeasure {
 public:
  EmpiricalMeasure(std::vector<double> atoms, int dim);

  static EmpiricalMeasure dirac(std::span<const double> point, std::size_t count);
  static EmpiricalMeasure origin(int dim, std::size_t count);

  int dim() const { return dim_; }
  std::size_t size() const { return count_; }
  std::span<const double> atom(std::size_t i) const {
    return {atoms_.data() + i * static_cast<std::size_t>(dim_), static_cast<std::size_t>(dim_)};
  }
  std::span<const double> atoms() const { return atoms_; }

  std::span<const double> mean() const { return mean_; }
  /// (1/N) sum ||atom_i||; equals the Kantorovich distance to the point mass at 0.
  double first_moment() const { return first_moment_; }

  /// (1/N) sum f(atom_i), pairwise-summed.
  double expect(const std::function<double(std::span<const double>)>& f) const;

 private:
  int dim_;
  std::size_t count_;
  std::vector<double> atoms_;  // count x dim, row-major
  std::vector<double> mean_;
  double first_moment_;
};

double first_moment(const EmpiricalMeasure& mu);

inline constexpr std::size_t kExactMatchingLimit = 512;
inline constexpr int kSlicedProjections = 64;
inline constexpr std::uint64_t kProjectionSeed = 0x51D0CEDu;

struct KantorovichResult {
  double value = 0.0;
  bool approximate = false;  // true when the sliced estimate was used
};

/// Wasserstein-1 between equal-size uniform empirical measures.
/// d=1: exact via sorting. d>1, N <= kExactMatchingLimit: exact minimum-cost
/// perfect matching. Larger N: sliced approximation over fixed projections.
KantorovichResult kantorovich(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu);

double kantorovich_exact(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu);
double kantorovich_sliced(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu,
                          int projections = kSlicedProjections,
                          std::uint64_t seed = kProjectionSeed);

/// Time-indexed flow of empirical measures on a strictly increasing grid
/// starting at 0; all measures share (N, d).
class MeasureFlow {
 public:
  MeasureFlow(std::vector<double> grid, std::vector<EmpiricalMeasure> measures);

  std::size_t size() const { return measures_.size(); }
  const std::vector<double>& grid() const { return grid_; }
  const EmpiricalMeasure& at(std::size_t k) const { return measures_[k]; }
  int dim() const { return measures_.front().dim(); }
  std::size_t atoms() const { return measures_.front().size(); }

 private:
  std::vector<double> grid_;
  std::vector<EmpiricalMeasure> measures_;
};

/// max_k W1(f_k, g_k); the Picard stopping metric.
double flow_distance(const MeasureFlow& f, const MeasureFlow& g);

namespace detail {

/// Pre-sorted per-time slices (d=1) or per-(time, projection) slices (sliced
/// mode) of one flow. flow_distance(f, g) == FlowDistanceCache(f).distance_to
/// (FlowDistanceCache(g)) bit-for-bit; the Picard loop keeps the cache of the
/// current iterate so each new flow is sorted once.
class FlowDistanceCache {
 public:
  explicit FlowDistanceCache(const MeasureFlow& flow);
  double distance_to(const FlowDistanceCache& other) const;
  const MeasureFlow& flow() const { return *flow_; }
  /// Repoints at a moved-to flow with identical content.
  void rebind(const MeasureFlow& flow) { flow_ = &flow; }

 private:
  const MeasureFlow* flow_;
  bool sorted_mode_;                          // false -> small exact matching per time
  std::vector<std::vector<double>> sorted_;   // [time] (d=1) or [time*P + p]
};

void radix_sort(std::vector<double>& values, std::vector<double>& scratch);

}  // namespace detail

}  // namespace mfsde

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "mfsde/measure.hpp"
#include "mfsde/rng.hpp"
#include "mfsde/stats.hpp"

using namespace mfsde;

namespace {

EmpiricalMeasure random_cloud(int d, std::size_t n, std::uint64_t seed, double center = 0.0,
                              double scale = 1.0) {
  std::vector<double> atoms(n * static_cast<std::size_t>(d));
  for (std::size_t i = 0; i < n; ++i)
    for (int c = 0; c < d; ++c)
      atoms[i * d + c] =
          center + scale * rng::normal(seed, rng::Stream::probes, i, 7, static_cast<std::uint32_t>(c));
  return EmpiricalMeasure(std::move(atoms), d);
}

// Independent oracle: exhaustive search over all N! pairings.
double w1_by_enumeration(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu) {
  const std::size_t n = mu.size();
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto x = mu.atom(i);
      const auto y = nu.atom(perm[i]);
      double s = 0.0;
      for (int c = 0; c < mu.dim(); ++c) s += (x[c] - y[c]) * (x[c] - y[c]);
      total += std::sqrt(s);
    }
    best = std::min(best, total);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best / static_cast<double>(n);
}

}  // namespace

TEST_CASE("kantorovich trivial cases") {
  auto mu = random_cloud(2, 5, 11);
  CHECK(kantorovich(mu, mu).value == doctest::Approx(0.0).epsilon(1e-14));

  const std::vector<double> c = {3.0, -4.0};
  auto point = EmpiricalMeasure::dirac(c, 6);
  auto zero = EmpiricalMeasure::origin(2, 6);
  CHECK(kantorovich(point, zero).value == doctest::Approx(5.0).epsilon(1e-13));
}

TEST_CASE("kantorovich d=1 frozen example") {
  // exhaustive pairing of {0,1} vs {0,3}: min(0+2, 3+1)/2 = 1.0
  EmpiricalMeasure mu({0.0, 1.0}, 1);
  EmpiricalMeasure nu({0.0, 3.0}, 1);
  CHECK(kantorovich(mu, nu).value == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(w1_by_enumeration(mu, nu) == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("exact matching agrees with exhaustive enumeration (N <= 8)") {
  for (int d = 1; d <= 3; ++d) {
    for (std::uint64_t trial = 0; trial < 12; ++trial) {
      const std::size_t n = 2 + trial % 7;
      auto mu = random_cloud(d, n, 100 + trial * 2, -0.3, 1.4);
      auto nu = random_cloud(d, n, 101 + trial * 2, 0.4, 0.8);
      const double exact = kantorovich(mu, nu).value;
      const double brute = w1_by_enumeration(mu, nu);
      CHECK(exact == doctest::Approx(brute).epsilon(1e-12));
    }
  }
}

TEST_CASE("metric axioms in exact mode") {
  for (std::uint64_t trial = 0; trial < 10; ++trial) {
    const int d = 1 + static_cast<int>(trial % 3);
    const std::size_t n = 3 + trial % 6;
    auto a = random_cloud(d, n, 200 + 3 * trial);
    auto b = random_cloud(d, n, 201 + 3 * trial, 0.5);
    auto c = random_cloud(d, n, 202 + 3 * trial, -0.7, 2.0);
    const double ab = kantorovich(a, b).value;
    const double ba = kantorovich(b, a).value;
    const double ac = kantorovich(a, c).value;
    const double cb = kantorovich(c, b).value;
    CHECK(std::abs(ab - ba) <= 1e-12);
    CHECK(kantorovich(a, a).value <= 1e-12);
    CHECK(ab <= ac + cb + 1e-12);
    CHECK(ab >= 0.0);
  }
}

TEST_CASE("first moment") {
  CHECK(first_moment(EmpiricalMeasure::origin(3, 4)) == 0.0);
  const std::vector<double> c = {1.0, -2.0, 2.0};
  CHECK(first_moment(EmpiricalMeasure::dirac(c, 3)) == doctest::Approx(3.0).epsilon(1e-14));
  // hand evaluation: (||(3,4)|| + ||(0,0)||)/2 = 2.5
  EmpiricalMeasure two({3.0, 4.0, 0.0, 0.0}, 2);
  CHECK(first_moment(two) == doctest::Approx(2.5).epsilon(1e-14));

  for (std::uint64_t trial = 0; trial < 6; ++trial) {
    auto mu = random_cloud(2, 6, 300 + trial, 0.3, 1.1);
    auto zero = EmpiricalMeasure::origin(2, 6);
    CHECK(std::abs(first_moment(mu) - kantorovich(mu, zero).value) <= 1e-12);
  }
}

TEST_CASE("errors: dimension and count mismatches") {
  auto a = random_cloud(2, 4, 400);
  auto b = random_cloud(3, 4, 401);
  auto c = random_cloud(2, 5, 402);
  CHECK_THROWS_AS(kantorovich(a, b), std::invalid_argument);
  CHECK_THROWS_AS(kantorovich(a, c), std::invalid_argument);
  CHECK_THROWS_AS(EmpiricalMeasure({1.0, std::nan("")}, 1), std::invalid_argument);
}

TEST_CASE("sliced approximation: d=2, N=256, median relative error < 5%") {
  std::vector<double> rel_errors;
  for (std::uint64_t trial = 0; trial < 20; ++trial) {
    auto mu = random_cloud(2, 256, 500 + 2 * trial, 0.0, 1.0);
    auto nu = random_cloud(2, 256, 501 + 2 * trial, 0.8, 1.3);
    const double exact = kantorovich_exact(mu, nu);
    const double sliced = kantorovich_sliced(mu, nu);
    rel_errors.push_back(std::abs(sliced - exact) / exact);
  }
  CHECK(median(rel_errors) < 0.05);
}

TEST_CASE("kantorovich auto mode flags approximation") {
  auto small = random_cloud(2, 16, 600);
  CHECK_FALSE(kantorovich(small, small).approximate);
  auto big_a = random_cloud(2, kExactMatchingLimit + 1, 601);
  auto big_b = random_cloud(2, kExactMatchingLimit + 1, 602, 0.2);
  CHECK(kantorovich(big_a, big_b).approximate);
}

namespace {

MeasureFlow single_atom_flow(const std::vector<double>& grid,
                             const std::function<double(double)>& position) {
  std::vector<EmpiricalMeasure> ms;
  for (double t : grid) ms.push_back(EmpiricalMeasure({position(t)}, 1));
  return MeasureFlow(grid, std::move(ms));
}

}  // namespace

TEST_CASE("flow distance") {
  const std::vector<double> grid = {0.0, 1.0};
  const double x = 1.7;
  auto f = single_atom_flow(grid, [&](double t) { return x * std::exp(-t); });
  auto g = single_atom_flow(grid, [](double) { return 0.0; });
  CHECK(flow_distance(f, f) == 0.0);
  // pointwise point-mass distances: max(|x|, |x| e^{-1}) = |x|
  CHECK(flow_distance(f, g) == doctest::Approx(x).epsilon(1e-14));

  // translation by v moves every pointwise distance to exactly ||v||
  auto h = single_atom_flow(grid, [&](double t) { return x * std::exp(-t) + 0.25; });
  CHECK(flow_distance(f, h) == doctest::Approx(0.25).epsilon(1e-13));

  auto other_grid = single_atom_flow({0.0, 2.0}, [](double) { return 0.0; });
  CHECK_THROWS_AS(flow_distance(f, other_grid), std::invalid_argument);
}

TEST_CASE("flow distance equals cached flow distance (both modes)") {
  for (int d : {1, 2}) {
    const std::size_t n = d == 1 ? 700 : 600;  // sliced kicks in for d=2 above 512
    std::vector<double> grid = {0.0, 0.5, 1.0};
    std::vector<EmpiricalMeasure> fm, gm;
    for (std::uint64_t k = 0; k < grid.size(); ++k) {
      fm.push_back(random_cloud(d, n, 700 + 10 * k, 0.0, 1.0 + k));
      gm.push_back(random_cloud(d, n, 705 + 10 * k, 0.3, 1.0));
    }
    MeasureFlow f(grid, std::move(fm)), g(grid, std::move(gm));
    detail::FlowDistanceCache cf(f), cg(g);
    CHECK(flow_distance(f, g) == cf.distance_to(cg));
    double direct = 0.0;
    for (std::size_t k = 0; k < grid.size(); ++k)
      direct = std::max(direct, kantorovich(f.at(k), g.at(k)).value);
    CHECK(flow_distance(f, g) == doctest::Approx(direct).epsilon(1e-15));
  }
}

TEST_CASE("radix sort matches std::sort") {
  for (std::uint64_t trial = 0; trial < 8; ++trial) {
    const std::size_t n = trial < 4 ? 257 : 5000;  // below and above the radix cutoff
    std::vector<double> v(n), scratch;
    for (std::size_t i = 0; i < n; ++i)
      v[i] = std::ldexp(rng::normal(900 + trial, rng::Stream::probes, i, 0, 0),
                        static_cast<int>(i % 13) - 6);
    auto ref = v;
    std::sort(ref.begin(), ref.end());
    detail::radix_sort(v, scratch);
    CHECK(v == ref);
  }
}

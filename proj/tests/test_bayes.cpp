#include <doctest.h>

#include <cmath>

#include "cepminer/bayes.hpp"
#include "support/benchmarks.hpp"
#include "support/oracles.hpp"

using namespace cepminer;

namespace {

SearchSpace line(double lo, double hi) {
  SearchSpace s;
  s.dims.push_back({1, "x", lo, hi});
  return s;
}

Eigen::VectorXd point(double v) { return Eigen::VectorXd::Constant(1, v); }

}  // namespace

TEST_CASE("search space bounds come from the observed values") {
  const EventSchema s = oracle::small_schema();
  std::vector<Record> recs{{0, 0, {2.0, 5.0}}, {1, 1, {8.0, std::nullopt}}, {2, 2, {4.0, 5.0}}};
  CHECK(extract_holes(parse_pattern("EVENTS SEQ(A a) WHERE a.x > 1 WITHIN 1s", s), s, recs).empty());
  const auto space = extract_holes(parse_pattern("EVENTS SEQ(A a, B b) WHERE b.x = ?1 AND a.y < ?2 WITHIN 1s", s), s, recs);
  // normalization moves "a.y < ?2" onto a, so ?2 comes first
  REQUIRE(space.size() == 2);
  CHECK(space.dims[0].attribute == "y");
  CHECK(space.dims[0].hole_id == 2);
  // a single observed value still yields a proper interval
  CHECK(space.dims[0].lower < 5.0);
  CHECK(space.dims[0].upper > 5.0);
  CHECK(space.dims[1].attribute == "x");
  CHECK(space.dims[1].lower == doctest::Approx(2.0 - 0.3));
  CHECK(space.dims[1].upper == doctest::Approx(8.0 + 0.3));
  for (const auto& r : recs) CHECK(space.contains(Eigen::Vector2d(5.0, *r.attr(0))));
  const std::vector<Record> no_y{{0, 0, {1.0, std::nullopt}}};
  CHECK_THROWS(extract_holes(parse_pattern("EVENTS SEQ(A a) WHERE a.y = ?1 WITHIN 1s", s), s, no_y));
}

TEST_CASE("the surrogate interpolates its observations") {
  GaussianProcess gp(Eigen::VectorXd::Constant(1, 2.0));
  for (const double x : {0.0, 2.0, 6.5, 9.0}) gp.add(point(x), std::sin(x) * 5.0 + 3.0);
  gp.add(point(4.0), std::sin(4.0) * 5.0 + 3.0);
  const auto [m, v] = gp.predict(point(4.0));
  CHECK(m == doctest::Approx(std::sin(4.0) * 5.0 + 3.0).epsilon(1e-4));
  CHECK(v < 1e-4);
  const auto far = gp.predict(point(100.0));
  CHECK(far.second > 1.0);  // prior variance in objective units
  // repeated inputs are absorbed by jitter
  gp.add(point(4.0), std::sin(4.0) * 5.0 + 3.0);
  CHECK(std::isfinite(gp.predict(point(4.5)).first));
  CHECK_THROWS(gp.add(Eigen::Vector2d(1, 2), 0.0));
  CHECK_THROWS(gp.add(point(1.0), std::nan("")));
}

TEST_CASE("expected improvement basics") {
  CHECK(expected_improvement(1.0, 0.0, 0.0, 0.0) == doctest::Approx(1.0));
  CHECK(expected_improvement(-1.0, 0.0, 0.0, 0.0) == 0.0);
  CHECK(expected_improvement(0.0, 1.0, 0.0, 0.0) == doctest::Approx(1.0 / std::sqrt(2.0 * M_PI)));
  CHECK(expected_improvement(0.0, 4.0, 0.0, 0.0) > expected_improvement(0.0, 1.0, 0.0, 0.0));
}

TEST_CASE("proposals stay in bounds and follow expected improvement") {
  const SearchSpace space = line(0.0, 10.0);
  nn::Rng rng(2);
  GaussianProcess empty(Eigen::VectorXd::Constant(1, 2.0));
  for (const auto& x : propose(empty, space, 3, rng)) CHECK(space.contains(x));
  CHECK_THROWS(propose(empty, space, 0, rng));

  int wins = 0;
  for (int trial = 0; trial < 100; ++trial) {
    nn::Rng r(static_cast<std::uint64_t>(trial));
    GaussianProcess gp(Eigen::VectorXd::Constant(1, 2.0));
    for (int i = 0; i < 5; ++i) {
      const double x = space.sample(r)[0];
      gp.add(point(x), -(x - 3.0) * (x - 3.0));
    }
    const auto best = propose(gp, space, 3, r);
    CHECK(best.size() == 3);
    for (const auto& x : best) CHECK(space.contains(x));
    const double draw = space.sample(r)[0];
    wins += std::fabs(best[0][0] - 3.0) < std::fabs(draw - 3.0);
  }
  CHECK(wins >= 80);
}

TEST_CASE("completion respects the budget and keeps a running maximum") {
  const EventSchema s = oracle::small_schema();
  const Pattern formula = parse_pattern("EVENTS SEQ(A a, B b) WHERE a.x > ?1 AND b.y < ?2 WITHIN 1s", s);
  SearchSpace space;
  space.dims = {{1, "x", 0.0, 10.0}, {2, "y", 0.0, 10.0}};
  nn::Rng rng(3);
  int calls = 0;
  const Objective f = [&](const std::vector<double>& v) {
    ++calls;
    return -(v[0] - 2.0) * (v[0] - 2.0) - (v[1] - 8.0) * (v[1] - 8.0);
  };
  const auto r = complete(formula, space, f, CompletionBudget{}, rng);
  CHECK(calls <= 30);
  CHECK(r.evaluations == static_cast<std::size_t>(calls));
  for (std::size_t i = 1; i < r.best_per_iteration.size(); ++i) {
    CHECK(r.best_per_iteration[i] >= r.best_per_iteration[i - 1]);
  }
  CHECK_FALSE(r.pattern.has_holes());
  CHECK(r.pattern == substitute_holes(formula, r.best_values));
  CHECK(r.best_objective == doctest::Approx(f(r.best_values)));

  // a flat objective stops after five stale iterations
  calls = 0;
  const auto flat = complete(formula, space, [&](const std::vector<double>&) { ++calls; return 1.0; },
                             CompletionBudget{}, rng);
  CHECK(flat.best_per_iteration.size() == 6);
  CHECK(calls == 18);
}

TEST_CASE("hole-free formulas complete to themselves") {
  const EventSchema s = oracle::small_schema();
  const Pattern p = parse_pattern("EVENTS SEQ(A a) WHERE a.x > 1 WITHIN 1s", s);
  nn::Rng rng(4);
  const auto r = complete(p, SearchSpace{}, [](const std::vector<double>& v) { return v.empty() ? 5.0 : -1.0; },
                          CompletionBudget{}, rng);
  CHECK(r.pattern == p);
  CHECK(r.best_objective == 5.0);
  CHECK(r.evaluations == 1);
}

TEST_CASE("planted constant is recovered more often than by uniform search") {
  const bench::ConstantBenchmark b;
  CHECK(std::fabs(b.optimum - 7.0) < 1.5);
  const auto rates = bench::recovery_rates(b, 20);
  CHECK(rates.bayes >= 0.8);
  CHECK(rates.bayes > rates.uniform);
}

#include <gtest/gtest.h>

#include <functional>
#include <random>

#include "common.hpp"

using namespace hmmcpd;
using namespace testing_support;

namespace {

std::vector<double> random_simplex(std::mt19937_64& gen, std::size_t K) {
  std::exponential_distribution<double> E(1.0);
  std::vector<double> p(K);
  double s = 0.0;
  for (double& v : p) s += (v = E(gen));
  for (double& v : p) v /= s;
  return p;
}

std::vector<double> eta_of(const ModelSpec& m) { return {m.eta.data(), m.eta.data() + m.eta.size()}; }

/// Exact finite-horizon recursion from the belief pi: at most `depth` further
/// observations, no grid.
double horizon_value(const BeliefModel& bm, const std::vector<double>& pi, int depth) {
  const double stop = bm.stop_cost(pi).first;
  if (depth == 0) return stop;
  double cont = bm.step_cost(pi);
  std::vector<double> next;
  for (std::size_t x = 0; x < bm.alphabet(); ++x) {
    const double px = bm.transition(pi, x, next);
    if (px > 0.0) cont += px * horizon_value(bm, next, depth - 1);
  }
  return std::min(stop, cont);
}

ValueIterationParams quick(std::size_t resolution) {
  ValueIterationParams p;
  p.resolution = resolution;
  return p;
}

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::FormatError;
}

}  // namespace

TEST(SimplexGrid, SizeAndRankBijection) {
  for (std::size_t K : {2u, 3u, 4u, 5u})
    for (std::size_t r : {1u, 7u, 20u}) {
      const SimplexGrid g(K, r);
      // C(r + K - 1, K - 1)
      double expect = 1.0;
      for (std::size_t k = 1; k < K; ++k) expect = expect * static_cast<double>(r + k) / static_cast<double>(k);
      ASSERT_EQ(g.size(), static_cast<std::size_t>(std::llround(expect)));
      for (std::size_t n = 0; n < g.size(); ++n) {
        const auto c = g.counts(n);
        std::vector<int> y(K - 1);
        int acc = 0, total = 0;
        for (std::size_t p = K - 1; p >= 1; --p) y[p - 1] = (acc += c[p]);
        for (auto v : c) total += v;
        ASSERT_EQ(total, static_cast<int>(r));
        ASSERT_EQ(g.rank(y), n);
      }
    }
}

TEST(SimplexGrid, InterpolationReproducesAffineFunctions) {
  std::mt19937_64 gen(3);
  for (std::size_t K : {2u, 3u, 4u, 5u}) {
    const SimplexGrid g(K, 13);
    const auto coef = random_simplex(gen, K);
    std::vector<double> values(g.size());
    for (std::size_t n = 0; n < g.size(); ++n) {
      const auto p = g.point(n);
      values[n] = 0.0;
      for (std::size_t y = 0; y < K; ++y) values[n] += coef[y] * p[y];
    }
    for (int t = 0; t < 2000; ++t) {
      const auto pi = random_simplex(gen, K);
      double exact = 0.0;
      for (std::size_t y = 0; y < K; ++y) exact += coef[y] * pi[y];
      ASSERT_NEAR(g.interpolate(values, pi), exact, 1e-12);
      SimplexGrid::Stencil s;
      const std::size_t m = g.locate(pi, s);
      ASSERT_LE(m, K);
      double w = 0.0;
      for (std::size_t k = 0; k < m; ++k) {
        ASSERT_GT(s[k].weight, 0.0);
        w += s[k].weight;
      }
      ASSERT_NEAR(w, 1.0, 1e-12);
    }
    for (std::size_t n = 0; n < g.size(); n += 7) EXPECT_NEAR(g.interpolate(values, g.point(n)), values[n], 1e-12);
  }
}

TEST(SimplexGrid, NearestNode) {
  std::mt19937_64 gen(4);
  const SimplexGrid g(4, 20);
  for (std::size_t n = 0; n < g.size(); ++n) ASSERT_EQ(g.nearest(g.point(n)), n);
  for (int t = 0; t < 2000; ++t) {
    const auto pi = random_simplex(gen, 4);
    const auto p = g.point(g.nearest(pi));
    for (std::size_t y = 0; y < 4; ++y) ASSERT_LE(std::abs(p[y] - pi[y]), 1.0 / 20 + 1e-12);
  }
}

TEST(SimplexGrid, Guards) {
  EXPECT_EQ(code_of([] { SimplexGrid(6, 10); }), ErrorCode::ResourceGuard);
  EXPECT_EQ(code_of([] { SimplexGrid(1, 10); }), ErrorCode::ResourceGuard);
  EXPECT_EQ(code_of([] { SimplexGrid(3, 0); }), ErrorCode::ResourceGuard);
}

TEST(ValueIteration, FixedPointAndBounds) {
  const auto m = case1();
  const auto costs = uniform_costs(m, 0.1);
  const auto sol = value_iteration(m, costs, quick(30));
  ASSERT_TRUE(sol.converged);
  EXPECT_FALSE(sol.degenerate);
  for (std::size_t n = 0; n < sol.grid.size(); ++n) {
    ASSERT_LE(sol.value[n], sol.stop_cost[n] + 1e-15);
    ASSERT_GE(sol.value[n], 0.0);
    ASSERT_NEAR(sol.value[n], std::min(sol.stop_cost[n], sol.continuation[n]), 1e-7);
    ASSERT_EQ(sol.stops(n), sol.stop_cost[n] <= sol.continuation[n]);
  }
  // at a closed-state vertex the right declaration is free
  for (std::size_t y = 2; y < 4; ++y) {
    std::vector<double> e(4, 0.0);
    e[y] = 1.0;
    const std::size_t n = sol.grid.nearest(e);
    EXPECT_EQ(sol.value[n], 0.0);
    EXPECT_EQ(sol.decision[n], m.class_of[y]);
  }
}

TEST(ValueIteration, IteratesIncreaseFromZero) {
  const auto m = case2();
  const auto costs = uniform_costs(m, 0.05);
  ValueIterationParams p = quick(20);
  p.throw_on_nonconvergence = false;
  std::vector<double> prev(SimplexGrid(4, 20).size(), 0.0);
  for (std::size_t k = 1; k <= 6; ++k) {
    p.max_iters = k;
    const auto sol = value_iteration(m, costs, p);
    EXPECT_FALSE(sol.converged);
    for (std::size_t n = 0; n < prev.size(); ++n) ASSERT_GE(sol.value[n], prev[n] - 1e-15);
    prev = sol.value;
  }
}

TEST(ValueIteration, MatchesExactFiniteHorizonRecursion) {
  // W_N decreases to V as the horizon grows; at cbar = 0.5 it settles within a few steps
  const auto m = case1();
  const auto costs = uniform_costs(m, 0.5);
  const BeliefModel bm(m, costs);
  const auto eta = eta_of(m);
  double prev = kInf;
  for (int d = 0; d <= 7; ++d) {
    const double w = horizon_value(bm, eta, d);
    EXPECT_LE(w, prev + 1e-15);
    prev = w;
  }
  EXPECT_NEAR(horizon_value(bm, eta, 8), prev, 2e-3);
  const auto sol = value_iteration(m, costs, quick(70));
  EXPECT_NEAR(sol.value_at_eta, prev, 0.01);
}

TEST(ValueIteration, ResolutionRefinementIsStable) {
  const auto m = case1();
  const auto costs = uniform_costs(m, 0.1);
  const auto coarse = value_iteration(m, costs, quick(40));
  const auto fine = value_iteration(m, costs, quick(70));
  EXPECT_NEAR(coarse.value_at_eta, fine.value_at_eta, 0.01);
}

TEST(ValueIteration, ZeroDelayCostIsDegenerate) {
  const auto m = case1();
  const auto sol = value_iteration(m, uniform_costs(m, 0.0), quick(10));
  EXPECT_TRUE(sol.degenerate);
}

TEST(ValueIteration, Errors) {
  const auto m = case1();
  EXPECT_EQ(code_of([&] { value_iteration(m, uniform_costs(m, 0.1, 2), quick(10)); }), ErrorCode::ShapeMismatch);
  auto g = m;
  for (std::size_t y = 0; y < g.size(); ++y) g.densities[y] = Gaussian{static_cast<double>(y), 1.0};
  EXPECT_EQ(code_of([&] { value_iteration(g, uniform_costs(g, 0.1), quick(10)); }), ErrorCode::UnsupportedDensity);
  const auto big = multistate1();
  ASSERT_GT(big.size(), kMaxGridStates);
  EXPECT_EQ(code_of([&] { value_iteration(big, uniform_costs(big, 0.1), quick(10)); }), ErrorCode::ResourceGuard);
  auto p = quick(30);
  p.max_iters = 2;
  EXPECT_EQ(code_of([&] { value_iteration(m, uniform_costs(m, 0.01), p); }), ErrorCode::NotConverged);
}

TEST(GridPolicy, ExpensiveObservationStopsAtOnce) {
  // with c = 10 on every state, continuing always costs more than any declaration
  const auto m = case1();
  auto costs = uniform_costs(m, 10.0);
  costs.c.setConstant(10.0);
  const auto sol = value_iteration(m, costs, quick(20));
  for (std::size_t n = 0; n < sol.grid.size(); ++n) ASSERT_TRUE(sol.stops(n));
  EvalOptions opt;
  opt.threads = 2;
  const auto pol = evaluate_policy_full(m, costs, sol, 20000, 21, PolicyLookup::Lookahead, kDefaultMaxHorizon, opt).report;
  const FixedTimeRule once{1, 0};
  const auto fixed = evaluate_with(
                         m, costs,
                         [&](const PosteriorFilter& f, TrackedPath& p) { return run_strategy(f, p, once, 10); }, 20000, 21,
                         opt)
                         .report;
  EXPECT_EQ(pol.bayes.mean, fixed.bayes.mean);
  EXPECT_EQ(pol.edd.mean, fixed.edd.mean);
}

TEST(GridPolicy, NoWorseThanThePosteriorRule) {
  const auto m = case1();
  const auto costs = uniform_costs(m, 0.1);
  const auto sol = value_iteration(m, costs, quick(70));
  const auto lim = limits(m, chain_facts(m));
  const auto A = a_from_c(m, costs, lim, sigma_default_vector(m, costs, lim));
  // same seed, same paths up to stopping: the paired difference has a much smaller spread
  EvalOptions keep;
  keep.keep_outcomes = true;
  const auto opt_ev = evaluate_policy_full(m, costs, sol, 40000, 22, PolicyLookup::Lookahead, kDefaultMaxHorizon, keep);
  const auto asy_ev = evaluate_full(m, costs, StrategySpec::pi(A), 40000, 22, keep);
  std::vector<double> diff(40000);
  for (std::size_t p = 0; p < diff.size(); ++p)
    diff[p] = opt_ev.outcomes[p].delay + opt_ev.outcomes[p].terminal - asy_ev.outcomes[p].delay - asy_ev.outcomes[p].terminal;
  const auto d = sample_stats(diff);
  EXPECT_LE(d.mean, 2 * d.se());
  const auto& opt = opt_ev.report;
  // and the simulated risk of the grid policy tracks the computed value
  EXPECT_LT(std::abs(opt.bayes.mean - sol.value_at_eta), 3 * opt.bayes.se() + 0.01);
  for (auto lookup : {PolicyLookup::Interpolate, PolicyLookup::Nearest}) {
    const auto r = evaluate_policy(m, costs, sol, 20000, 23, lookup);
    EXPECT_LT(std::abs(r.bayes.mean - sol.value_at_eta), 3 * r.bayes.se() + 0.02);
  }
}

#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "hmmcpd/model.hpp"
#include "hmmcpd/parallel.hpp"
#include "hmmcpd/posterior.hpp"
#include "hmmcpd/riskeval.hpp"
#include "hmmcpd/strategy.hpp"

namespace hmmcpd {

inline constexpr std::size_t kMaxGridStates = 5;

/// Regular lattice {k / r : k in N^K, sum k = r} on the probability simplex.
///
/// Nodes are ranked through cumulative coordinates y_p = sum_{l >= p} k_l,
/// p = 1..K-1, which form a non-increasing sequence in [0, r]. Off-grid
/// points are interpolated on the Freudenthal (Kuhn) triangulation of those
/// coordinates.
class SimplexGrid {
 public:
  struct Vertex {
    std::uint32_t node;
    double weight;
  };
  using Stencil = std::array<Vertex, kMaxGridStates>;

  SimplexGrid(std::size_t states, std::size_t resolution) : K_(states), L_(states - 1), r_(resolution) {
    if (states < 2 || states > kMaxGridStates)
      throw Error(ErrorCode::ResourceGuard, "grid supports 2.." + std::to_string(kMaxGridStates) + " states");
    if (resolution < 1) throw Error(ErrorCode::ResourceGuard, "resolution must be positive");
    const std::size_t top = r_ + L_ + 1;
    binom_.assign((top + 1) * (L_ + 2), 0);
    for (std::size_t n = 0; n <= top; ++n) {
      binom(n, 0) = 1;
      for (std::size_t k = 1; k <= std::min(n, L_ + 1); ++k) binom(n, k) = binom(n - 1, k - 1) + (k <= n - 1 ? binom(n - 1, k) : 0);
    }
    size_ = static_cast<std::size_t>(binom(r_ + L_, L_));
    counts_.assign(size_ * K_, 0);
    std::vector<int> y(L_, 0);
    enumerate(y, 0, static_cast<int>(r_));
  }

  std::size_t states() const { return K_; }
  std::size_t resolution() const { return r_; }
  std::size_t size() const { return size_; }

  /// Lattice counts k_y of a node (sum r).
  std::span<const std::uint16_t> counts(std::size_t node) const { return {counts_.data() + node * K_, K_}; }

  std::vector<double> point(std::size_t node) const {
    std::vector<double> p(K_);
    for (std::size_t y = 0; y < K_; ++y) p[y] = static_cast<double>(counts_[node * K_ + y]) / static_cast<double>(r_);
    return p;
  }

  /// Rank of a non-increasing cumulative sequence y_1..y_L.
  std::size_t rank(std::span<const int> y) const {
    std::uint64_t out = 0;
    for (std::size_t p = 0; p < L_; ++p) out += binom(static_cast<std::size_t>(y[p]) + L_ - 1 - p, L_ - p);
    return static_cast<std::size_t>(out);
  }

  /// Barycentric stencil of `pi` (at most K vertices with positive weight).
  std::size_t locate(std::span<const double> pi, Stencil& out) const {
    std::array<double, kMaxGridStates> x{};
    double acc = 0.0;
    for (std::size_t p = L_; p >= 1; --p) {
      acc += pi[p];
      x[p - 1] = std::clamp(acc * static_cast<double>(r_), 0.0, static_cast<double>(r_));
    }
    for (std::size_t p = 1; p < L_; ++p) x[p] = std::min(x[p], x[p - 1]);
    std::array<int, kMaxGridStates> base{};
    std::array<double, kMaxGridStates> frac{};
    std::array<std::size_t, kMaxGridStates> order{};
    for (std::size_t p = 0; p < L_; ++p) {
      const double f = std::floor(x[p]);
      base[p] = static_cast<int>(f);
      frac[p] = x[p] - f;
      order[p] = p;
    }
    // descending fractional parts, lower index first on ties keeps every vertex non-increasing
    std::stable_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(L_),
                     [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
    std::size_t n = 0;
    std::array<int, kMaxGridStates> v = base;
    double w = 1.0 - (L_ > 0 ? frac[order[0]] : 0.0);
    if (w > 0.0) out[n++] = {static_cast<std::uint32_t>(rank({v.data(), L_})), w};
    for (std::size_t k = 0; k < L_; ++k) {
      v[order[k]] += 1;
      w = frac[order[k]] - (k + 1 < L_ ? frac[order[k + 1]] : 0.0);
      if (w > 0.0) out[n++] = {static_cast<std::uint32_t>(rank({v.data(), L_})), w};
    }
    return n;
  }

  double interpolate(std::span<const double> values, std::span<const double> pi) const {
    Stencil s;
    const std::size_t n = locate(pi, s);
    double v = 0.0;
    for (std::size_t k = 0; k < n; ++k) v += s[k].weight * values[s[k].node];
    return v;
  }

  /// Node with the closest lattice point (largest-remainder rounding of r pi).
  std::size_t nearest(std::span<const double> pi) const {
    std::vector<int> k(K_);
    std::vector<double> rem(K_);
    int used = 0;
    for (std::size_t y = 0; y < K_; ++y) {
      const double t = std::max(0.0, pi[y]) * static_cast<double>(r_);
      k[y] = static_cast<int>(std::floor(t));
      rem[y] = t - k[y];
      used += k[y];
    }
    std::vector<std::size_t> idx(K_);
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return rem[a] > rem[b]; });
    for (std::size_t t = 0; used < static_cast<int>(r_); t = (t + 1) % K_, ++used) ++k[idx[t]];
    std::vector<int> y(L_);
    int acc = 0;
    for (std::size_t p = L_; p >= 1; --p) {
      acc += k[p];
      y[p - 1] = acc;
    }
    return rank(y);
  }

 private:
  std::uint64_t& binom(std::size_t n, std::size_t k) { return binom_[n * (L_ + 2) + k]; }
  std::uint64_t binom(std::size_t n, std::size_t k) const { return k > n ? 0 : binom_[n * (L_ + 2) + k]; }

  void enumerate(std::vector<int>& y, std::size_t p, int hi) {
    if (p == L_) {
      const std::size_t node = rank(y);
      std::uint16_t* k = counts_.data() + node * K_;
      k[0] = static_cast<std::uint16_t>(static_cast<int>(r_) - (L_ ? y[0] : 0));
      for (std::size_t q = 1; q < L_; ++q) k[q] = static_cast<std::uint16_t>(y[q - 1] - y[q]);
      k[L_] = static_cast<std::uint16_t>(y[L_ - 1]);
      return;
    }
    for (int v = 0; v <= hi; ++v) {
      y[p] = v;
      enumerate(y, p + 1, v);
    }
  }

  std::size_t K_, L_, r_;
  std::size_t size_ = 0;
  std::vector<std::uint64_t> binom_;
  std::vector<std::uint16_t> counts_;
};

/// Belief-space quantities for Problem 1 with m = 1 on a finite alphabet.
class BeliefModel {
 public:
  BeliefModel(const ModelSpec& model, const CostSpec& costs) : model_(model), costs_(costs) {
    if (costs.m_power != 1) throw Error(ErrorCode::ShapeMismatch, "the benchmark covers m = 1 only");
    for (const auto& d : model.densities)
      if (!is_categorical(d)) throw Error(ErrorCode::UnsupportedDensity, "the benchmark needs finite-alphabet densities");
    alphabet_ = alphabet_size(model.densities.front());
    const auto K = static_cast<Eigen::Index>(model.size());
    f_ = Eigen::MatrixXd(K, static_cast<Eigen::Index>(alphabet_));
    for (Eigen::Index y = 0; y < K; ++y)
      for (std::size_t x = 0; x < alphabet_; ++x)
        f_(y, static_cast<Eigen::Index>(x)) = std::get<Categorical>(model.densities[static_cast<std::size_t>(y)]).probs[x];
  }

  std::size_t alphabet() const { return alphabet_; }
  std::size_t states() const { return model_.size(); }

  /// min_i sum_{y not in Y_i} a_{yi} pi(y) and its argmin (smallest index on ties).
  std::pair<double, int> stop_cost(std::span<const double> pi) const {
    double best = kInf;
    int d = 1;
    for (int i = 1; i <= model_.num_classes; ++i) {
      double s = 0.0;
      for (std::size_t y = 0; y < pi.size(); ++y)
        if (model_.class_of[y] != i) s += costs_.a(static_cast<Eigen::Index>(y), i) * pi[y];
      if (s < best) {
        best = s;
        d = i;
      }
    }
    return {best, d};
  }

  double step_cost(std::span<const double> pi) const {
    double s = 0.0;
    for (std::size_t y = 0; y < pi.size(); ++y) s += costs_.c(static_cast<Eigen::Index>(y)) * pi[y];
    return s;
  }

  /// Predictive mass p(x | pi) and the updated belief T(pi, x) in `next`.
  double transition(std::span<const double> pi, std::size_t x, std::vector<double>& next) const {
    const auto K = model_.size();
    next.assign(K, 0.0);
    for (std::size_t a = 0; a < K; ++a) {
      if (pi[a] == 0.0) continue;
      for (std::size_t b = 0; b < K; ++b)
        next[b] += pi[a] * model_.trans(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
    }
    double z = 0.0;
    for (std::size_t b = 0; b < K; ++b) {
      next[b] *= f_(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(x));
      z += next[b];
    }
    if (z > 0.0)
      for (double& v : next) v /= z;
    return z;
  }

 private:
  const ModelSpec& model_;
  const CostSpec& costs_;
  std::size_t alphabet_ = 0;
  Eigen::MatrixXd f_;
};

struct ValueIterationParams {
  std::size_t resolution = 70;
  double tol = 1e-8;
  std::size_t max_iters = 100'000;
  std::size_t threads = 0;
  bool throw_on_nonconvergence = true;
};

struct OptimalSolution {
  SimplexGrid grid;
  std::vector<double> value;
  std::vector<double> stop_cost;
  std::vector<double> continuation;  // c.pi + E V(T(pi, X)) at convergence
  std::vector<int> decision;         // 0 = continue, otherwise the class to declare
  std::size_t iterations = 0;
  double residual = kInf;
  bool converged = false;
  bool degenerate = false;  // c == 0 everywhere
  double value_at_eta = std::nan("");

  bool stops(std::size_t node) const { return decision[node] != 0; }
};

namespace detail {

struct SparseOperator {
  std::vector<std::uint32_t> offset;  // CSR row pointers
  std::vector<std::uint32_t> col;
  std::vector<double> w;
};

inline SparseOperator build_operator(const SimplexGrid& grid, const BeliefModel& bm, std::size_t threads) {
  const std::size_t N = grid.size();
  const std::size_t per = bm.alphabet() * grid.states();
  std::vector<std::uint32_t> cols(N * per, 0);
  std::vector<double> ws(N * per, 0.0);
  std::vector<std::uint8_t> used(N, 0);
  parallel_for(
      N,
      [&](std::size_t n) {
        const auto pi = grid.point(n);
        std::vector<double> next;
        SimplexGrid::Stencil s;
        std::size_t k = 0;
        for (std::size_t x = 0; x < bm.alphabet(); ++x) {
          const double px = bm.transition(pi, x, next);
          if (px <= 0.0) continue;
          const std::size_t m = grid.locate(next, s);
          for (std::size_t v = 0; v < m; ++v) {
            cols[n * per + k] = s[v].node;
            ws[n * per + k] = px * s[v].weight;
            ++k;
          }
        }
        used[n] = static_cast<std::uint8_t>(k);
      },
      threads);
  SparseOperator op;
  op.offset.resize(N + 1, 0);
  for (std::size_t n = 0; n < N; ++n) op.offset[n + 1] = op.offset[n] + used[n];
  op.col.resize(op.offset[N]);
  op.w.resize(op.offset[N]);
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t k = 0; k < used[n]; ++k) {
      op.col[op.offset[n] + k] = cols[n * per + k];
      op.w[op.offset[n] + k] = ws[n * per + k];
    }
  return op;
}

}  // namespace detail

/// Jacobi value iteration from V = 0 for
/// V(pi) = min{ stop(pi), c.pi + sum_x p(x | pi) V(T(pi, x)) }.
inline OptimalSolution value_iteration(const ModelSpec& model, const CostSpec& costs, const ValueIterationParams& prm = {}) {
  if (model.size() > kMaxGridStates)
    throw Error(ErrorCode::ResourceGuard, "value iteration is limited to " + std::to_string(kMaxGridStates) + " states");
  const BeliefModel bm(model, costs);
  OptimalSolution sol{SimplexGrid(model.size(), prm.resolution), {}, {}, {}, {}, 0, kInf, false, false, std::nan("")};
  const auto& grid = sol.grid;
  const std::size_t N = grid.size();
  const auto op = detail::build_operator(grid, bm, prm.threads);
  sol.stop_cost.resize(N);
  std::vector<double> step(N);
  std::vector<int> argstop(N);
  for (std::size_t n = 0; n < N; ++n) {
    const auto pi = grid.point(n);
    const auto [s, d] = bm.stop_cost(pi);
    sol.stop_cost[n] = s;
    argstop[n] = d;
    step[n] = bm.step_cost(pi);
  }
  sol.degenerate = costs.c.cwiseAbs().maxCoeff() == 0.0;

  std::vector<double> V(N, 0.0), next(N, 0.0);
  sol.continuation.assign(N, 0.0);
  auto cont = [&](std::size_t n, const std::vector<double>& v) {
    double acc = step[n];
    for (std::uint32_t k = op.offset[n]; k < op.offset[n + 1]; ++k) acc += op.w[k] * v[op.col[k]];
    return acc;
  };
  const std::size_t blocks = 64;
  std::vector<double> block_delta(blocks, 0.0);
  for (std::size_t it = 1; it <= prm.max_iters; ++it) {
    parallel_for(
        blocks,
        [&](std::size_t b) {
          const std::size_t lo = b * N / blocks, hi = (b + 1) * N / blocks;
          double delta = 0.0;
          for (std::size_t n = lo; n < hi; ++n) {
            next[n] = std::min(sol.stop_cost[n], cont(n, V));
            delta = std::max(delta, std::abs(next[n] - V[n]));
          }
          block_delta[b] = delta;
        },
        prm.threads);
    V.swap(next);
    sol.iterations = it;
    sol.residual = *std::max_element(block_delta.begin(), block_delta.end());
    if (sol.residual < prm.tol) {
      sol.converged = true;
      break;
    }
  }
  if (!sol.converged && prm.throw_on_nonconvergence)
    throw Error(ErrorCode::NotConverged, "value iteration stopped after " + std::to_string(sol.iterations) +
                                             " sweeps with residual " + std::to_string(sol.residual));
  sol.value = std::move(V);
  sol.decision.assign(N, 0);
  for (std::size_t n = 0; n < N; ++n) {
    sol.continuation[n] = cont(n, sol.value);
    if (sol.stop_cost[n] <= sol.continuation[n]) sol.decision[n] = argstop[n];
  }
  std::vector<double> eta(model.eta.data(), model.eta.data() + model.eta.size());
  sol.value_at_eta = grid.interpolate(sol.value, eta);
  return sol;
}

enum class PolicyLookup {
  Lookahead,    // stop iff stop(pi) <= c.pi + E V~(T(pi, X)) with V~ interpolated
  Interpolate,  // stop iff stop(pi) <= V~(pi)
  Nearest,      // decision of the nearest grid node
};

/// The grid policy as a stopping rule on the exact posterior (n >= 1).
class GridPolicyRule {
 public:
  GridPolicyRule(const ModelSpec& model, const CostSpec& costs, const OptimalSolution& sol,
                 PolicyLookup lookup = PolicyLookup::Lookahead)
      : bm_(model, costs), sol_(&sol), lookup_(lookup) {}

  int fire(const PosteriorState& s, std::vector<int>& fired) const {
    fired.clear();
    const auto pi = s.posterior();
    const auto [stop, d] = bm_.stop_cost(pi);
    bool halt = false;
    switch (lookup_) {
      case PolicyLookup::Nearest: {
        const int dn = sol_->decision[sol_->grid.nearest(pi)];
        if (dn != 0) {
          fired.push_back(dn);
          return dn;
        }
        return 0;
      }
      case PolicyLookup::Interpolate:
        halt = stop <= sol_->grid.interpolate(sol_->value, pi);
        break;
      case PolicyLookup::Lookahead: {
        double c = bm_.step_cost(pi);
        std::vector<double> next;
        for (std::size_t x = 0; x < bm_.alphabet(); ++x) {
          const double px = bm_.transition(pi, x, next);
          if (px > 0.0) c += px * sol_->grid.interpolate(sol_->value, next);
        }
        halt = stop <= c;
        break;
      }
    }
    if (!halt) return 0;
    fired.push_back(d);
    return d;
  }

 private:
  BeliefModel bm_;
  const OptimalSolution* sol_;
  PolicyLookup lookup_;
};

/// Uses the same path stream as `evaluate`, so equal seeds give common random
/// numbers against any other strategy.
inline Evaluation evaluate_policy_full(const ModelSpec& model, const CostSpec& costs, const OptimalSolution& sol,
                                       std::size_t n_paths, std::uint64_t seed, PolicyLookup lookup = PolicyLookup::Lookahead,
                                       std::size_t max_horizon = kDefaultMaxHorizon, const EvalOptions& opt = {}) {
  const GridPolicyRule rule(model, costs, sol, lookup);
  return evaluate_with(
      model, costs, [&](const PosteriorFilter& f, TrackedPath& p) { return run_strategy(f, p, rule, max_horizon); }, n_paths,
      seed, opt);
}

inline RiskReport evaluate_policy(const ModelSpec& model, const CostSpec& costs, const OptimalSolution& sol,
                                  std::size_t n_paths, std::uint64_t seed, PolicyLookup lookup = PolicyLookup::Lookahead,
                                  std::size_t max_horizon = kDefaultMaxHorizon, std::size_t threads = 0) {
  EvalOptions opt;
  opt.threads = threads;
  return evaluate_policy_full(model, costs, sol, n_paths, seed, lookup, max_horizon, opt).report;
}

}  // namespace hmmcpd

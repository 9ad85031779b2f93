#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "hmmcpd/closed_form.hpp"
#include "hmmcpd/model.hpp"
#include "hmmcpd/numeric.hpp"
#include "hmmcpd/parallel.hpp"
#include "hmmcpd/posterior.hpp"
#include "hmmcpd/simulate.hpp"

namespace hmmcpd {

enum class VarrhoMode {
  ClosedForm,    // transient part feeding the class is triangular: rate from the largest self-loop
  TailEstimate,  // -log(rho_{t+1} / rho_t) until it settles
  Auto,          // closed form when applicable, otherwise the tail estimate
};

namespace detail {

/// Transient states that are reachable from the support of eta and can still
/// be absorbed by class i.
inline std::vector<std::size_t> feeding_states(const ModelSpec& model, const Absorption& abs, int i) {
  const auto transient = model.members(0);
  const auto reach = reachability(model.trans, transient);
  std::vector<std::size_t> out;
  for (std::size_t b = 0; b < transient.size(); ++b) {
    const auto yb = static_cast<Eigen::Index>(transient[b]);
    if (!(abs.h(yb, i) > 0.0)) continue;
    bool from_eta = false;
    for (std::size_t a = 0; a < transient.size() && !from_eta; ++a)
      from_eta = model.eta(static_cast<Eigen::Index>(transient[a])) > 0.0 && reach[a][b];
    if (from_eta) out.push_back(transient[b]);
  }
  return out;
}

}  // namespace detail

/// Closed-form decay rate, or nullopt when the feeding block has a cycle
/// through two or more states.
inline std::optional<double> varrho_closed_form(const ModelSpec& model, const Absorption& abs, int i) {
  const auto feed = detail::feeding_states(model, abs, i);
  if (feed.empty()) return kInf;
  const auto reach = detail::reachability(model.trans, feed);
  for (std::size_t a = 0; a < feed.size(); ++a)
    for (std::size_t b = a + 1; b < feed.size(); ++b)
      if (reach[a][b] && reach[b][a]) return std::nullopt;
  double diag = 0.0;
  for (std::size_t y : feed) diag = std::max(diag, model.trans(static_cast<Eigen::Index>(y), static_cast<Eigen::Index>(y)));
  return diag > 0.0 ? -std::log(diag) : kInf;
}

/// Tail estimate of the decay rate of rho_t^(i).
inline double varrho_tail_estimate(const ModelSpec& model, const Absorption& abs, int i, double tol = 1e-9,
                                   std::size_t cap = 100'000) {
  const auto transient = model.members(0);
  if (transient.empty()) return kInf;
  const auto t = static_cast<Eigen::Index>(transient.size());
  Eigen::MatrixXd q(t, t);
  Eigen::VectorXd r = Eigen::VectorXd::Zero(t);
  Eigen::RowVectorXd v(t);
  for (Eigen::Index a = 0; a < t; ++a) {
    const auto ya = static_cast<Eigen::Index>(transient[static_cast<std::size_t>(a)]);
    v(a) = model.eta(ya) * (abs.h(ya, i) > 0.0 ? 1.0 : 0.0);
    for (Eigen::Index b = 0; b < t; ++b) q(a, b) = model.trans(ya, static_cast<Eigen::Index>(transient[static_cast<std::size_t>(b)]));
    for (std::size_t z : model.members(i)) r(a) += model.trans(ya, static_cast<Eigen::Index>(z));
  }
  // log rho_{s+1} - log rho_s, with v rescaled each step so only the ratio matters
  double prev_log_hit = kNegInf;
  double prev_est = std::nan("");
  for (std::size_t s = 0; s < cap; ++s) {
    const double mx = v.cwiseAbs().maxCoeff();
    if (mx <= 0.0) return kInf;
    v /= mx;
    const double hit = v.dot(r);
    const double log_hit = hit > 0.0 ? std::log(hit) : kNegInf;
    if (prev_log_hit > kNegInf && log_hit > kNegInf) {
      // v was divided by mx since the previous hit was taken
      const double est = -(log_hit + std::log(mx) - prev_log_hit);
      if (!std::isnan(prev_est) && std::abs(est - prev_est) < tol) return est;
      prev_est = est;
    } else {
      prev_est = std::nan("");
    }
    prev_log_hit = log_hit;
    v = v * q;
  }
  throw Error(ErrorCode::NoConvergence, "tail decay rate of class " + std::to_string(i) + " did not settle");
}

inline double varrho(const ModelSpec& model, const Absorption& abs, int i, VarrhoMode mode = VarrhoMode::Auto) {
  if (!(abs.nu(i) > 0.0)) throw Error(ErrorCode::ZeroNu, "class " + std::to_string(i) + " is never reached");
  if (mode != VarrhoMode::TailEstimate) {
    if (auto v = varrho_closed_form(model, abs, i)) return *v;
    if (mode == VarrhoMode::ClosedForm)
      throw Error(ErrorCode::ShapeMismatch, "no closed-form tail rate for class " + std::to_string(i));
  }
  return varrho_tail_estimate(model, abs, i);
}

/// LLR drift limits. Matrices are (M+1) x (M+1) indexed by class label with
/// NaN on undefined entries; vectors are indexed by label with entry 0 unused.
struct LimitTable {
  enum class Shape { Example1, Example2 };

  Shape shape = Shape::Example1;
  int M = 0;
  Eigen::VectorXd nu;
  Eigen::MatrixXd q;
  Eigen::MatrixXd q0;  // Example 2 only
  Eigen::MatrixXd l;
  std::vector<double> varrho;
  std::vector<std::vector<int>> gamma;
  std::vector<std::vector<int>> jstar;  // every minimiser of l(i, .)
  std::vector<double> lstar;

  bool in_gamma(int i, int j) const {
    const auto& g = gamma[static_cast<std::size_t>(i)];
    return std::find(g.begin(), g.end(), j) != g.end();
  }
  bool jstar_unique(int i) const { return jstar[static_cast<std::size_t>(i)].size() == 1; }
  bool is_jstar(int i, int j) const {
    const auto& s = jstar[static_cast<std::size_t>(i)];
    return std::find(s.begin(), s.end(), j) != s.end();
  }
  /// j(i); NonUniqueJStar unless it is unique.
  int j_of(int i) const {
    if (!jstar_unique(i)) throw Error(ErrorCode::NonUniqueJStar, "j(" + std::to_string(i) + ") is not unique");
    return jstar[static_cast<std::size_t>(i)].front();
  }
};

namespace detail {

inline bool near_tie(double a, double b) {
  if (a == b) return true;
  if (!std::isfinite(a) || !std::isfinite(b)) return false;
  return std::abs(a - b) <= 1e-12 * std::max(std::abs(a), std::abs(b));
}

inline void finish_table(LimitTable& t) {
  const auto K = static_cast<std::size_t>(t.M) + 1;
  t.jstar.assign(K, {});
  t.lstar.assign(K, kInf);
  for (int i = 1; i <= t.M; ++i) {
    double best = kInf;
    for (int j = 0; j <= t.M; ++j)
      if (j != i) best = std::min(best, t.l(i, j));
    if (!std::isfinite(best))
      throw Error(ErrorCode::InfiniteEverywhere, "every limit l(" + std::to_string(i) + ", j) is infinite");
    t.lstar[static_cast<std::size_t>(i)] = best;
    for (int j = 0; j <= t.M; ++j)
      if (j != i && near_tie(t.l(i, j), best)) t.jstar[static_cast<std::size_t>(i)].push_back(j);
    // keep 0 or a Gamma member first; that is the representative choice
    auto& js = t.jstar[static_cast<std::size_t>(i)];
    std::stable_partition(js.begin(), js.end(), [&](int j) { return j == 0 || t.in_gamma(i, j); });
  }
}

inline LimitTable blank_table(const ModelSpec& model, const ChainFacts& facts, VarrhoMode mode) {
  LimitTable t;
  t.M = model.num_classes;
  const Eigen::Index K = t.M + 1;
  t.nu = facts.nu();
  t.q = Eigen::MatrixXd::Constant(K, K, std::nan(""));
  t.q0 = Eigen::MatrixXd::Constant(K, K, std::nan(""));
  t.l = Eigen::MatrixXd::Constant(K, K, std::nan(""));
  t.varrho.assign(static_cast<std::size_t>(K), kInf);
  t.gamma.assign(static_cast<std::size_t>(K), {});
  for (int k = 1; k <= t.M; ++k)
    if (t.nu(k) > 0.0) t.varrho[static_cast<std::size_t>(k)] = varrho(model, facts.absorption, k, mode);
  return t;
}

}  // namespace detail

inline LimitTable limits_example1(const ModelSpec& model, const ChainFacts& facts, VarrhoMode mode = VarrhoMode::Auto) {
  const auto shape = example1_shape(model);
  LimitTable t = detail::blank_table(model, facts, mode);
  t.shape = LimitTable::Shape::Example1;
  const int M = t.M;
  auto f = [&](int j) -> const Density& {
    return j == 0 ? model.densities[shape.f0_state] : model.densities[shape.class_state[static_cast<std::size_t>(j)]];
  };
  double min_rho = kInf;
  for (int k = 1; k <= M; ++k) min_rho = std::min(min_rho, t.varrho[static_cast<std::size_t>(k)]);
  for (int i = 1; i <= M; ++i) {
    for (int j = 0; j <= M; ++j)
      if (j != i) t.q(i, j) = kl(f(i), f(j));
    t.l(i, 0) = t.q(i, 0) + min_rho;
    for (int j = 1; j <= M; ++j) {
      if (j == i) continue;
      const double tail = t.q(i, 0) + t.varrho[static_cast<std::size_t>(j)];
      if (t.q(i, j) < tail) t.gamma[static_cast<std::size_t>(i)].push_back(j);
      t.l(i, j) = std::min(t.q(i, j), tail);
    }
  }
  detail::finish_table(t);
  return t;
}

inline LimitTable limits_example2(const ModelSpec& model, const ChainFacts& facts, VarrhoMode mode = VarrhoMode::Auto) {
  const auto shape = example2_shape(model, facts.absorption);
  LimitTable t = detail::blank_table(model, facts, mode);
  t.shape = LimitTable::Shape::Example2;
  const int M = t.M;
  auto post = [&](int j) -> const Density& { return model.densities[shape.class_state[static_cast<std::size_t>(j)]]; };
  for (int i = 1; i <= M; ++i) {
    double l0 = kInf;
    for (int k = 1; k <= M; ++k) {
      const auto& block = shape.blocks[static_cast<std::size_t>(k)];
      t.q0(i, k) = block.empty() ? kInf : kl(post(i), model.densities[block.front()]);
      l0 = std::min(l0, t.q0(i, k) + t.varrho[static_cast<std::size_t>(k)]);
    }
    t.l(i, 0) = l0;
    for (int j = 1; j <= M; ++j) {
      if (j == i) continue;
      t.q(i, j) = kl(post(i), post(j));
      const double tail = t.q0(i, j) + t.varrho[static_cast<std::size_t>(j)];
      if (t.q(i, j) < tail) t.gamma[static_cast<std::size_t>(i)].push_back(j);
      t.l(i, j) = std::min(t.q(i, j), tail);
    }
  }
  detail::finish_table(t);
  return t;
}

/// Example-1 formulas when the model has that shape, else Example 2.
inline LimitTable limits(const ModelSpec& model, const ChainFacts& facts, VarrhoMode mode = VarrhoMode::Auto) {
  try {
    return limits_example1(model, facts, mode);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::ShapeMismatch) throw;
  }
  return limits_example2(model, facts, mode);
}

/// Monte Carlo estimate of Lambda_n(i, j) / n under P_i.
struct LimitMcReport {
  std::vector<std::size_t> horizons;
  std::vector<std::size_t> count;  // paths with mu = i, by label
  int M = 0;
  bool degenerate = false;
  // stats[h][i * (M+1) + j]
  std::vector<std::vector<SampleStats>> stats;

  const SampleStats& at(int i, int j, std::size_t h_index) const {
    return stats[h_index][static_cast<std::size_t>(i * (M + 1) + j)];
  }
};

enum class LimitMcSampling {
  Partition,  // unconditional paths split by the realised mu
  PerClass,   // `paths` paths for each class from the chain conditioned on mu = i
};

inline LimitMcReport limits_mc(const ModelSpec& model, std::span<const std::size_t> horizons, std::size_t paths,
                               std::uint64_t seed, LimitMcSampling sampling = LimitMcSampling::Partition,
                               std::size_t threads = 0) {
  if (horizons.empty()) throw Error(ErrorCode::DimensionMismatch, "no horizons requested");
  LimitMcReport rep;
  rep.M = model.num_classes;
  rep.horizons.assign(horizons.begin(), horizons.end());
  std::sort(rep.horizons.begin(), rep.horizons.end());
  rep.horizons.erase(std::unique(rep.horizons.begin(), rep.horizons.end()), rep.horizons.end());
  if (rep.horizons.front() == 0) throw Error(ErrorCode::DimensionMismatch, "horizons must be at least 1");
  const std::size_t K = static_cast<std::size_t>(rep.M) + 1;
  const std::size_t H = rep.horizons.size();
  const std::size_t cells = K * K;
  const std::size_t n_max = rep.horizons.back();
  const Absorption abs = absorption_probabilities(model);

  // one sampler per simulated population; label 0 is the unconditional chain
  std::vector<std::unique_ptr<ChainSampler>> samplers(K);
  std::vector<int> population;
  if (sampling == LimitMcSampling::Partition) {
    samplers[0] = std::make_unique<ChainSampler>(model);
    population.assign(paths, 0);
  } else {
    for (int i = 1; i <= rep.M; ++i) {
      if (!(abs.nu(i) > 0.0)) continue;
      samplers[static_cast<std::size_t>(i)] = std::make_unique<ChainSampler>(conditioned_model(model, abs, i));
      population.insert(population.end(), paths, i);
    }
  }
  const std::size_t total = population.size();
  const PosteriorFilter filter(model);
  std::vector<int> mu(total, 0);
  std::vector<double> values(total * H * cells, std::nan(""));

  parallel_for(
      total,
      [&](std::size_t p) {
        const auto& sampler = *samplers[static_cast<std::size_t>(population[p])];
        PathSimulator sim(sampler, make_rng(seed, Stream::LimitsMc, static_cast<std::uint32_t>(p)));
        PosteriorState s = filter.init();
        std::size_t h = 0;
        for (std::size_t n = 1; n <= n_max; ++n) {
          filter.update_in_place(s, sim.next());
          if (n == rep.horizons[h]) {
            const LlrView v = llr(s, LlrMode::Extended);
            double* out = values.data() + (p * H + h) * cells;
            for (int i = 1; i <= rep.M; ++i)
              for (int j = 0; j <= rep.M; ++j)
                if (j != i) out[static_cast<std::size_t>(i) * K + static_cast<std::size_t>(j)] = v.lambda(i, j) / static_cast<double>(n);
            if (++h == H) break;
          }
        }
        sim.finish_absorption();
        mu[p] = sim.mu();
      },
      threads);

  rep.count.assign(K, 0);
  for (int m : mu) ++rep.count[static_cast<std::size_t>(m)];
  for (int i = 1; i <= rep.M; ++i)
    if (abs.nu(i) > 0.0 && rep.count[static_cast<std::size_t>(i)] < 30)
      throw Error(ErrorCode::TooFewConditionalPaths,
                  "only " + std::to_string(rep.count[static_cast<std::size_t>(i)]) + " paths absorbed by class " + std::to_string(i));

  rep.stats.assign(H, std::vector<SampleStats>(cells));
  bool any_spread = false;
  std::vector<double> buf;
  for (std::size_t h = 0; h < H; ++h)
    for (int i = 1; i <= rep.M; ++i)
      for (int j = 0; j <= rep.M; ++j) {
        if (j == i) continue;
        buf.clear();
        const std::size_t c = static_cast<std::size_t>(i) * K + static_cast<std::size_t>(j);
        for (std::size_t p = 0; p < total; ++p)
          if (mu[p] == i) buf.push_back(values[(p * H + h) * cells + c]);
        rep.stats[h][c] = sample_stats(buf);
        if (rep.stats[h][c].sd > 1e-12) any_spread = true;
      }
  rep.degenerate = !any_spread;
  return rep;
}

}  // namespace hmmcpd

#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <vector>

#include "hmmcpd/model.hpp"
#include "hmmcpd/numeric.hpp"
#include "hmmcpd/parallel.hpp"
#include "hmmcpd/posterior.hpp"
#include "hmmcpd/simulate.hpp"
#include "hmmcpd/strategy.hpp"

namespace hmmcpd {

/// Wraps a simulator and accumulates sum_{t < n} c(Y_t) as observations are drawn.
class TrackedPath {
 public:
  TrackedPath(const ChainSampler& sampler, Philox rng, const Eigen::VectorXd& c) : sim_(sampler, rng), c_(&c) {}

  Observation next() {
    delay_ += (*c_)(static_cast<Eigen::Index>(sim_.state()));
    return sim_.next();
  }

  double delay() const { return delay_; }
  PathSimulator& sim() { return sim_; }

 private:
  PathSimulator sim_;
  const Eigen::VectorXd* c_;
  double delay_ = 0.0;
};

/// Outcome of one simulated path.
struct PathOutcome {
  std::size_t tau = 0;
  int d = 0;
  bool capped = false;
  std::size_t y_tau = 0;
  int mu = 0;
  std::size_t theta = 0;
  double delay = 0.0;     // (sum_{t < tau} c(Y_t))^m
  double terminal = 0.0;  // a_{Y_tau, d} 1{Y_tau not in Y_d}, 0 when capped
  std::vector<double> log_alpha_class;  // at tau
};

struct RiskReport {
  int M = 0;
  std::size_t paths = 0;
  std::size_t capped = 0;
  SampleStats edd;
  SampleStats bayes;
  std::vector<std::vector<SampleStats>> tdl;        // [y][i], R_{yi}
  std::vector<std::vector<SampleStats>> tdl_class;  // [j][i], R~_{ji}
  std::vector<SampleStats> r_i_a;                   // R_i^(a) by label
  std::vector<SampleStats> r_i_1;                   // R_i^(1) by label
  std::vector<SampleStats> edd_conditional;         // D_i by label
  std::vector<std::size_t> count_by_mu;
  std::vector<double> nu;

  double capped_fraction() const { return paths ? static_cast<double>(capped) / static_cast<double>(paths) : 0.0; }

  /// u_i = D_i + R_i^(a), with an s.e. that treats the two parts as independent.
  SampleStats u_conditional(int i) const {
    const auto si = static_cast<std::size_t>(i);
    SampleStats s;
    s.count = edd_conditional[si].count;
    s.mean = edd_conditional[si].mean + r_i_a[si].mean;
    const double se = std::hypot(edd_conditional[si].se(), r_i_a[si].se());
    s.sd = se * std::sqrt(static_cast<double>(std::max<std::size_t>(s.count, 1)));
    return s;
  }

  /// edd + sum a_{yi} R_{yi} from the same sample.
  double decomposed_bayes(const CostSpec& costs) const {
    double u = edd.mean;
    for (std::size_t y = 0; y < tdl.size(); ++y)
      for (int i = 1; i <= M; ++i) u += costs.a(static_cast<Eigen::Index>(y), i) * tdl[y][static_cast<std::size_t>(i)].mean;
    return u;
  }
};

struct EvalOptions {
  std::size_t threads = 0;
  Stream stream = Stream::Paths;
  bool keep_outcomes = false;
};

struct Evaluation {
  RiskReport report;
  std::vector<PathOutcome> outcomes;  // filled when keep_outcomes
};

namespace detail {

inline RiskReport summarise(const ModelSpec& model, const CostSpec& costs, const Eigen::VectorXd& nu,
                            const std::vector<PathOutcome>& out) {
  const int M = model.num_classes;
  const std::size_t K = static_cast<std::size_t>(M) + 1;
  const std::size_t N = out.size();
  const std::size_t S = model.size();
  RiskReport r;
  r.M = M;
  r.paths = N;
  r.nu.assign(nu.data(), nu.data() + nu.size());
  for (const auto& o : out) r.capped += o.capped ? 1 : 0;

  std::vector<double> v(N);
  for (std::size_t p = 0; p < N; ++p) v[p] = out[p].delay;
  r.edd = sample_stats(v);
  for (std::size_t p = 0; p < N; ++p) v[p] = out[p].delay + out[p].terminal;
  r.bayes = sample_stats(v);

  auto wrong = [&](const PathOutcome& o) { return !o.capped && model.class_of[o.y_tau] != o.d; };
  r.tdl.assign(S, std::vector<SampleStats>(K));
  for (std::size_t y = 0; y < S; ++y)
    for (int i = 1; i <= M; ++i) {
      for (std::size_t p = 0; p < N; ++p) v[p] = (wrong(out[p]) && out[p].y_tau == y && out[p].d == i) ? 1.0 : 0.0;
      r.tdl[y][static_cast<std::size_t>(i)] = sample_stats(v);
    }
  r.tdl_class.assign(K, std::vector<SampleStats>(K));
  for (int j = 0; j <= M; ++j)
    for (int i = 1; i <= M; ++i) {
      if (j == i) continue;
      for (std::size_t p = 0; p < N; ++p)
        v[p] = (!out[p].capped && out[p].d == i && model.class_of[out[p].y_tau] == j) ? 1.0 : 0.0;
      r.tdl_class[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)] = sample_stats(v);
    }
  r.r_i_a.assign(K, {});
  r.r_i_1.assign(K, {});
  for (int i = 1; i <= M; ++i) {
    const double w = nu(i) > 0.0 ? 1.0 / nu(i) : 0.0;
    for (std::size_t p = 0; p < N; ++p)
      v[p] = (wrong(out[p]) && out[p].d == i) ? w * costs.a(static_cast<Eigen::Index>(out[p].y_tau), i) : 0.0;
    r.r_i_a[static_cast<std::size_t>(i)] = sample_stats(v);
    for (std::size_t p = 0; p < N; ++p) v[p] = (wrong(out[p]) && out[p].d == i) ? w : 0.0;
    r.r_i_1[static_cast<std::size_t>(i)] = sample_stats(v);
  }
  r.count_by_mu.assign(K, 0);
  r.edd_conditional.assign(K, {});
  std::vector<double> buf;
  for (int i = 1; i <= M; ++i) {
    buf.clear();
    for (const auto& o : out)
      if (o.mu == i) buf.push_back(o.delay);
    r.count_by_mu[static_cast<std::size_t>(i)] = buf.size();
    r.edd_conditional[static_cast<std::size_t>(i)] = sample_stats(buf);
  }
  return r;
}

}  // namespace detail

/// Simulates `n_paths` paths and runs `runner(filter, path)` on each, where
/// `runner` returns a Decision. Path k uses substream k of (seed, stream).
template <class Runner>
Evaluation evaluate_with(const ModelSpec& model, const CostSpec& costs, Runner&& runner, std::size_t n_paths,
                         std::uint64_t seed, const EvalOptions& opt = {}) {
  if (n_paths == 0) throw Error(ErrorCode::DimensionMismatch, "no paths requested");
  const ChainSampler sampler(model);
  const PosteriorFilter filter(model);
  const Eigen::VectorXd nu = absorption_probabilities(model).nu;
  std::vector<PathOutcome> out(n_paths);
  parallel_for(
      n_paths,
      [&](std::size_t p) {
        TrackedPath path(sampler, make_rng(seed, opt.stream, static_cast<std::uint32_t>(p)), costs.c);
        const Decision dec = runner(filter, path);
        PathOutcome& o = out[p];
        o.tau = dec.tau;
        o.d = dec.d;
        o.capped = dec.capped;
        o.y_tau = path.sim().state();
        o.delay = costs.m_power == 1 ? path.delay() : std::pow(path.delay(), costs.m_power);
        if (!o.capped && model.class_of[o.y_tau] != o.d) o.terminal = costs.a(static_cast<Eigen::Index>(o.y_tau), o.d);
        o.log_alpha_class = dec.state.log_alpha_class;
        path.sim().finish_absorption();
        o.mu = path.sim().mu();
        o.theta = path.sim().theta();
      },
      opt.threads);
  if (std::all_of(out.begin(), out.end(), [](const PathOutcome& o) { return o.capped; }))
    throw Error(ErrorCode::AllCapped, "every path reached the horizon cap");
  Evaluation ev;
  ev.report = detail::summarise(model, costs, nu, out);
  if (opt.keep_outcomes) ev.outcomes = std::move(out);
  return ev;
}

inline Evaluation evaluate_full(const ModelSpec& model, const CostSpec& costs, const StrategySpec& spec, std::size_t n_paths,
                                std::uint64_t seed, const EvalOptions& opt = {}) {
  return evaluate_with(
      model, costs, [&](const PosteriorFilter& f, TrackedPath& p) { return run(spec, f, p); }, n_paths, seed, opt);
}

inline RiskReport evaluate(const ModelSpec& model, const CostSpec& costs, const StrategySpec& spec, std::size_t n_paths,
                           std::uint64_t seed, const EvalOptions& opt = {}) {
  return evaluate_full(model, costs, spec, n_paths, seed, opt).report;
}

/// Both sides of R~_{ji} = nu_i E_i[1{d = i, theta <= tau < inf} exp(-Lambda_tau(i, j))].
struct MeasureChangeCell {
  int i = 0;
  int j = 0;
  SampleStats left;   // direct count under P
  SampleStats right;  // scaled by nu_i (mean and sd)

  /// Score statistic: the left side is an indicator, so its variance is taken
  /// as p (1 - p) with p the right-side mean (the identity as null hypothesis).
  /// This stays informative when the event is never observed.
  double z() const {
    const double p = std::clamp(right.mean, 0.0, 1.0);
    const double left_se = left.count > 0 ? std::sqrt(p * (1.0 - p) / static_cast<double>(left.count)) : 0.0;
    const double se = std::hypot(left_se, right.se());
    return se > 0.0 ? (left.mean - right.mean) / se : (left.mean == right.mean ? 0.0 : kInf);
  }
};

inline std::vector<MeasureChangeCell> measure_change_from(const ModelSpec& model, const std::vector<PathOutcome>& out) {
  const int M = model.num_classes;
  const Eigen::VectorXd nu = absorption_probabilities(model).nu;
  std::vector<MeasureChangeCell> cells;
  std::vector<double> lhs(out.size()), rhs;
  for (int i = 1; i <= M; ++i)
    for (int j = 0; j <= M; ++j) {
      if (j == i) continue;
      MeasureChangeCell c;
      c.i = i;
      c.j = j;
      for (std::size_t p = 0; p < out.size(); ++p)
        lhs[p] = (!out[p].capped && out[p].d == i && model.class_of[out[p].y_tau] == j) ? 1.0 : 0.0;
      c.left = sample_stats(lhs);
      rhs.clear();
      for (const auto& o : out) {
        if (o.mu != i) continue;
        double w = 0.0;
        if (!o.capped && o.d == i && model.class_of[o.y_tau] == i) {
          const double li = o.log_alpha_class[static_cast<std::size_t>(i)];
          const double lj = o.log_alpha_class[static_cast<std::size_t>(j)];
          w = lj == kNegInf ? 0.0 : std::exp(lj - li);
        }
        rhs.push_back(nu(i) * w);
      }
      c.right = sample_stats(rhs);
      cells.push_back(c);
    }
  return cells;
}

inline std::vector<MeasureChangeCell> measure_change_check(const ModelSpec& model, const StrategySpec& spec,
                                                           std::size_t n_paths, std::uint64_t seed, std::size_t threads = 0) {
  CostSpec zero = uniform_costs(model, 0.0);
  EvalOptions opt;
  opt.threads = threads;
  opt.stream = Stream::MeasureChange;
  opt.keep_outcomes = true;
  const auto ev = evaluate_full(model, zero, spec, n_paths, seed, opt);
  return measure_change_from(model, ev.outcomes);
}

}  // namespace hmmcpd

#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "hmmcpd/closed_form.hpp"
#include "hmmcpd/limits.hpp"
#include "hmmcpd/parallel.hpp"
#include "hmmcpd/simulate.hpp"
#include "hmmcpd/strategy.hpp"

namespace hmmcpd {

enum class SigmaMethod { Default, OvershootMc, RenewalMc };

inline const char* to_string(SigmaMethod m) {
  switch (m) {
    case SigmaMethod::Default: return "default";
    case SigmaMethod::OvershootMc: return "overshoot_mc";
    case SigmaMethod::RenewalMc: return "renewal_mc";
  }
  return "?";
}

struct SigmaEstimate {
  int cls = 0;
  int j = 0;  // j(i)
  double a = 1.0;
  double sigma = 1.0;
  double se = 0.0;
  SigmaMethod method = SigmaMethod::Default;
  double A_used = std::nan("");
  std::size_t samples = 0;
};

struct SigmaParams {
  double A_small = 1e-6;
  std::size_t samples = 100'000;
  std::uint64_t seed = 0;
  std::size_t max_steps = 1'000'000;
  std::size_t threads = 0;
};

/// a_{j i}; for j = 0 the weight on the transient states that feed the limit
/// (all of Y_0 in Example 1, the block of i in Example 2), taking the largest
/// when they differ.
inline double terminal_weight(const ModelSpec& model, const CostSpec& costs, const LimitTable& lim, int i, int j) {
  std::vector<std::size_t> states;
  if (j > 0) {
    states = model.members(j);
  } else if (lim.shape == LimitTable::Shape::Example1) {
    states = model.members(0);
  } else {
    states = example2_shape(model, absorption_probabilities(model)).blocks[static_cast<std::size_t>(i)];
    if (states.empty()) states = model.members(0);
  }
  double a = 0.0;
  for (std::size_t y : states) a = std::max(a, costs.a(static_cast<Eigen::Index>(y), i));
  return a;
}

/// sigma_i = a_{j(i) i} E[exp(-W)] from a sample of overshoots.
inline SigmaEstimate sigma_from_overshoots(std::span<const double> W, double a) {
  std::vector<double> v(W.size());
  for (std::size_t k = 0; k < W.size(); ++k) v[k] = a * std::exp(-W[k]);
  const auto st = sample_stats(v);
  SigmaEstimate out;
  out.a = a;
  out.sigma = st.mean;
  out.se = st.se();
  out.samples = st.count;
  out.method = SigmaMethod::OvershootMc;
  return out;
}

/// Skips estimation: sigma_i = a_{j(i) i}, using the representative j(i) when it is tied.
inline SigmaEstimate sigma_default(const ModelSpec& model, const CostSpec& costs, const LimitTable& lim, int i) {
  SigmaEstimate out;
  out.cls = i;
  out.j = lim.jstar[static_cast<std::size_t>(i)].front();
  out.a = terminal_weight(model, costs, lim, i, out.j);
  out.sigma = out.a;
  return out;
}

inline std::vector<double> sigma_default_vector(const ModelSpec& model, const CostSpec& costs, const LimitTable& lim) {
  std::vector<double> s(static_cast<std::size_t>(model.num_classes) + 1, 1.0);
  for (int i = 1; i <= model.num_classes; ++i) s[static_cast<std::size_t>(i)] = sigma_default(model, costs, lim, i).sigma;
  return s;
}

/// Simulates tau_A^(i) under P_i at a small A_i and averages a exp(-W_i(A_i)).
inline SigmaEstimate sigma_overshoot_mc(const ModelSpec& model, const CostSpec& costs, const LimitTable& lim, int i,
                                        const SigmaParams& prm) {
  const int j = lim.j_of(i);
  const Absorption abs = absorption_probabilities(model);
  const ModelSpec cond = conditioned_model(model, abs, i);
  const ChainSampler sampler(cond);
  const PosteriorFilter filter(model);
  const double thr = -std::log(prm.A_small);
  std::vector<double> W(prm.samples, 0.0);
  parallel_for(
      prm.samples,
      [&](std::size_t p) {
        PathSimulator sim(sampler, make_rng(prm.seed, Stream::SigmaOvershoot, static_cast<std::uint32_t>(p)));
        PosteriorState s = filter.init();
        for (std::size_t n = 1; n <= prm.max_steps; ++n) {
          filter.update_in_place(s, sim.next());
          const double ph = detail::phi(s, i);
          if (ph > thr) {
            W[p] = ph - thr;
            return;
          }
        }
        throw Error(ErrorCode::NoConvergence, "overshoot run did not cross the threshold");
      },
      prm.threads);
  SigmaEstimate out = sigma_from_overshoots(W, terminal_weight(model, costs, lim, i, j));
  out.cls = i;
  out.j = j;
  out.A_used = prm.A_small;
  return out;
}

/// Ladder heights S_T of the random walk sum h_{i j(i)}(X_l), X_l i.i.d. f_i,
/// then E[exp(-W)] = E[1 - exp(-S_T)] / E[S_T] (the stationary overshoot law
/// integrated from 0).
inline SigmaEstimate sigma_renewal_mc(const ModelSpec& model, const CostSpec& costs, const LimitTable& lim, int i,
                                      const SigmaParams& prm) {
  const int j = lim.j_of(i);
  const Absorption abs = absorption_probabilities(model);
  const auto cls_state = [&](int k) { return model.members(k).front(); };
  const Density& fi = model.densities[cls_state(i)];
  Density alt;
  double shift = 0.0;
  if (j > 0) {
    alt = model.densities[cls_state(j)];
  } else if (lim.shape == LimitTable::Shape::Example1) {
    alt = model.densities[example1_shape(model).f0_state];
    shift = kInf;
    for (int k = 1; k <= model.num_classes; ++k) shift = std::min(shift, lim.varrho[static_cast<std::size_t>(k)]);
  } else {
    const auto shape = example2_shape(model, abs);
    const auto& block = shape.blocks[static_cast<std::size_t>(i)];
    if (block.empty()) throw Error(ErrorCode::ShapeMismatch, "class has no transient block");
    alt = model.densities[block.front()];
    shift = lim.varrho[static_cast<std::size_t>(i)];
  }
  if (!std::isfinite(shift)) throw Error(ErrorCode::BadLimit, "infinite tail rate in the ladder increment");

  std::vector<double> S(prm.samples, 0.0);
  parallel_for(
      prm.samples,
      [&](std::size_t p) {
        Philox rng = make_rng(prm.seed, Stream::SigmaRenewal, static_cast<std::uint32_t>(p));
        double sum = 0.0;
        for (std::size_t n = 1; n <= prm.max_steps; ++n) {
          const Observation x = sample(fi, rng);
          sum += log_pdf(fi, x) - log_pdf(alt, x) + shift;
          if (sum > 0.0) {
            S[p] = sum;
            return;
          }
        }
        throw Error(ErrorCode::NoConvergence, "ladder height not reached");
      },
      prm.threads);

  std::vector<double> num(S.size());
  for (std::size_t k = 0; k < S.size(); ++k) num[k] = 1.0 - std::exp(-S[k]);
  const auto sy = sample_stats(num);
  const auto sx = sample_stats(S);
  const double r = sy.mean / sx.mean;
  std::vector<double> cross(S.size());
  for (std::size_t k = 0; k < S.size(); ++k) cross[k] = (num[k] - sy.mean) * (S[k] - sx.mean);
  const double n = static_cast<double>(S.size());
  const double cov = n > 1 ? pairwise_sum(cross) / (n - 1) : 0.0;
  const double var_r = (sy.sd * sy.sd - 2.0 * r * cov + r * r * sx.sd * sx.sd) / (n * sx.mean * sx.mean);

  SigmaEstimate out;
  out.cls = i;
  out.j = j;
  out.a = terminal_weight(model, costs, lim, i, j);
  out.sigma = out.a * r;
  out.se = out.a * std::sqrt(std::max(var_r, 0.0));
  out.method = SigmaMethod::RenewalMc;
  out.samples = S.size();
  return out;
}

inline SigmaEstimate estimate_sigma(const ModelSpec& model, const CostSpec& costs, const LimitTable& lim, int i,
                                    SigmaMethod method, const SigmaParams& prm = {}) {
  switch (method) {
    case SigmaMethod::OvershootMc: return sigma_overshoot_mc(model, costs, lim, i, prm);
    case SigmaMethod::RenewalMc: return sigma_renewal_mc(model, costs, lim, i, prm);
    case SigmaMethod::Default: break;
  }
  return sigma_default(model, costs, lim, i);
}

}  // namespace hmmcpd

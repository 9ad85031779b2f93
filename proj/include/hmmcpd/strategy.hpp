#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <concepts>
#include <string>
#include <variant>
#include <vector>

#include "hmmcpd/limits.hpp"
#include "hmmcpd/model.hpp"
#include "hmmcpd/numeric.hpp"
#include "hmmcpd/posterior.hpp"

namespace hmmcpd {

inline constexpr std::size_t kDefaultMaxHorizon = 1'000'000;

/// Anything that yields observations on demand.
template <class S>
concept ObservationSource = requires(S s) {
  { s.next() } -> std::convertible_to<Observation>;
};

struct Decision {
  std::size_t tau = 0;
  int d = 0;
  bool capped = false;
  std::vector<int> fired_by;  // classes whose own rule triggered at tau
  PosteriorState state;       // posterior at tau
  double overshoot = std::nan("");  // W_d(A_d) for threshold-on-posterior rules

  std::vector<double> class_posteriors() const { return state.class_posteriors(); }
  LlrView llr() const { return hmmcpd::llr(state, LlrMode::Extended); }
};

namespace detail {

/// argmax_{i in 1..M} of the class masses, smallest index on ties.
inline int argmax_class(const PosteriorState& s) {
  int best = 1;
  for (int i = 2; i < static_cast<int>(s.log_alpha_class.size()); ++i)
    if (s.log_alpha_class[static_cast<std::size_t>(i)] > s.log_alpha_class[static_cast<std::size_t>(best)]) best = i;
  return best;
}

inline double log_mass_except(const PosteriorState& s, int i) {
  double mx = kNegInf;
  for (std::size_t j = 0; j < s.log_alpha_class.size(); ++j)
    if (static_cast<int>(j) != i) mx = std::max(mx, s.log_alpha_class[j]);
  if (mx == kNegInf) return kNegInf;
  double acc = 0.0;
  for (std::size_t j = 0; j < s.log_alpha_class.size(); ++j)
    if (static_cast<int>(j) != i) acc += std::exp(s.log_alpha_class[j] - mx);
  return mx + std::log(acc);
}

/// Phi_n^(i) straight from the class masses.
inline double phi(const PosteriorState& s, int i) {
  const double li = s.log_alpha_class[static_cast<std::size_t>(i)];
  const double rest = log_mass_except(s, i);
  if (li == kNegInf) return kNegInf;
  if (rest == kNegInf) return kInf;
  return li - rest;
}

}  // namespace detail

/// tau_A: stop once some Pi~^(i) exceeds 1/(1+A_i); declare argmax Pi~.
/// `Odds` evaluates the same trigger as Phi^(i) > -log A_i.
struct PiRule {
  enum class Form { Posterior, Odds };
  std::vector<double> A;  // by class label, entry 0 unused
  Form form = Form::Posterior;

  bool fires_for(const PosteriorState& s, int i) const {
    const double a = A[static_cast<std::size_t>(i)];
    if (form == Form::Posterior) return s.class_posterior(i) > 1.0 / (1.0 + a);
    return detail::phi(s, i) > -std::log(a);
  }

  int fire(const PosteriorState& s, std::vector<int>& fired) const {
    fired.clear();
    for (int i = 1; i < static_cast<int>(A.size()); ++i)
      if (fires_for(s, i)) fired.push_back(i);
    return fired.empty() ? 0 : detail::argmax_class(s);
  }
};

/// upsilon_B: stop once, for some i, Lambda(i, j) > -log B_ij for every j != i;
/// declare the smallest such i.
struct LlrRule {
  Eigen::MatrixXd B;  // (M+1) x (M+1), rows 1..M used

  bool fires_for(const PosteriorState& s, int i) const {
    const double li = s.log_alpha_class[static_cast<std::size_t>(i)];
    if (li == kNegInf) return false;
    for (int j = 0; j < B.cols(); ++j) {
      if (j == i) continue;
      const double lj = s.log_alpha_class[static_cast<std::size_t>(j)];
      if (!(li - lj > -std::log(B(i, j)))) return false;
    }
    return true;
  }

  int fire(const PosteriorState& s, std::vector<int>& fired) const {
    fired.clear();
    for (int i = 1; i < B.rows(); ++i)
      if (fires_for(s, i)) fired.push_back(i);
    return fired.empty() ? 0 : fired.front();
  }
};

/// Psi^(i) > threshold_i; gives the bracketing times of upsilon_B.
struct PsiRule {
  std::vector<double> threshold;  // by label

  int fire(const PosteriorState& s, std::vector<int>& fired) const {
    fired.clear();
    for (int i = 1; i < static_cast<int>(threshold.size()); ++i) {
      const double li = s.log_alpha_class[static_cast<std::size_t>(i)];
      double psi = kInf;
      for (std::size_t j = 0; j < s.log_alpha_class.size(); ++j)
        if (static_cast<int>(j) != i) psi = std::min(psi, li - s.log_alpha_class[j]);
      if (psi > threshold[static_cast<std::size_t>(i)]) fired.push_back(i);
    }
    return fired.empty() ? 0 : fired.front();
  }
};

/// Stops at a fixed time; d = 0 means argmax of the class posterior.
struct FixedTimeRule {
  std::size_t n = 1;
  int d = 0;

  int fire(const PosteriorState& s, std::vector<int>& fired) const {
    fired.clear();
    if (s.n < n) return 0;
    const int out = d > 0 ? d : detail::argmax_class(s);
    fired.push_back(out);
    return out;
  }
};

template <class R>
concept StoppingRule = requires(const R r, const PosteriorState& s, std::vector<int>& f) {
  { r.fire(s, f) } -> std::convertible_to<int>;
};

struct NoObserver {
  void operator()(const PosteriorState&) const {}
};

/// Runs a rule on a source from n = 1 until it fires or `max_horizon` is hit.
/// A capped run declares the current argmax class.
template <ObservationSource Source, StoppingRule Rule, class Observer = NoObserver>
Decision run_strategy(const PosteriorFilter& filter, Source& source, const Rule& rule,
                      std::size_t max_horizon = kDefaultMaxHorizon, Observer&& observe = {}) {
  if (max_horizon < 1) throw Error(ErrorCode::BadThreshold, "max_horizon must be at least 1");
  Decision out;
  out.state = filter.init();
  for (std::size_t n = 1; n <= max_horizon; ++n) {
    filter.update_in_place(out.state, source.next());
    observe(out.state);
    const int d = rule.fire(out.state, out.fired_by);
    if (d > 0) {
      out.tau = n;
      out.d = d;
      return out;
    }
  }
  out.tau = max_horizon;
  out.d = detail::argmax_class(out.state);
  out.capped = true;
  return out;
}

template <ObservationSource Source>
Decision run_pi_strategy(const PosteriorFilter& filter, Source& source, const std::vector<double>& A,
                         std::size_t max_horizon = kDefaultMaxHorizon, PiRule::Form form = PiRule::Form::Posterior) {
  for (std::size_t i = 1; i < A.size(); ++i)
    if (!(A[i] > 0.0)) throw Error(ErrorCode::BadThreshold, "A_i must be positive");
  Decision d = run_strategy(filter, source, PiRule{A, form}, max_horizon);
  if (!d.capped) d.overshoot = detail::phi(d.state, d.d) + std::log(A[static_cast<std::size_t>(d.d)]);
  return d;
}

inline void check_b(const Eigen::MatrixXd& B) {
  for (int i = 1; i < B.rows(); ++i)
    for (int j = 0; j < B.cols(); ++j)
      if (j != i && !(B(i, j) > 0.0 && B(i, j) < 1.0)) throw Error(ErrorCode::BadThreshold, "B_ij must lie in (0, 1)");
}

template <ObservationSource Source>
Decision run_llr_strategy(const PosteriorFilter& filter, Source& source, const Eigen::MatrixXd& B,
                          std::size_t max_horizon = kDefaultMaxHorizon) {
  check_b(B);
  return run_strategy(filter, source, LlrRule{B}, max_horizon);
}

/// First passage times of one class under the Psi-lower, exact and Psi-upper rules.
struct PassageTimes {
  std::size_t lower = 0;
  std::size_t exact = 0;
  std::size_t upper = 0;  // 0 means not reached within the horizon
};

/// Per-class bracket lower <= upsilon_B^(i) <= upper along one source.
template <ObservationSource Source>
std::vector<PassageTimes> llr_passage_times(const PosteriorFilter& filter, Source& source, const Eigen::MatrixXd& B,
                                            std::size_t max_horizon) {
  check_b(B);
  const int M = static_cast<int>(B.rows()) - 1;
  std::vector<PassageTimes> out(static_cast<std::size_t>(M) + 1);
  std::vector<double> lo(static_cast<std::size_t>(M) + 1), hi(static_cast<std::size_t>(M) + 1);
  for (int i = 1; i <= M; ++i) {
    double bmax = 0.0, bmin = 1.0;
    for (int j = 0; j <= M; ++j)
      if (j != i) {
        bmax = std::max(bmax, B(i, j));
        bmin = std::min(bmin, B(i, j));
      }
    lo[static_cast<std::size_t>(i)] = -std::log(bmax);
    hi[static_cast<std::size_t>(i)] = -std::log(bmin);
  }
  const LlrRule exact{B};
  PosteriorState s = filter.init();
  int pending = M;
  for (std::size_t n = 1; n <= max_horizon && pending > 0; ++n) {
    filter.update_in_place(s, source.next());
    for (int i = 1; i <= M; ++i) {
      auto& t = out[static_cast<std::size_t>(i)];
      if (t.upper != 0) continue;
      double psi = kInf;
      const double li = s.log_alpha_class[static_cast<std::size_t>(i)];
      for (int j = 0; j <= M; ++j)
        if (j != i) psi = std::min(psi, li - s.log_alpha_class[static_cast<std::size_t>(j)]);
      if (t.lower == 0 && psi > lo[static_cast<std::size_t>(i)]) t.lower = n;
      if (t.exact == 0 && exact.fires_for(s, i)) t.exact = n;
      if (psi > hi[static_cast<std::size_t>(i)]) {
        t.upper = n;
        --pending;
      }
    }
  }
  return out;
}

/// Which of the two strategies, with its thresholds.
struct StrategySpec {
  struct PiThreshold {
    std::vector<double> A;
  };
  struct LlrThreshold {
    Eigen::MatrixXd B;
  };
  std::variant<PiThreshold, LlrThreshold> kind;
  std::size_t max_horizon = kDefaultMaxHorizon;

  static StrategySpec pi(std::vector<double> A, std::size_t cap = kDefaultMaxHorizon) {
    return {PiThreshold{std::move(A)}, cap};
  }
  static StrategySpec llr(Eigen::MatrixXd B, std::size_t cap = kDefaultMaxHorizon) {
    return {LlrThreshold{std::move(B)}, cap};
  }
};

template <ObservationSource Source>
Decision run(const StrategySpec& spec, const PosteriorFilter& filter, Source& source) {
  if (const auto* p = std::get_if<StrategySpec::PiThreshold>(&spec.kind))
    return run_pi_strategy(filter, source, p->A, spec.max_horizon);
  return run_llr_strategy(filter, source, std::get<StrategySpec::LlrThreshold>(spec.kind).B, spec.max_horizon);
}

/// g_i(x) = c^m (-log x / l)^m + sigma x.
inline double g_threshold_objective(double x, double c, int m, double l, double sigma) {
  return std::pow(c * (-std::log(x)) / l, m) + sigma * x;
}

/// Minimiser of g_i over (1e-300, 1); closed form for m = 1.
inline double a_from_c(double c, int m, double l, double sigma) {
  if (!(std::isfinite(l) && l > 0.0)) throw Error(ErrorCode::BadLimit, "l(i) must be finite and positive");
  if (!(c > 0.0) || !(sigma > 0.0) || m < 1) throw Error(ErrorCode::BadThreshold, "need c_i > 0, sigma_i > 0, m >= 1");
  if (m == 1) return c / (sigma * l);
  // golden-section on s = log x; g is convex in s on s <= 0
  auto f = [&](double s) { return std::pow(c * (-s) / l, m) + sigma * std::exp(s); };
  const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = std::log(1e-300), b = 0.0;
  double x1 = b - phi * (b - a), x2 = a + phi * (b - a);
  double f1 = f(x1), f2 = f(x2);
  while (b - a > 1e-12) {
    if (f1 < f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - phi * (b - a);
      f1 = f(x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + phi * (b - a);
      f2 = f(x2);
    }
  }
  return std::exp(0.5 * (a + b));
}

/// A_i(c_i) for every class; c_i are the long-run class costs.
inline std::vector<double> a_from_c(const ModelSpec& model, const CostSpec& costs, const LimitTable& lim,
                                    const std::vector<double>& sigma) {
  const auto stat = stationary_costs(model, costs.c);
  std::vector<double> A(static_cast<std::size_t>(model.num_classes) + 1, 0.0);
  for (int i = 1; i <= model.num_classes; ++i) {
    const auto si = static_cast<std::size_t>(i);
    A[si] = a_from_c(stat[si].c_bar, costs.m_power, lim.lstar[si], sigma[si]);
  }
  return A;
}

struct BMap {
  Eigen::MatrixXd B;
  std::vector<std::string> warnings;
};

/// B_ij = min_{y in Y_j} Rbar_yi / nu_i, with a warning for entries outside (0, 1).
inline BMap b_from_rbar(const ModelSpec& model, const CostSpec& costs, const Eigen::VectorXd& nu) {
  const int M = model.num_classes;
  BMap out;
  out.B = Eigen::MatrixXd::Constant(M + 1, M + 1, std::nan(""));
  for (int i = 1; i <= M; ++i) {
    if (!(nu(i) > 0.0)) throw Error(ErrorCode::ZeroNu, "class " + std::to_string(i) + " is never reached");
    for (int j = 0; j <= M; ++j) {
      if (j == i) continue;
      double r = kInf;
      for (std::size_t y : model.members(j)) {
        const double v = costs.rbar(static_cast<Eigen::Index>(y), i);
        if (!(v > 0.0)) throw Error(ErrorCode::BadThreshold, "error caps rbar must be positive off the declared class");
        r = std::min(r, v);
      }
      out.B(i, j) = r / nu(i);
      if (!(out.B(i, j) > 0.0 && out.B(i, j) < 1.0))
        out.warnings.push_back("B(" + std::to_string(i) + "," + std::to_string(j) + ") = " + std::to_string(out.B(i, j)) +
                               " lies outside (0, 1)");
    }
  }
  return out;
}

}  // namespace hmmcpd

#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "hmmcpd/density.hpp"
#include "hmmcpd/error.hpp"
#include "hmmcpd/numeric.hpp"

namespace hmmcpd {

/// Hidden Markov chain with a transient set (label 0) and closed classes
/// labelled 1..M, plus one observation density per state. States are indexed
/// in declaration order; every matrix in the library uses that order.
struct ModelSpec {
  std::vector<std::string> states;
  Eigen::VectorXd eta;
  Eigen::MatrixXd trans;
  std::vector<int> class_of;
  int num_classes = 0;
  std::vector<Density> densities;

  std::size_t size() const { return states.size(); }

  std::vector<std::size_t> members(int label) const {
    std::vector<std::size_t> out;
    for (std::size_t y = 0; y < class_of.size(); ++y)
      if (class_of[y] == label) out.push_back(y);
    return out;
  }

  bool transient(std::size_t y) const { return class_of[y] == 0; }
};

/// Builds a model with M taken as the largest class label.
inline ModelSpec make_model(std::vector<std::string> states, Eigen::VectorXd eta, Eigen::MatrixXd trans,
                            std::vector<int> class_of, std::vector<Density> densities) {
  ModelSpec m;
  m.states = std::move(states);
  m.eta = std::move(eta);
  m.trans = std::move(trans);
  m.class_of = std::move(class_of);
  m.densities = std::move(densities);
  m.num_classes = m.class_of.empty() ? 0 : *std::max_element(m.class_of.begin(), m.class_of.end());
  return m;
}

/// Delay costs c(y), moment order m, terminal weights a(y, i) and error caps
/// rbar(y, i). Matrices are |Y| x (M+1); column 0 is unused.
struct CostSpec {
  Eigen::VectorXd c;
  int m_power = 1;
  Eigen::MatrixXd a;
  Eigen::MatrixXd rbar;

  /// max over y outside class i of a(y, i).
  double abar(const ModelSpec& model, int i) const {
    double best = 0.0;
    for (std::size_t y = 0; y < model.size(); ++y)
      if (model.class_of[y] != i) best = std::max(best, a(static_cast<Eigen::Index>(y), i));
    return best;
  }
};

/// c = cbar on closed-class states and 0 on the transient set; a = 1 for
/// every wrong decision.
inline CostSpec uniform_costs(const ModelSpec& model, double cbar, int m_power = 1) {
  const auto n = static_cast<Eigen::Index>(model.size());
  CostSpec costs;
  costs.m_power = m_power;
  costs.c = Eigen::VectorXd::Zero(n);
  costs.a = Eigen::MatrixXd::Zero(n, model.num_classes + 1);
  costs.rbar = Eigen::MatrixXd::Constant(n, model.num_classes + 1, std::nan(""));
  for (Eigen::Index y = 0; y < n; ++y) {
    if (!model.transient(static_cast<std::size_t>(y))) costs.c(y) = cbar;
    for (int i = 1; i <= model.num_classes; ++i)
      if (model.class_of[static_cast<std::size_t>(y)] != i) costs.a(y, i) = 1.0;
  }
  return costs;
}

struct Issue {
  ErrorCode code;
  std::string message;
};

struct ValidationReport {
  std::vector<Issue> issues;

  bool ok() const { return issues.empty(); }
  bool has(ErrorCode code) const {
    return std::any_of(issues.begin(), issues.end(), [code](const Issue& i) { return i.code == code; });
  }
};

namespace detail {

inline constexpr double kStochasticTol = 1e-12;

/// reach[a][b]: b is reachable from a in zero or more steps over edges of
/// `adj` restricted to `subset`.
inline std::vector<std::vector<bool>> reachability(const Eigen::MatrixXd& trans, const std::vector<std::size_t>& subset) {
  const std::size_t n = subset.size();
  std::vector<std::vector<bool>> r(n, std::vector<bool>(n, false));
  for (std::size_t a = 0; a < n; ++a) {
    r[a][a] = true;
    for (std::size_t b = 0; b < n; ++b)
      if (trans(static_cast<Eigen::Index>(subset[a]), static_cast<Eigen::Index>(subset[b])) > 0.0) r[a][b] = true;
  }
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t a = 0; a < n; ++a)
      if (r[a][k])
        for (std::size_t b = 0; b < n; ++b)
          if (r[k][b]) r[a][b] = true;
  return r;
}

}  // namespace detail

/// Checks every structural assumption on the model and returns all
/// violations found.
inline ValidationReport validate(const ModelSpec& model) {
  ValidationReport rep;
  auto add = [&rep](ErrorCode code, std::string msg) { rep.issues.push_back({code, std::move(msg)}); };
  const std::size_t n = model.size();
  if (n == 0) {
    add(ErrorCode::DimensionMismatch, "model has no states");
    return rep;
  }
  if (static_cast<std::size_t>(model.eta.size()) != n || static_cast<std::size_t>(model.trans.rows()) != n ||
      static_cast<std::size_t>(model.trans.cols()) != n || model.class_of.size() != n || model.densities.size() != n) {
    add(ErrorCode::DimensionMismatch, "states, eta, trans, classes and densities must all have |Y| = " +
                                          std::to_string(n) + " entries");
    return rep;
  }

  for (std::size_t y = 0; y < n; ++y) {
    double row = 0.0;
    for (std::size_t z = 0; z < n; ++z) {
      const double p = model.trans(static_cast<Eigen::Index>(y), static_cast<Eigen::Index>(z));
      if (!(p >= 0.0) || !std::isfinite(p))
        add(ErrorCode::NegativeEntry, "trans(" + model.states[y] + "," + model.states[z] + ") is negative or not finite");
      row += p;
    }
    if (std::abs(row - 1.0) > detail::kStochasticTol)
      add(ErrorCode::NonStochasticRow, "row " + model.states[y] + " sums to " + std::to_string(row));
  }
  double eta_sum = 0.0;
  for (std::size_t y = 0; y < n; ++y) {
    const double p = model.eta(static_cast<Eigen::Index>(y));
    if (!(p >= 0.0) || !std::isfinite(p)) add(ErrorCode::NegativeEntry, "eta(" + model.states[y] + ") is negative");
    eta_sum += p;
  }
  if (std::abs(eta_sum - 1.0) > detail::kStochasticTol)
    add(ErrorCode::NonStochasticEta, "eta sums to " + std::to_string(eta_sum));

  const int M = model.num_classes;
  if (M < 1) add(ErrorCode::EmptyClass, "at least one closed class is required");
  for (std::size_t y = 0; y < n; ++y)
    if (model.class_of[y] < 0 || model.class_of[y] > M)
      add(ErrorCode::BadClassLabel, "state " + model.states[y] + " has class label outside 0..M");
  for (int k = 1; k <= M; ++k)
    if (model.members(k).empty()) add(ErrorCode::EmptyClass, "class " + std::to_string(k) + " has no states");

  for (std::size_t y = 0; y < n; ++y) {
    const int k = model.class_of[y];
    if (k < 1) continue;
    for (std::size_t z = 0; z < n; ++z)
      if (model.class_of[z] != k && model.trans(static_cast<Eigen::Index>(y), static_cast<Eigen::Index>(z)) > 0.0)
        add(ErrorCode::OpenClass, "class " + std::to_string(k) + " is not closed: " + model.states[y] + " -> " +
                                      model.states[z]);
  }

  // The transient set has spectral radius < 1 exactly when every transient
  // state can reach some state outside it.
  const auto transient = model.members(0);
  if (!transient.empty()) {
    std::vector<std::size_t> all(n);
    for (std::size_t y = 0; y < n; ++y) all[y] = y;
    const auto reach = detail::reachability(model.trans, all);
    for (std::size_t y : transient) {
      bool exits = false;
      for (std::size_t z = 0; z < n && !exits; ++z) exits = reach[y][z] && model.class_of[z] > 0;
      if (!exits) add(ErrorCode::RecurrentTransientSet, "transient state " + model.states[y] + " never reaches a closed class");
    }
  }

  const auto& first = model.densities.front();
  for (std::size_t y = 0; y < n; ++y) {
    const auto& d = model.densities[y];
    if (d.index() != first.index()) {
      add(ErrorCode::BadDensity, "all states must share one density family");
      continue;
    }
    if (const auto* g = std::get_if<Gaussian>(&d)) {
      if (!(g->var > 0.0) || !std::isfinite(g->var) || !std::isfinite(g->mean))
        add(ErrorCode::BadDensity, "state " + model.states[y] + " has an invalid Gaussian");
    } else {
      const auto& p = std::get<Categorical>(d).probs;
      double s = 0.0;
      bool neg = false;
      for (double v : p) {
        neg = neg || !(v >= 0.0);
        s += v;
      }
      if (p.empty() || neg || std::abs(s - 1.0) > detail::kStochasticTol)
        add(ErrorCode::BadDensity, "state " + model.states[y] + " has an invalid probability vector");
      if (p.size() != alphabet_size(first)) {
        add(ErrorCode::BadDensity, "categorical alphabets differ in size");
        continue;
      }
      const auto& p0 = std::get<Categorical>(first).probs;
      for (std::size_t k = 0; k < p.size(); ++k)
        if ((p[k] > 0.0) != (p0[k] > 0.0)) {
          add(ErrorCode::SupportMismatch, "state " + model.states[y] + " and " + model.states[0] +
                                              " have different supports; likelihood ratios must stay in (0, inf)");
          break;
        }
    }
  }
  return rep;
}

inline void require_valid(const ModelSpec& model) {
  const auto rep = validate(model);
  if (!rep.ok()) throw Error(rep.issues.front().code, rep.issues.front().message);
}

/// Absorption probabilities: h(y, i) = P{mu = i | Y_0 = y} and
/// nu_i = P{mu = i}. Both are indexed by class label (column / entry 0 unused).
struct Absorption {
  Eigen::MatrixXd h;
  Eigen::VectorXd nu;
};

inline Absorption absorption_probabilities(const ModelSpec& model) {
  const int M = model.num_classes;
  const auto n = static_cast<Eigen::Index>(model.size());
  Absorption out;
  out.h = Eigen::MatrixXd::Zero(n, M + 1);
  out.nu = Eigen::VectorXd::Zero(M + 1);
  for (Eigen::Index y = 0; y < n; ++y) {
    const int k = model.class_of[static_cast<std::size_t>(y)];
    if (k > 0) out.h(y, k) = 1.0;
  }
  const auto transient = model.members(0);
  if (!transient.empty()) {
    const auto t = static_cast<Eigen::Index>(transient.size());
    Eigen::MatrixXd lhs = Eigen::MatrixXd::Identity(t, t);
    Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(t, M);
    for (Eigen::Index a = 0; a < t; ++a) {
      const auto ya = static_cast<Eigen::Index>(transient[static_cast<std::size_t>(a)]);
      for (Eigen::Index b = 0; b < t; ++b) lhs(a, b) -= model.trans(ya, static_cast<Eigen::Index>(transient[static_cast<std::size_t>(b)]));
      for (Eigen::Index z = 0; z < n; ++z) {
        const int k = model.class_of[static_cast<std::size_t>(z)];
        if (k > 0) rhs(a, k - 1) += model.trans(ya, z);
      }
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(lhs);
    if (!lu.isInvertible()) throw Error(ErrorCode::SingularSystem, "I - Q is singular; the transient set is not transient");
    const Eigen::MatrixXd sol = lu.solve(rhs);
    if (!(lhs * sol).isApprox(rhs, 1e-10) && rhs.norm() > 0.0)
      throw Error(ErrorCode::SingularSystem, "absorption system solved inaccurately");
    for (Eigen::Index a = 0; a < t; ++a)
      for (int k = 1; k <= M; ++k)
        out.h(static_cast<Eigen::Index>(transient[static_cast<std::size_t>(a)]), k) = std::clamp(sol(a, k - 1), 0.0, 1.0);
  }
  for (int k = 1; k <= M; ++k) out.nu(k) = model.eta.dot(out.h.col(k));
  return out;
}

/// Conditional law of the absorption time given mu = i, over t = 0..horizon.
/// `log_tail[t]` is log P{theta > t | mu = i}, computed directly rather than
/// as 1 - sum(rho), so it keeps full relative precision deep in the tail.
struct RhoTable {
  int cls = 0;
  double nu = 0.0;
  std::vector<double> rho;
  std::vector<double> log_rho;
  std::vector<double> log_tail;

  std::size_t horizon() const { return rho.empty() ? 0 : rho.size() - 1; }
};

/// Survival of the transient set, log P{theta > t}, for t = 0..horizon.
inline std::vector<double> log_survival(const ModelSpec& model, std::size_t horizon) {
  const auto transient = model.members(0);
  std::vector<double> out(horizon + 1, kNegInf);
  if (transient.empty()) return out;
  const auto t = static_cast<Eigen::Index>(transient.size());
  Eigen::MatrixXd q(t, t);
  Eigen::RowVectorXd v(t);
  for (Eigen::Index a = 0; a < t; ++a) {
    v(a) = model.eta(static_cast<Eigen::Index>(transient[static_cast<std::size_t>(a)]));
    for (Eigen::Index b = 0; b < t; ++b)
      q(a, b) = model.trans(static_cast<Eigen::Index>(transient[static_cast<std::size_t>(a)]),
                            static_cast<Eigen::Index>(transient[static_cast<std::size_t>(b)]));
  }
  double scale = 0.0;
  for (std::size_t s = 0; s <= horizon; ++s) {
    if (s > 0) v = v * q;
    const double mass = v.sum();
    if (mass <= 0.0) break;
    out[s] = std::log(mass) + scale;
    scale += std::log(mass);
    v /= mass;
  }
  return out;
}

/// Smallest T with P{theta > T} < tol, capped at `cap`.
inline std::size_t default_horizon(const ModelSpec& model, double tol = 1e-12, std::size_t cap = 1'000'000) {
  const auto transient = model.members(0);
  if (transient.empty()) return 0;
  const auto t = static_cast<Eigen::Index>(transient.size());
  Eigen::MatrixXd q(t, t);
  Eigen::RowVectorXd v(t);
  for (Eigen::Index a = 0; a < t; ++a) {
    v(a) = model.eta(static_cast<Eigen::Index>(transient[static_cast<std::size_t>(a)]));
    for (Eigen::Index b = 0; b < t; ++b)
      q(a, b) = model.trans(static_cast<Eigen::Index>(transient[static_cast<std::size_t>(a)]),
                            static_cast<Eigen::Index>(transient[static_cast<std::size_t>(b)]));
  }
  for (std::size_t s = 0; s < cap; ++s) {
    if (v.sum() < tol) return s;
    v = v * q;
  }
  return cap;
}

inline RhoTable rho_table(const ModelSpec& model, const Absorption& abs, int i, std::size_t horizon) {
  if (i < 1 || i > model.num_classes) throw Error(ErrorCode::BadClassLabel, "class index out of range");
  const double nu = abs.nu(i);
  if (!(nu > 0.0)) throw Error(ErrorCode::ZeroNu, "class " + std::to_string(i) + " is never reached (nu = 0)");
  RhoTable tab;
  tab.cls = i;
  tab.nu = nu;
  tab.rho.assign(horizon + 1, 0.0);
  tab.log_rho.assign(horizon + 1, kNegInf);
  tab.log_tail.assign(horizon + 1, kNegInf);

  double eta_i = 0.0;
  for (std::size_t y : model.members(i)) eta_i += model.eta(static_cast<Eigen::Index>(y));
  tab.rho[0] = eta_i / nu;
  tab.log_rho[0] = std::log(tab.rho[0]);

  const auto transient = model.members(0);
  if (transient.empty()) return tab;
  const auto t = static_cast<Eigen::Index>(transient.size());
  Eigen::MatrixXd q(t, t);
  Eigen::VectorXd r = Eigen::VectorXd::Zero(t);
  Eigen::VectorXd h(t);
  Eigen::RowVectorXd v(t);
  for (Eigen::Index a = 0; a < t; ++a) {
    const auto ya = static_cast<Eigen::Index>(transient[static_cast<std::size_t>(a)]);
    v(a) = model.eta(ya);
    h(a) = abs.h(ya, i);
    for (Eigen::Index b = 0; b < t; ++b) q(a, b) = model.trans(ya, static_cast<Eigen::Index>(transient[static_cast<std::size_t>(b)]));
    for (std::size_t z : model.members(i)) r(a) += model.trans(ya, static_cast<Eigen::Index>(z));
  }
  const double log_nu = std::log(nu);
  double scale = 0.0;  // v holds eta_0^T Q^s / exp(scale)
  for (std::size_t s = 0; s <= horizon; ++s) {
    if (s > 0) {
      const double hit = v.dot(r);
      tab.log_rho[s] = hit > 0.0 ? std::log(hit) + scale - log_nu : kNegInf;
      tab.rho[s] = std::exp(tab.log_rho[s]);
      v = v * q;
    }
    const double surv = v.dot(h);
    tab.log_tail[s] = surv > 0.0 ? std::log(surv) + scale - log_nu : kNegInf;
    const double mx = v.cwiseAbs().maxCoeff();
    if (mx <= 0.0) {
      // nilpotent: the absorption time is bounded
      for (std::size_t u = s + 1; u <= horizon; ++u) tab.log_tail[u] = kNegInf;
      break;
    }
    scale += std::log(mx);
    v /= mx;
  }
  return tab;
}

/// Stationary law w_i of the chain restricted to a closed class and its
/// long-run delay cost c_i = sum_y c(y) w_i(y).
struct ClassStationary {
  int cls = 0;
  std::vector<std::size_t> states;
  Eigen::VectorXd w;
  double c_bar = 0.0;
};

inline ClassStationary stationary_distribution(const ModelSpec& model, int i) {
  ClassStationary out;
  out.cls = i;
  out.states = model.members(i);
  const auto k = static_cast<Eigen::Index>(out.states.size());
  if (k == 0) throw Error(ErrorCode::EmptyClass, "class " + std::to_string(i) + " has no states");

  // A unique stationary law needs exactly one closed communicating class.
  const auto reach = detail::reachability(model.trans, out.states);
  std::size_t closed_sccs = 0;
  std::vector<bool> seen(out.states.size(), false);
  for (std::size_t a = 0; a < out.states.size(); ++a) {
    if (seen[a]) continue;
    bool closed = true;
    for (std::size_t b = 0; b < out.states.size(); ++b) {
      const bool same = reach[a][b] && reach[b][a];
      if (same) seen[b] = true;
      if (reach[a][b] && !reach[b][a]) closed = false;
    }
    if (closed) ++closed_sccs;
  }
  if (closed_sccs != 1)
    throw Error(ErrorCode::NonUniqueStationary,
                "class " + std::to_string(i) + " contains " + std::to_string(closed_sccs) + " recurrent sub-classes");

  Eigen::MatrixXd lhs(k, k);
  for (Eigen::Index a = 0; a < k; ++a)
    for (Eigen::Index b = 0; b < k; ++b)
      lhs(a, b) = model.trans(static_cast<Eigen::Index>(out.states[static_cast<std::size_t>(b)]),
                              static_cast<Eigen::Index>(out.states[static_cast<std::size_t>(a)])) -
                  (a == b ? 1.0 : 0.0);
  lhs.row(k - 1).setOnes();
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(k);
  rhs(k - 1) = 1.0;
  out.w = lhs.fullPivLu().solve(rhs);
  for (Eigen::Index a = 0; a < k; ++a) out.w(a) = std::max(out.w(a), 0.0);
  out.w /= out.w.sum();
  return out;
}

inline std::vector<ClassStationary> stationary_costs(const ModelSpec& model, const Eigen::VectorXd& c) {
  std::vector<ClassStationary> out(static_cast<std::size_t>(model.num_classes) + 1);
  for (int i = 1; i <= model.num_classes; ++i) {
    auto s = stationary_distribution(model, i);
    s.c_bar = 0.0;
    for (std::size_t a = 0; a < s.states.size(); ++a)
      s.c_bar += c(static_cast<Eigen::Index>(s.states[a])) * s.w(static_cast<Eigen::Index>(a));
    out[static_cast<std::size_t>(i)] = std::move(s);
  }
  return out;
}

/// Exact chain-level quantities derived from a valid model.
struct ChainFacts {
  Absorption absorption;
  std::size_t horizon = 0;
  std::vector<RhoTable> rho;  // indexed by class label; entry 0 unused

  const Eigen::VectorXd& nu() const { return absorption.nu; }

  /// Joint P{theta = t, mu = i}.
  double theta_dist(int i, std::size_t t) const {
    const auto& tab = rho[static_cast<std::size_t>(i)];
    return t < tab.rho.size() ? tab.nu * tab.rho[t] : 0.0;
  }
};

inline ChainFacts chain_facts(const ModelSpec& model, std::optional<std::size_t> horizon = std::nullopt) {
  ChainFacts f;
  f.absorption = absorption_probabilities(model);
  f.horizon = horizon ? *horizon : default_horizon(model);
  f.rho.resize(static_cast<std::size_t>(model.num_classes) + 1);
  for (int i = 1; i <= model.num_classes; ++i)
    if (f.absorption.nu(i) > 0.0) f.rho[static_cast<std::size_t>(i)] = rho_table(model, f.absorption, i, f.horizon);
  return f;
}

}  // namespace hmmcpd

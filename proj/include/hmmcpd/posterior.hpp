#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "hmmcpd/density.hpp"
#include "hmmcpd/model.hpp"
#include "hmmcpd/numeric.hpp"

namespace hmmcpd {

/// Unnormalised forward variables in log space.
///
/// `log_alpha[y] + log_offset` is log alpha_n(X_1..X_n, y). After every update
/// the vector is re-centred so its maximum is 0; the removed constant is
/// accumulated in `log_offset`. `log_alpha_class[i]` aggregates the states of
/// class i (label 0 is the transient set) on the same re-centred scale.
struct PosteriorState {
  std::vector<double> log_alpha;
  std::vector<double> log_alpha_class;
  double log_offset = 0.0;
  std::size_t n = 0;

  double log_total() const { return logsumexp(log_alpha_class); }

  /// Pi_n(y).
  std::vector<double> posterior() const {
    const double z = logsumexp(log_alpha);
    std::vector<double> p(log_alpha.size());
    for (std::size_t y = 0; y < p.size(); ++y) p[y] = std::exp(log_alpha[y] - z);
    return p;
  }

  /// Class posterior Pi~_n^{(i)} for i in 0..M.
  double class_posterior(int i) const { return std::exp(log_alpha_class[static_cast<std::size_t>(i)] - log_total()); }

  std::vector<double> class_posteriors() const {
    const double z = log_total();
    std::vector<double> p(log_alpha_class.size());
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = std::exp(log_alpha_class[i] - z);
    return p;
  }

  /// Adds a constant to every log-alpha entry; posteriors and LLRs are unchanged.
  void shift(double delta) {
    for (double& v : log_alpha) v += delta;
    for (double& v : log_alpha_class) v += delta;
    log_offset -= delta;
  }
};

/// LLR processes at one time step. `lambda(i, j)` is defined for i in 1..M,
/// j in 0..M, j != i; `phi[i]`, `psi[i]` for i in 1..M (index 0 unused).
struct LlrView {
  Eigen::MatrixXd lambda;
  std::vector<double> phi;
  std::vector<double> psi;
};

enum class LlrMode {
  Strict,    // DegenerateMass if some class mass is zero
  Extended,  // zero masses give +/-inf LLRs
};

inline LlrView llr(const PosteriorState& state, LlrMode mode = LlrMode::Strict) {
  const auto& la = state.log_alpha_class;
  const int M = static_cast<int>(la.size()) - 1;
  if (mode == LlrMode::Strict) {
    for (double v : la)
      if (v == kNegInf) throw Error(ErrorCode::DegenerateMass, "a class posterior mass is exactly zero");
  }
  LlrView out;
  out.lambda = Eigen::MatrixXd::Constant(M + 1, M + 1, std::nan(""));
  out.phi.assign(static_cast<std::size_t>(M) + 1, std::nan(""));
  out.psi.assign(static_cast<std::size_t>(M) + 1, std::nan(""));
  std::vector<double> others;
  others.reserve(static_cast<std::size_t>(M));
  for (int i = 1; i <= M; ++i) {
    const double li = la[static_cast<std::size_t>(i)];
    double psi = kInf;
    others.clear();
    for (int j = 0; j <= M; ++j) {
      if (j == i) continue;
      const double lj = la[static_cast<std::size_t>(j)];
      double v;
      if (li == kNegInf) v = kNegInf;
      else if (lj == kNegInf) v = kInf;
      else v = li - lj;
      out.lambda(i, j) = v;
      psi = std::min(psi, v);
      others.push_back(lj);
    }
    const double rest = logsumexp(others);
    out.phi[static_cast<std::size_t>(i)] = li == kNegInf ? kNegInf : (rest == kNegInf ? kInf : li - rest);
    out.psi[static_cast<std::size_t>(i)] = psi;
  }
  return out;
}

/// Log-space forward recursion for the posterior of the hidden state.
class PosteriorFilter {
 public:
  explicit PosteriorFilter(const ModelSpec& model)
      : n_(model.size()),
        num_classes_(model.num_classes),
        class_of_(model.class_of),
        densities_(model.densities),
        log_eta_(model.size()) {
    for (std::size_t y = 0; y < n_; ++y) log_eta_[y] = safe_log(model.eta(static_cast<Eigen::Index>(y)));
    members_.resize(static_cast<std::size_t>(num_classes_) + 1);
    for (std::size_t y = 0; y < n_; ++y) members_[static_cast<std::size_t>(class_of_[y])].push_back(y);
    preds_.resize(n_);
    for (std::size_t y = 0; y < n_; ++y)
      for (std::size_t z = 0; z < n_; ++z) {
        const double p = model.trans(static_cast<Eigen::Index>(z), static_cast<Eigen::Index>(y));
        if (p > 0.0) preds_[y].push_back({z, std::log(p)});
      }
  }

  std::size_t num_states() const { return n_; }
  int num_classes() const { return num_classes_; }
  int class_of(std::size_t y) const { return class_of_[y]; }

  PosteriorState init() const {
    PosteriorState s;
    s.log_alpha = log_eta_;
    s.n = 0;
    refresh_classes(s);
    return s;
  }

  /// log f(y, x) for every state.
  void log_likelihoods(Observation x, std::vector<double>& out) const {
    out.resize(n_);
    for (std::size_t y = 0; y < n_; ++y) out[y] = log_pdf(densities_[y], x);
  }

  void update_in_place(PosteriorState& s, Observation x) const {
    thread_local std::vector<double> next, terms, loglik;
    log_likelihoods(x, loglik);
    next.assign(n_, kNegInf);
    for (std::size_t y = 0; y < n_; ++y) {
      if (loglik[y] == kNegInf) continue;
      terms.clear();
      for (const auto& [z, lp] : preds_[y])
        if (s.log_alpha[z] != kNegInf) terms.push_back(s.log_alpha[z] + lp);
      const double v = logsumexp(terms);
      if (v != kNegInf) next[y] = v + loglik[y];
    }
    double mx = kNegInf;
    for (double v : next) mx = std::max(mx, v);
    if (mx == kNegInf) throw Error(ErrorCode::ZeroLikelihood, "every reachable state assigns zero density to the observation");
    for (double& v : next) v -= mx;
    s.log_alpha.swap(next);
    s.log_offset += mx;
    ++s.n;
    refresh_classes(s);
  }

  PosteriorState update(const PosteriorState& s, Observation x) const {
    PosteriorState out = s;
    update_in_place(out, x);
    return out;
  }

 private:
  struct Pred {
    std::size_t from;
    double log_p;
  };

  static double safe_log(double v) { return v > 0.0 ? std::log(v) : kNegInf; }

  void refresh_classes(PosteriorState& s) const {
    s.log_alpha_class.resize(members_.size());
    for (std::size_t i = 0; i < members_.size(); ++i) {
      double mx = kNegInf;
      for (std::size_t y : members_[i]) mx = std::max(mx, s.log_alpha[y]);
      if (mx == kNegInf) {
        s.log_alpha_class[i] = kNegInf;
        continue;
      }
      double sum = 0.0;
      for (std::size_t y : members_[i]) sum += std::exp(s.log_alpha[y] - mx);
      s.log_alpha_class[i] = mx + std::log(sum);
    }
  }

  std::size_t n_;
  int num_classes_;
  std::vector<int> class_of_;
  std::vector<Density> densities_;
  std::vector<double> log_eta_;
  std::vector<std::vector<Pred>> preds_;
  std::vector<std::vector<std::size_t>> members_;
};

}  // namespace hmmcpd

#pragma once

#include <span>
#include <vector>

#include "hmmcpd/model.hpp"
#include "hmmcpd/numeric.hpp"

namespace hmmcpd {

/// Example-1 shape: one common density f_0 on the whole transient set and
/// singleton closed classes {i} with densities f_i.
struct Example1Shape {
  std::size_t f0_state = 0;
  std::vector<std::size_t> class_state;  // indexed by class label; entry 0 unused
};

/// Example-2 shape: the transient set splits into blocks Y_0^(j), each
/// absorbed only by the singleton class {j} and carrying one density f_j^(0).
struct Example2Shape {
  std::vector<std::vector<std::size_t>> blocks;  // indexed by class label
  std::vector<std::size_t> class_state;
};

namespace detail {

inline std::vector<std::size_t> singleton_classes(const ModelSpec& model) {
  std::vector<std::size_t> out(static_cast<std::size_t>(model.num_classes) + 1, 0);
  for (int i = 1; i <= model.num_classes; ++i) {
    const auto mem = model.members(i);
    if (mem.size() != 1) throw Error(ErrorCode::ShapeMismatch, "class " + std::to_string(i) + " is not a singleton");
    out[static_cast<std::size_t>(i)] = mem.front();
  }
  return out;
}

}  // namespace detail

inline Example1Shape example1_shape(const ModelSpec& model) {
  Example1Shape s;
  s.class_state = detail::singleton_classes(model);
  const auto transient = model.members(0);
  if (transient.empty()) throw Error(ErrorCode::ShapeMismatch, "the transient set is empty");
  s.f0_state = transient.front();
  for (std::size_t y : transient)
    if (!(model.densities[y] == model.densities[s.f0_state]))
      throw Error(ErrorCode::ShapeMismatch, "transient states carry different densities");
  return s;
}

inline Example2Shape example2_shape(const ModelSpec& model, const Absorption& abs) {
  Example2Shape s;
  s.class_state = detail::singleton_classes(model);
  s.blocks.resize(static_cast<std::size_t>(model.num_classes) + 1);
  for (std::size_t y : model.members(0)) {
    int owner = 0;
    for (int j = 1; j <= model.num_classes; ++j)
      if (abs.h(static_cast<Eigen::Index>(y), j) > 1.0 - 1e-12) owner = j;
    if (owner == 0)
      throw Error(ErrorCode::ShapeMismatch, "transient state " + model.states[y] + " can be absorbed by more than one class");
    auto& block = s.blocks[static_cast<std::size_t>(owner)];
    if (!block.empty() && !(model.densities[y] == model.densities[block.front()]))
      throw Error(ErrorCode::ShapeMismatch, "densities are not constant on the transient block of class " + std::to_string(owner));
    block.push_back(y);
  }
  return s;
}

/// Closed-form LLR processes for Example-1/2 models, built from running
/// log-likelihood sums and the L_n / K_n accumulators.
///
/// L_n^(j) = log(rho_0 + sum_{k=1..n} rho_k prod_{l<k} g_j(X_l) / f_j(X_l)) where
/// g_j is f_0 (Example 1) or f_j^(0) (Example 2).
class ClosedFormLlr {
 public:
  enum class Kind { Example1, Example2 };

  ClosedFormLlr(const ModelSpec& model, Kind kind, std::size_t horizon) : kind_(kind), M_(model.num_classes) {
    const Absorption abs = absorption_probabilities(model);
    const std::size_t K = static_cast<std::size_t>(M_) + 1;
    pre_density_.resize(K);
    post_density_.resize(K);
    has_block_.assign(K, true);
    if (kind == Kind::Example1) {
      const auto shape = example1_shape(model);
      for (int j = 1; j <= M_; ++j) {
        pre_density_[static_cast<std::size_t>(j)] = model.densities[shape.f0_state];
        post_density_[static_cast<std::size_t>(j)] = model.densities[shape.class_state[static_cast<std::size_t>(j)]];
      }
      pre_density_[0] = model.densities[shape.f0_state];
      log_survival_ = log_survival(model, horizon);
    } else {
      const auto shape = example2_shape(model, abs);
      for (int j = 1; j <= M_; ++j) {
        const auto& block = shape.blocks[static_cast<std::size_t>(j)];
        has_block_[static_cast<std::size_t>(j)] = !block.empty();
        const std::size_t cls = shape.class_state[static_cast<std::size_t>(j)];
        post_density_[static_cast<std::size_t>(j)] = model.densities[cls];
        pre_density_[static_cast<std::size_t>(j)] = model.densities[block.empty() ? cls : block.front()];
      }
    }
    log_nu_.assign(K, kNegInf);
    rho_.resize(K);
    for (int j = 1; j <= M_; ++j) {
      log_nu_[static_cast<std::size_t>(j)] = std::log(abs.nu(j));
      rho_[static_cast<std::size_t>(j)] = rho_table(model, abs, j, horizon);
    }
    horizon_ = horizon;
    reset();
  }

  void reset() {
    const std::size_t K = static_cast<std::size_t>(M_) + 1;
    n_ = 0;
    sum_post_.assign(K, 0.0);
    sum_pre_.assign(K, 0.0);
    drift_.assign(K, 0.0);
    L_.assign(K, kNegInf);
    G_.assign(K, kNegInf);
    for (int j = 1; j <= M_; ++j) {
      L_[static_cast<std::size_t>(j)] = rho_[static_cast<std::size_t>(j)].log_rho[0];
      G_[static_cast<std::size_t>(j)] = rho_[static_cast<std::size_t>(j)].log_rho[0];
    }
  }

  std::size_t n() const { return n_; }

  void step(Observation x) {
    if (n_ + 1 > horizon_) throw Error(ErrorCode::DimensionMismatch, "closed-form oracle horizon exceeded");
    ++n_;
    for (int j = 1; j <= M_; ++j) {
      const auto sj = static_cast<std::size_t>(j);
      const double lf = log_pdf(post_density_[sj], x);
      const double lg = log_pdf(pre_density_[sj], x);
      const double log_rho_n = rho_[sj].log_rho[n_];
      // L_n adds the k = n term, whose product runs over l < n (drift_ before this step).
      L_[sj] = logaddexp(L_[sj], log_rho_n + drift_[sj]);
      drift_[sj] += lg - lf;
      // Direct form of K_n: G_n = log(rho_0 prod_{1..n} r + sum_k rho_k prod_{k..n} r), r = f_j / g_j.
      G_[sj] = logaddexp(G_[sj], log_rho_n) + (lf - lg);
      sum_post_[sj] += lf;
      sum_pre_[sj] += lg;
    }
  }

  double L(int j) const { return L_[static_cast<std::size_t>(j)]; }

  /// K_n^(j) via -log rho_n + sum log(f_j/g_j) + L_n^(j).
  double K(int j) const {
    const auto sj = static_cast<std::size_t>(j);
    return -rho_[sj].log_rho[n_] + (sum_post_[sj] - sum_pre_[sj]) + L_[sj];
  }

  /// K_n^(j) evaluated from its defining sum.
  double K_direct(int j) const {
    const auto sj = static_cast<std::size_t>(j);
    return G_[sj] - rho_[sj].log_rho[n_];
  }

  /// Lambda_n^(0)(i, j) = log Pi~^(i) / Pi_n(Y_0^(j)) (Example 2 only).
  double lambda0(int i, int j) const {
    const auto si = static_cast<std::size_t>(i);
    const auto sj = static_cast<std::size_t>(j);
    if (!has_block_[sj]) return kInf;
    return (sum_post_[si] - sum_pre_[sj]) + L_[si] - rho_[sj].log_tail[n_] + log_nu_[si] - log_nu_[sj];
  }

  double lambda(int i, int j) const {
    const auto si = static_cast<std::size_t>(i);
    if (j != 0) {
      const auto sj = static_cast<std::size_t>(j);
      return (sum_post_[si] - sum_post_[sj]) + L_[si] - L_[sj] + log_nu_[si] - log_nu_[sj];
    }
    if (kind_ == Kind::Example1) {
      return (sum_post_[si] - sum_pre_[si]) + L_[si] - log_survival_[n_] + log_nu_[si];
    }
    std::vector<double> neg(static_cast<std::size_t>(M_));
    for (int k = 1; k <= M_; ++k) neg[static_cast<std::size_t>(k - 1)] = -lambda0(i, k);
    return -logsumexp(neg);
  }

 private:
  Kind kind_;
  int M_;
  std::size_t horizon_ = 0;
  std::size_t n_ = 0;
  std::vector<Density> pre_density_, post_density_;
  std::vector<bool> has_block_;
  std::vector<double> log_nu_;
  std::vector<RhoTable> rho_;
  std::vector<double> log_survival_;
  std::vector<double> sum_post_, sum_pre_, drift_, L_, G_;
};

/// Lambda_n(i, j), n = 1..N, for an Example-1 model along `path`.
inline std::vector<double> closed_form_llr_example1(const ModelSpec& model, std::span<const Observation> path, int i, int j) {
  ClosedFormLlr cf(model, ClosedFormLlr::Kind::Example1, path.size());
  std::vector<double> out;
  out.reserve(path.size());
  for (Observation x : path) {
    cf.step(x);
    out.push_back(cf.lambda(i, j));
  }
  return out;
}

struct Example2Trace {
  std::vector<double> lambda;                // Lambda_n(i, j)
  std::vector<std::vector<double>> lambda0;  // lambda0[k][n-1] = Lambda_n^(0)(i, k), k = 1..M
};

inline Example2Trace closed_form_llr_example2(const ModelSpec& model, std::span<const Observation> path, int i, int j) {
  ClosedFormLlr cf(model, ClosedFormLlr::Kind::Example2, path.size());
  Example2Trace out;
  out.lambda0.resize(static_cast<std::size_t>(model.num_classes) + 1);
  for (Observation x : path) {
    cf.step(x);
    out.lambda.push_back(cf.lambda(i, j));
    for (int k = 1; k <= model.num_classes; ++k) out.lambda0[static_cast<std::size_t>(k)].push_back(cf.lambda0(i, k));
  }
  return out;
}

}  // namespace hmmcpd

#pragma once

// Shared fixtures: the bundled model files, a random valid-model generator and
// a brute-force path-enumeration oracle for the forward variables.

#include <functional>
#include <random>
#include <string>
#include <vector>

#include "hmmcpd/hmmcpd.hpp"

namespace testing_support {

using namespace hmmcpd;

inline std::string model_path(const std::string& name) { return std::string(HMMCPD_MODELS_DIR) + "/" + name; }

inline ModelSpec load(const std::string& name) { return load_model(model_path(name)); }

inline ModelSpec case1() { return load("finite_case1.json"); }
inline ModelSpec case2() { return load("finite_case2.json"); }
inline ModelSpec gaussian_blocks() { return load("example2_gaussian.json"); }
inline ModelSpec multistate1() { return load("multistate_case1.json"); }
inline ModelSpec multistate2() { return load("multistate_case2.json"); }

inline Eigen::MatrixXd rows(std::initializer_list<std::initializer_list<double>> r) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(r.size()), static_cast<Eigen::Index>(r.begin()->size()));
  Eigen::Index i = 0;
  for (const auto& row : r) {
    Eigen::Index j = 0;
    for (double v : row) m(i, j++) = v;
    ++i;
  }
  return m;
}

inline Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

struct RandomModelOptions {
  bool categorical = true;
  std::size_t alphabet = 3;
  int max_classes = 3;
  std::size_t max_transient = 3;
  std::size_t max_class_size = 2;
};

/// A random valid model: a transient set that leaks into every closed class,
/// strictly positive densities and an eta with mass on the transient set.
inline ModelSpec random_model(std::uint64_t seed, const RandomModelOptions& opt = {}) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> U(0.05, 1.0);
  auto pick = [&](std::size_t lo, std::size_t hi) { return std::uniform_int_distribution<std::size_t>(lo, hi)(gen); };

  const int M = static_cast<int>(pick(1, static_cast<std::size_t>(opt.max_classes)));
  const std::size_t T = pick(1, opt.max_transient);
  std::vector<int> cls(T, 0);
  for (int k = 1; k <= M; ++k)
    for (std::size_t s = pick(1, opt.max_class_size); s > 0; --s) cls.push_back(k);
  const std::size_t n = cls.size();

  Eigen::MatrixXd P = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t y = 0; y < n; ++y) {
    for (std::size_t z = 0; z < n; ++z) {
      const bool allowed = cls[y] == 0 || cls[z] == cls[y];
      if (allowed && U(gen) > 0.3) P(static_cast<Eigen::Index>(y), static_cast<Eigen::Index>(z)) = U(gen);
    }
    // transient rows always leak into class 1 + (y mod M); closed rows keep a self-loop
    if (cls[y] == 0) {
      const int target = 1 + static_cast<int>(y % static_cast<std::size_t>(M));
      for (std::size_t z = 0; z < n; ++z)
        if (cls[z] == target) P(static_cast<Eigen::Index>(y), static_cast<Eigen::Index>(z)) += 0.1;
    } else {
      P(static_cast<Eigen::Index>(y), static_cast<Eigen::Index>(y)) += 0.2;
    }
    P.row(static_cast<Eigen::Index>(y)) /= P.row(static_cast<Eigen::Index>(y)).sum();
  }
  // transient states other than the first are fed from it so every class is reachable
  for (std::size_t y = 1; y < T; ++y) P(0, static_cast<Eigen::Index>(y)) += 0.1;
  P.row(0) /= P.row(0).sum();

  Eigen::VectorXd eta = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  for (std::size_t y = 0; y < n; ++y)
    if (cls[y] == 0 || U(gen) > 0.7) eta(static_cast<Eigen::Index>(y)) = U(gen);
  eta /= eta.sum();

  std::vector<Density> dens;
  std::vector<std::string> names;
  for (std::size_t y = 0; y < n; ++y) {
    names.push_back("s" + std::to_string(y));
    if (opt.categorical) {
      std::vector<double> p(opt.alphabet);
      double s = 0.0;
      for (double& v : p) s += (v = U(gen));
      for (double& v : p) v /= s;
      dens.push_back(Categorical{p});
    } else {
      dens.push_back(Gaussian{std::uniform_real_distribution<double>(-1.0, 1.0)(gen), 1.0});
    }
  }
  auto model = make_model(names, eta, P, cls, dens);
  // renormalise exactly so row sums pass the 1e-12 check
  for (Eigen::Index y = 0; y < model.trans.rows(); ++y) model.trans.row(y) /= model.trans.row(y).sum();
  model.eta /= model.eta.sum();
  return model;
}

/// alpha_n(y) = sum over all state paths y_0..y_n = y of eta(y_0) prod P f.
inline std::vector<double> enumerate_alpha(const ModelSpec& model, const std::vector<Observation>& xs) {
  const std::size_t K = model.size();
  std::vector<double> alpha(K, 0.0);
  std::vector<std::size_t> path(xs.size() + 1, 0);
  std::function<void(std::size_t, double)> rec = [&](std::size_t t, double w) {
    if (w == 0.0) return;
    if (t == xs.size()) {
      alpha[path[t]] += w;
      return;
    }
    for (std::size_t z = 0; z < K; ++z) {
      path[t + 1] = z;
      const double p = model.trans(static_cast<Eigen::Index>(path[t]), static_cast<Eigen::Index>(z));
      rec(t + 1, w * p * std::exp(log_pdf(model.densities[z], xs[t])));
    }
  };
  for (std::size_t y0 = 0; y0 < K; ++y0) {
    path[0] = y0;
    rec(0, model.eta(static_cast<Eigen::Index>(y0)));
  }
  return alpha;
}

inline std::vector<Observation> draw_path(const ModelSpec& model, std::uint64_t seed, std::size_t n) {
  return simulate_path(ChainSampler(model), seed, 0, n, Stream::Generic).x;
}

}  // namespace testing_support

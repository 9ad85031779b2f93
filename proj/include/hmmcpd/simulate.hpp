#pragma once

#include <memory>
#include <vector>

#include "hmmcpd/density.hpp"
#include "hmmcpd/model.hpp"
#include "hmmcpd/rng.hpp"

namespace hmmcpd {

/// Immutable sampling tables for a model; share one across workers.
class ChainSampler {
 public:
  explicit ChainSampler(const ModelSpec& model)
      : class_of_(model.class_of), densities_(model.densities), eta_cdf_(cdf(model.eta)) {
    rows_.reserve(model.size());
    for (Eigen::Index y = 0; y < model.trans.rows(); ++y) rows_.push_back(cdf(model.trans.row(y).transpose()));
  }

  std::size_t draw_initial(Philox& rng) const { return draw(eta_cdf_, rng); }
  std::size_t draw_next(std::size_t y, Philox& rng) const { return draw(rows_[y], rng); }
  Observation draw_observation(std::size_t y, Philox& rng) const { return sample(densities_[y], rng); }
  int class_of(std::size_t y) const { return class_of_[y]; }

 private:
  struct Cdf {
    std::vector<double> cum;
    std::size_t last_positive = 0;
  };

  static Cdf cdf(const Eigen::VectorXd& p) {
    Cdf c;
    c.cum.resize(static_cast<std::size_t>(p.size()));
    double acc = 0.0;
    for (Eigen::Index k = 0; k < p.size(); ++k) {
      acc += p(k);
      c.cum[static_cast<std::size_t>(k)] = acc;
      if (p(k) > 0.0) c.last_positive = static_cast<std::size_t>(k);
    }
    return c;
  }

  static std::size_t draw(const Cdf& c, Philox& rng) {
    const double u = rng.uniform() * c.cum.back();
    for (std::size_t k = 0; k < c.cum.size(); ++k)
      if (u < c.cum[k]) return k;
    return c.last_positive;
  }

  std::vector<int> class_of_;
  std::vector<Density> densities_;
  Cdf eta_cdf_;
  std::vector<Cdf> rows_;
};

/// Lazily extended realisation of (Y, X). Y_0 is drawn on construction;
/// every next() advances Y and returns X_n ~ f(Y_n, .).
class PathSimulator {
 public:
  PathSimulator(const ChainSampler& sampler, Philox rng) : sampler_(&sampler), rng_(rng) {
    y_ = sampler_->draw_initial(rng_);
    note_absorption();
  }

  Observation next() {
    y_ = sampler_->draw_next(y_, rng_);
    ++n_;
    note_absorption();
    return sampler_->draw_observation(y_, rng_);
  }

  std::size_t state() const { return y_; }
  std::size_t n() const { return n_; }
  bool absorbed() const { return mu_ > 0; }
  std::size_t theta() const { return theta_; }
  int mu() const { return mu_; }

  /// Advances only the hidden chain until absorption so that theta and mu are
  /// known; observations are not generated. Returns false if `cap` steps pass.
  bool finish_absorption(std::size_t cap = 100'000'000) {
    std::size_t y = y_;
    std::size_t t = n_;
    while (mu_ == 0 && t < cap) {
      y = sampler_->draw_next(y, rng_);
      ++t;
      if (sampler_->class_of(y) > 0) {
        theta_ = t;
        mu_ = sampler_->class_of(y);
      }
    }
    return mu_ > 0;
  }

 private:
  void note_absorption() {
    if (mu_ == 0 && sampler_->class_of(y_) > 0) {
      theta_ = n_;
      mu_ = sampler_->class_of(y_);
    }
  }

  const ChainSampler* sampler_;
  Philox rng_;
  std::size_t y_ = 0;
  std::size_t n_ = 0;
  std::size_t theta_ = 0;
  int mu_ = 0;
};

/// A fully materialised path up to a horizon.
struct SimPath {
  std::vector<std::size_t> y;  // Y_0..Y_horizon
  std::vector<Observation> x;  // X_1..X_horizon
  std::size_t theta = 0;
  int mu = 0;
  std::uint64_t seed = 0;
  std::uint32_t stream_id = 0;
};

inline SimPath simulate_path(const ChainSampler& sampler, std::uint64_t seed, std::uint32_t path_id, std::size_t horizon,
                             Stream stream = Stream::Paths) {
  PathSimulator sim(sampler, make_rng(seed, stream, path_id));
  SimPath p;
  p.seed = seed;
  p.stream_id = path_id;
  p.y.reserve(horizon + 1);
  p.x.reserve(horizon);
  p.y.push_back(sim.state());
  for (std::size_t n = 1; n <= horizon; ++n) {
    p.x.push_back(sim.next());
    p.y.push_back(sim.state());
  }
  sim.finish_absorption();
  p.theta = sim.theta();
  p.mu = sim.mu();
  return p;
}

inline SimPath simulate_path(const ModelSpec& model, std::uint64_t seed, std::size_t horizon) {
  return simulate_path(ChainSampler(model), seed, 0, horizon);
}

/// Replays a fixed observation sequence.
class ReplaySource {
 public:
  explicit ReplaySource(std::span<const Observation> xs) : xs_(xs) {}
  Observation next() {
    if (pos_ >= xs_.size()) throw Error(ErrorCode::DimensionMismatch, "replayed path exhausted");
    return xs_[pos_++];
  }
  bool exhausted() const { return pos_ >= xs_.size(); }

 private:
  std::span<const Observation> xs_;
  std::size_t pos_ = 0;
};

/// The chain conditioned on {mu = i} (Doob h-transform): the same observation
/// law with eta_i(y) = eta(y) h_i(y) / nu_i and P_i(y,z) = P(y,z) h_i(z) / h_i(y).
inline ModelSpec conditioned_model(const ModelSpec& model, const Absorption& abs, int i) {
  if (!(abs.nu(i) > 0.0)) throw Error(ErrorCode::ZeroNu, "cannot condition on an unreachable class");
  ModelSpec out = model;
  const auto n = static_cast<Eigen::Index>(model.size());
  for (Eigen::Index y = 0; y < n; ++y) out.eta(y) = model.eta(y) * abs.h(y, i) / abs.nu(i);
  for (Eigen::Index y = 0; y < n; ++y) {
    const double hy = abs.h(y, i);
    if (!(hy > 0.0)) continue;
    for (Eigen::Index z = 0; z < n; ++z) out.trans(y, z) = model.trans(y, z) * abs.h(z, i) / hy;
    out.trans.row(y) /= out.trans.row(y).sum();
  }
  out.eta /= out.eta.sum();
  return out;
}

}  // namespace hmmcpd

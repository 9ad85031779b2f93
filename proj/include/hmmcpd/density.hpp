#pragma once

#include <cmath>
#include <numbers>
#include <string>
#include <variant>
#include <vector>

#include "hmmcpd/error.hpp"
#include "hmmcpd/numeric.hpp"
#include "hmmcpd/rng.hpp"

namespace hmmcpd {

/// Observations are real numbers. Categorical symbols are encoded as the
/// 0-based index of the cell, stored as a double.
using Observation = double;

struct Gaussian {
  double mean = 0.0;
  double var = 1.0;

  bool operator==(const Gaussian&) const = default;
};

struct Categorical {
  std::vector<double> probs;

  bool operator==(const Categorical&) const = default;
};

using Density = std::variant<Gaussian, Categorical>;

inline bool is_categorical(const Density& d) { return std::holds_alternative<Categorical>(d); }

inline std::size_t alphabet_size(const Density& d) {
  if (const auto* c = std::get_if<Categorical>(&d)) return c->probs.size();
  return 0;
}

/// Index of a categorical symbol, or npos when x is not a valid cell index.
inline std::size_t symbol_index(Observation x, std::size_t size) {
  if (!(x >= 0.0) || x != std::floor(x) || x >= static_cast<double>(size)) return static_cast<std::size_t>(-1);
  return static_cast<std::size_t>(x);
}

inline double log_pdf(const Density& d, Observation x) {
  return std::visit(
      [x](const auto& dens) -> double {
        using T = std::decay_t<decltype(dens)>;
        if constexpr (std::is_same_v<T, Gaussian>) {
          const double z = x - dens.mean;
          return -0.5 * std::log(2.0 * std::numbers::pi * dens.var) - z * z / (2.0 * dens.var);
        } else {
          const std::size_t k = symbol_index(x, dens.probs.size());
          if (k == static_cast<std::size_t>(-1)) {
            throw Error(ErrorCode::BadDensity, "observation " + std::to_string(x) + " outside the categorical alphabet");
          }
          return dens.probs[k] > 0.0 ? std::log(dens.probs[k]) : kNegInf;
        }
      },
      d);
}

inline Observation sample(const Density& d, Philox& rng) {
  return std::visit(
      [&rng](const auto& dens) -> Observation {
        using T = std::decay_t<decltype(dens)>;
        if constexpr (std::is_same_v<T, Gaussian>) {
          return dens.mean + std::sqrt(dens.var) * rng.normal();
        } else {
          const double u = rng.uniform();
          double acc = 0.0;
          std::size_t last = 0;
          for (std::size_t k = 0; k < dens.probs.size(); ++k) {
            if (dens.probs[k] <= 0.0) continue;
            last = k;
            acc += dens.probs[k];
            if (u < acc) return static_cast<Observation>(k);
          }
          return static_cast<Observation>(last);
        }
      },
      d);
}

/// Exact Kullback-Leibler divergence KL(a || b).
///
/// Gaussians use the closed form; with a common variance v it is
/// (mean_a - mean_b)^2 / (2 v). Categorical uses 0 log 0 = 0 and returns
/// +inf when the support of `a` is not contained in that of `b`.
inline double kl(const Density& a, const Density& b) {
  if (a.index() != b.index()) throw Error(ErrorCode::UnsupportedPair, "KL between different density families");
  if (const auto* ga = std::get_if<Gaussian>(&a)) {
    const auto& gb = std::get<Gaussian>(b);
    const double dm = ga->mean - gb.mean;
    if (ga->var == gb.var) return dm * dm / (2.0 * ga->var);
    return 0.5 * (std::log(gb.var / ga->var) + (ga->var + dm * dm) / gb.var - 1.0);
  }
  const auto& pa = std::get<Categorical>(a).probs;
  const auto& pb = std::get<Categorical>(b).probs;
  if (pa.size() != pb.size()) throw Error(ErrorCode::UnsupportedPair, "categorical alphabets differ in size");
  double s = 0.0;
  for (std::size_t k = 0; k < pa.size(); ++k) {
    if (pa[k] <= 0.0) continue;
    if (pb[k] <= 0.0) return kInf;
    s += pa[k] * std::log(pa[k] / pb[k]);
  }
  return std::max(s, 0.0);
}

inline std::string describe(const Density& d) {
  if (const auto* g = std::get_if<Gaussian>(&d)) {
    return "Gaussian(" + std::to_string(g->mean) + ", " + std::to_string(g->var) + ")";
  }
  std::string s = "Categorical[";
  const auto& p = std::get<Categorical>(d).probs;
  for (std::size_t k = 0; k < p.size(); ++k) s += (k ? "," : "") + std::to_string(p[k]);
  return s + "]";
}

}  // namespace hmmcpd

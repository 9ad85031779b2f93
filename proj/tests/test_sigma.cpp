#include <gtest/gtest.h>

#include "common.hpp"

using namespace hmmcpd;
using namespace testing_support;

TEST(Sigma, ZeroOvershootGivesTheWeight) {
  const std::vector<double> W(50, 0.0);
  const auto s = sigma_from_overshoots(W, 0.7);
  EXPECT_DOUBLE_EQ(s.sigma, 0.7);
  EXPECT_NEAR(s.se, 0.0, 1e-15);
  const std::vector<double> W2{0.0, std::log(2.0)};
  EXPECT_DOUBLE_EQ(sigma_from_overshoots(W2, 1.0).sigma, 0.75);
}

TEST(Sigma, DefaultIsTerminalWeight) {
  const auto m = case1();
  const auto lim = limits(m, chain_facts(m));
  const auto costs = uniform_costs(m, 0.1);
  const auto s1 = sigma_default(m, costs, lim, 1);
  EXPECT_EQ(s1.j, 0);
  EXPECT_DOUBLE_EQ(s1.sigma, 1.0);
  // class 2 has tied minimisers; the representative is used
  const auto s2 = sigma_default(m, costs, lim, 2);
  EXPECT_EQ(s2.j, 0);
  EXPECT_DOUBLE_EQ(s2.sigma, 1.0);
  auto heavy = costs;
  heavy.a(0, 1) = 3.0;
  EXPECT_DOUBLE_EQ(sigma_default(m, heavy, lim, 1).sigma, 3.0);
  const auto v = sigma_default_vector(m, costs, lim);
  EXPECT_EQ(v.size(), 3u);
}

TEST(Sigma, TerminalWeightExample2UsesOwnBlock) {
  const auto m = gaussian_blocks();
  const auto lim = limits(m, chain_facts(m));
  auto costs = uniform_costs(m, 0.1);
  costs.a(3, 2) = 0.25;  // (2,1)
  costs.a(4, 2) = 0.5;   // (2,2)
  costs.a(0, 2) = 9.0;   // (1,1) is outside the block of class 2
  EXPECT_DOUBLE_EQ(terminal_weight(m, costs, lim, 2, 0), 0.5);
  EXPECT_DOUBLE_EQ(terminal_weight(m, costs, lim, 1, 2), 1.0);
}

TEST(Sigma, MonteCarloNeedsUniqueMinimiser) {
  const auto m = case1();
  const auto lim = limits(m, chain_facts(m));
  const auto costs = uniform_costs(m, 0.1);
  SigmaParams prm;
  prm.samples = 10;
  for (auto method : {SigmaMethod::OvershootMc, SigmaMethod::RenewalMc}) {
    try {
      estimate_sigma(m, costs, lim, 2, method, prm);
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::NonUniqueJStar);
    }
  }
}

namespace {

/// The Gaussian Example-2 model with class 1 pushed away from class 2, so the
/// competing LLR of class 2 separates quickly.
ModelSpec separated_example2() {
  auto m = gaussian_blocks();
  m.densities[0] = Gaussian{-0.5, 1};
  m.densities[1] = Gaussian{-0.5, 1};
  m.densities[2] = Gaussian{1.0, 1};
  return m;
}

void expect_methods_agree(const ModelSpec& m, int i, std::uint64_t seed) {
  const auto lim = limits(m, chain_facts(m));
  const auto costs = uniform_costs(m, 0.1);
  SigmaParams prm;
  prm.samples = 100000;
  prm.seed = seed;
  const auto o = estimate_sigma(m, costs, lim, i, SigmaMethod::OvershootMc, prm);
  const auto r = estimate_sigma(m, costs, lim, i, SigmaMethod::RenewalMc, prm);
  EXPECT_GT(o.sigma, 0.0);
  EXPECT_LE(o.sigma, 1.0);
  EXPECT_GT(r.sigma, 0.0);
  EXPECT_LE(r.sigma, 1.0);
  EXPECT_LT(std::abs(o.sigma - r.sigma), 3 * std::hypot(o.se, r.se)) << "class " << i << ": " << o.sigma << " vs " << r.sigma;
  EXPECT_EQ(o.j, lim.j_of(i));
  EXPECT_EQ(o.A_used, prm.A_small);
}

}  // namespace

TEST(Sigma, OvershootAndRenewalAgreeKlBranch) { expect_methods_agree(gaussian_blocks(), 1, 11); }

TEST(Sigma, OvershootAndRenewalAgreeSeparatedModel) {
  const auto m = separated_example2();
  ASSERT_TRUE(validate(m).ok());
  expect_methods_agree(m, 1, 11);
  expect_methods_agree(m, 2, 11);
}

TEST(Sigma, OvershootApproachesRenewalAsThresholdShrinks) {
  // In the unmodified model the class-1 LLR trails class 2 by only ~0.04 per
  // step, so the overshoot at A = 1e-6 still carries its influence.
  const auto m = gaussian_blocks();
  const auto lim = limits(m, chain_facts(m));
  const auto costs = uniform_costs(m, 0.1);
  SigmaParams prm;
  prm.samples = 20000;
  prm.seed = 5;
  const double target = sigma_renewal_mc(m, costs, lim, 2, prm).sigma;
  prm.A_small = 1e-4;
  const double coarse = sigma_overshoot_mc(m, costs, lim, 2, prm).sigma;
  prm.A_small = 1e-13;
  const double fine = sigma_overshoot_mc(m, costs, lim, 2, prm).sigma;
  EXPECT_LT(std::abs(fine - target), std::abs(coarse - target));
}

TEST(Sigma, SeededEstimatesAreReproducible) {
  const auto m = gaussian_blocks();
  const auto lim = limits(m, chain_facts(m));
  const auto costs = uniform_costs(m, 0.1);
  SigmaParams prm;
  prm.samples = 500;
  prm.seed = 8;
  prm.threads = 1;
  const auto a = sigma_overshoot_mc(m, costs, lim, 1, prm);
  prm.threads = 3;
  const auto b = sigma_overshoot_mc(m, costs, lim, 1, prm);
  EXPECT_EQ(a.sigma, b.sigma);
  EXPECT_EQ(a.se, b.se);
}

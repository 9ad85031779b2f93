#include <gtest/gtest.h>

#include "common.hpp"

using namespace hmmcpd;

TEST(LogSumExp, MatchesDirectSum) {
  const std::vector<double> v{std::log(0.2), std::log(0.3), std::log(0.5)};
  EXPECT_NEAR(logsumexp(v), 0.0, 1e-15);
  EXPECT_NEAR(logaddexp(std::log(0.25), std::log(0.5)), std::log(0.75), 1e-15);
}

TEST(LogSumExp, HandlesInfinities) {
  const std::vector<double> empty{kNegInf, kNegInf};
  EXPECT_EQ(logsumexp(empty), kNegInf);
  EXPECT_EQ(logaddexp(kNegInf, 1.5), 1.5);
  const std::vector<double> big{1000.0, 1000.0};
  EXPECT_NEAR(logsumexp(big), 1000.0 + std::log(2.0), 1e-12);
}

TEST(SampleStats, KnownValues) {
  const std::vector<double> v{1, 2, 3, 4};
  const auto s = sample_stats(v);
  EXPECT_EQ(s.count, 4u);
  EXPECT_DOUBLE_EQ(s.mean, 2.5);
  EXPECT_NEAR(s.sd, 1.2909944487358056, 1e-15);
  EXPECT_NEAR(s.se(), 1.2909944487358056 / 2.0, 1e-15);
  EXPECT_NEAR(s.ci_hi() - s.ci_lo(), 2 * 1.959963984540054 * s.se(), 1e-15);
}

TEST(PairwiseSum, ExactOnIntegers) {
  std::vector<double> v(1000);
  for (std::size_t k = 0; k < v.size(); ++k) v[k] = static_cast<double>(k);
  EXPECT_EQ(pairwise_sum(v), 499500.0);
}

// Known-answer vector for Philox4x32-10 with zero counter and zero key.
TEST(Philox, KnownAnswerZeroCounter) {
  Philox rng(0, 0, 0);
  const std::uint64_t first = rng();
  EXPECT_EQ(first, (std::uint64_t{0xe169c58du} << 32) | 0x6627e8d5u);
  const std::uint64_t second = rng();
  EXPECT_EQ(second, (std::uint64_t{0x9b00dbd8u} << 32) | 0xbc57ac4cu);
}

TEST(Philox, StreamsAreDisjointAndReproducible) {
  auto a = make_rng(7, Stream::Paths, 3);
  auto b = make_rng(7, Stream::Paths, 3);
  auto c = make_rng(7, Stream::Paths, 4);
  auto d = make_rng(7, Stream::PolicyEval, 3);
  for (int k = 0; k < 100; ++k) {
    const auto va = a();
    EXPECT_EQ(va, b());
    EXPECT_NE(va, c());
    EXPECT_NE(va, d());
  }
}

TEST(Philox, UniformAndNormalMoments) {
  auto rng = make_rng(11, Stream::Generic, 0);
  const int n = 200000;
  std::vector<double> u(n), z(n);
  for (int k = 0; k < n; ++k) {
    u[k] = rng.uniform();
    ASSERT_GE(u[k], 0.0);
    ASSERT_LT(u[k], 1.0);
  }
  for (int k = 0; k < n; ++k) z[k] = rng.normal();
  const auto su = sample_stats(u), sz = sample_stats(z);
  EXPECT_NEAR(su.mean, 0.5, 4 * std::sqrt(1.0 / 12.0 / n));
  EXPECT_NEAR(sz.mean, 0.0, 4 / std::sqrt(static_cast<double>(n)));
  EXPECT_NEAR(sz.sd, 1.0, 0.01);
}

TEST(Csv, FixedFormatting) {
  EXPECT_EQ(fmt(0.125), "0.125");
  EXPECT_EQ(fmt(std::nan("")), "nan");
  EXPECT_EQ(fmt(kInf), "inf");
  EXPECT_EQ(fmt(kNegInf), "-inf");
  EXPECT_EQ(hex64(fnv1a("")), "cbf29ce484222325");
}

TEST(Parallel, ResultIndependentOfThreadCount) {
  std::vector<double> a(1000), b(1000);
  parallel_for(a.size(), [&](std::size_t k) { a[k] = std::sin(static_cast<double>(k)); }, 1);
  parallel_for(b.size(), [&](std::size_t k) { b[k] = std::sin(static_cast<double>(k)); }, 4);
  EXPECT_EQ(pairwise_sum(a), pairwise_sum(b));
}

TEST(Parallel, PropagatesExceptions) {
  EXPECT_THROW(parallel_for(10, [](std::size_t k) {
    if (k == 7) throw Error(ErrorCode::NoConvergence, "x");
  }, 3), Error);
}

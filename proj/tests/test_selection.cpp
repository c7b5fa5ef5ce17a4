#include <gtest/gtest.h>

#include "fedex/selection.hpp"
#include "oracles.hpp"

using namespace fedex;

namespace {

DeviceProfile device(DeviceId id, double t_cp, double t_comm) {
  DeviceProfile p;
  p.id = id;
  p.t_cp = t_cp;
  p.model_bytes = 1e6;
  p.rate = p.model_bytes / t_comm;
  p.mem_capacity = 1e9;
  return p;
}

std::vector<UtilityRecord> records(const std::vector<double>& u) {
  std::vector<UtilityRecord> r;
  for (std::size_t i = 0; i < u.size(); ++i) {
    UtilityRecord x;
    x.device = static_cast<DeviceId>(i);
    x.combined = x.boosted = u[i];
    r.push_back(x);
  }
  return r;
}

const std::vector<double> kLosses{1.0, 2.0, 2.0};

}  // namespace

TEST(OortUtility, WithinDeadlineNoPenalty) {
  EXPECT_DOUBLE_EQ(oort_utility(kLosses, 4.0, 5.0, 2.0), statistical_utility(kLosses));
  EXPECT_DOUBLE_EQ(oort_utility(kLosses, 5.0, 5.0, 2.0), statistical_utility(kLosses));
}

TEST(OortUtility, DoubleDeadlineQuarter) {
  EXPECT_DOUBLE_EQ(oort_latency_factor(10.0, 5.0, 2.0), 0.25);
  EXPECT_DOUBLE_EQ(oort_utility(kLosses, 10.0, 5.0, 2.0), 0.25 * statistical_utility(kLosses));
}

TEST(OortUtility, ZeroLossesZeroUtility) {
  const std::vector<double> z(4, 0.0);
  EXPECT_EQ(oort_utility(z, 1.0, 5.0, 2.0), 0.0);
  EXPECT_EQ(oort_utility(z, 100.0, 5.0, 2.0), 0.0);
}

TEST(FedexUtility, AlphaZeroIsPureStatistical) {
  const auto r = fedex_utility(kLosses, device(0, 1.0, 5.0), 10, 0, 0.0);
  EXPECT_DOUBLE_EQ(r.latency_factor, 1.0);
  EXPECT_DOUBLE_EQ(r.combined, statistical_utility(kLosses));
}

TEST(FedexUtility, FullyPrecomputedUsesCommOnly) {
  const auto r = fedex_utility(kLosses, device(0, 1.0, 5.0), 10, 10, 1.0);
  EXPECT_NEAR(r.latency_factor, 1.0 / 5.0, 1e-15);
}

TEST(FedexUtility, FourToOneRatio) {
  // Totals 5 s vs 10 s with K=0 classical work left.
  const auto fast = fedex_utility(kLosses, device(0, 1.0, 5.0), 10, 10, 2.0);
  const auto slow = fedex_utility(kLosses, device(1, 1.0, 10.0), 10, 10, 2.0);
  EXPECT_NEAR(fast.combined / slow.combined, 4.0, 1e-12);
  EXPECT_EQ(fast.combined, fast.statistical * fast.latency_factor);
}

TEST(FedexUtility, StalenessOutOfRange) {
  EXPECT_THROW(fedex_utility(kLosses, device(0, 1.0, 5.0), 10, 11, 2.0), ConfigError);
}

TEST(FedexUtility, Monotonicity) {
  for (double alpha : {0.5, 1.0, 2.0}) {
    double prev = INFINITY;
    for (double t_cp = 0.1; t_cp < 3.0; t_cp += 0.1) {
      const double u = fedex_utility(kLosses, device(0, t_cp, 5.0), 10, 3, alpha).combined;
      EXPECT_LT(u, prev);
      prev = u;
    }
    prev = INFINITY;
    for (double bytes = 1e5; bytes < 1e7; bytes *= 1.5) {
      DeviceProfile p = device(0, 1.0, 5.0);
      p.model_bytes = bytes;
      const double u = fedex_utility(kLosses, p, 10, 3, alpha).combined;
      EXPECT_LT(u, prev);
      prev = u;
    }
    prev = -1.0;
    for (int s = 0; s <= 10; ++s) {
      const double u = fedex_utility(kLosses, device(0, 1.0, 5.0), 10, s, alpha).combined;
      EXPECT_GT(u, prev);
      prev = u;
    }
  }
}

TEST(TemporalBoost, ZeroOverlookedUnchanged) { EXPECT_EQ(temporal_uncertainty_boost(3.5, 0, 7, 1.0), 3.5); }

TEST(TemporalBoost, OverlookedEveryRoundDoubles) {
  EXPECT_DOUBLE_EQ(temporal_uncertainty_boost(3.5, 7, 7, 1.0), 7.0);
}

TEST(TemporalBoost, StrictlyIncreasing) {
  double prev = -1.0;
  for (int u = 0; u <= 20; ++u) {
    const double b = temporal_uncertainty_boost(2.0, u, 20, 1.0);
    EXPECT_GT(b, prev);
    prev = b;
  }
}

TEST(TemporalBoost, InvalidInputs) {
  EXPECT_THROW(temporal_uncertainty_boost(1.0, -1, 3, 1.0), ConfigError);
  EXPECT_THROW(temporal_uncertainty_boost(1.0, 0, 0, 1.0), ConfigError);
}

TEST(RankAndSelect, EveryoneWhenPEqualsN) {
  const auto r = records({3, 1, 2});
  EXPECT_EQ(rank_and_select(r, 3), (std::vector<DeviceId>{0, 1, 2}));
}

TEST(RankAndSelect, TieBreakLowerId) {
  const auto r = records({5, 9, 9, 1});
  EXPECT_EQ(rank_and_select(r, 2), (std::vector<DeviceId>{1, 2}));
  const auto t = records({9, 5, 9, 9});
  EXPECT_EQ(rank_and_select(t, 2), (std::vector<DeviceId>{0, 2}));
}

TEST(RankAndSelect, TooFewCandidatesWarnsAndSelectsAll) {
  int warnings = 0;
  auto saved = warning_handler();
  warning_handler() = [&](std::string_view) { ++warnings; };
  const auto got = rank_and_select(records({1, 2}), 5);
  warning_handler() = saved;
  EXPECT_EQ(got, (std::vector<DeviceId>{0, 1}));
  EXPECT_EQ(warnings, 1);
}

TEST(RankAndSelect, MatchesSortOracle) {
  RngStream rng(12, "sel");
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 1 + rng.uniform_index(30);
    std::vector<double> u(n);
    for (auto& x : u) x = static_cast<double>(rng.uniform_index(6));  // many ties
    auto r = records(u);
    rng.shuffle(r);
    const int p = 1 + static_cast<int>(rng.uniform_index(n));
    EXPECT_EQ(rank_and_select(r, p), oracle::sort_select(r, p));
  }
}

TEST(RankAndSelect, ScaleInvariant) {
  RngStream rng(13, "sel");
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> u(15);
    for (auto& x : u) x = rng.uniform(0.0, 10.0);
    auto scaled = u;
    const double c = rng.uniform(0.01, 100.0);
    for (auto& x : scaled) x *= c;
    EXPECT_EQ(rank_and_select(records(u), 5), rank_and_select(records(scaled), 5));
  }
}

TEST(RankAndSelect, FedexUtilityMinimisesSelectedLatency) {
  RngStream rng(14, "brute");
  const int K = 10;
  for (int trial = 0; trial < 40; ++trial) {
    const int n = 4 + static_cast<int>(rng.uniform_index(9));  // 4..12
    const int p = 1 + static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(n)));
    std::vector<UtilityRecord> recs;
    std::vector<double> totals;
    for (int i = 0; i < n; ++i) {
      const DeviceProfile d = device(i, rng.uniform(0.5, 1.5), rng.uniform(4.0, 8.0));
      const int s = static_cast<int>(rng.uniform_index(K + 1));
      recs.push_back(fedex_utility(kLosses, d, K, s, 2.0));
      totals.push_back(phase_latency(d, K, s).total());
    }
    const auto chosen = rank_and_select(recs, p);
    double got = 0.0;
    for (DeviceId id : chosen) got = std::max(got, totals[static_cast<std::size_t>(id)]);
    EXPECT_DOUBLE_EQ(got, oracle::best_subset_latency(totals, p));
  }
}

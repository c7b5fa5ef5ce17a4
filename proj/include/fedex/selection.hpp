#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "fedex/core.hpp"
#include "fedex/learning.hpp"

namespace fedex {

struct UtilityRecord {
  DeviceId device = 0;
  double statistical = 0.0;
  double latency_factor = 1.0;
  double combined = 0.0;  // statistical * latency_factor
  double boosted = 0.0;   // combined after the temporal-uncertainty boost
  bool overlooked_boosted = false;
};

// Oort: statistical utility * (T_pref / t)^(alpha * [T_pref < t]).
inline double oort_latency_factor(double t_total, double t_pref, double alpha) {
  if (!(t_total > 0) || !(t_pref > 0)) throw ConfigError("oort_utility: durations must be positive");
  return t_pref < t_total ? std::pow(t_pref / t_total, alpha) : 1.0;
}

inline double oort_utility(std::span<const double> stat_losses, double t_total, double t_pref, double alpha) {
  return statistical_utility(stat_losses) * oort_latency_factor(t_total, t_pref, alpha);
}

// Overlap-aware utility: statistical utility * ((K - S_prev) t_cp + D/R)^(-alpha).
inline UtilityRecord fedex_utility(std::span<const double> stat_losses, const DeviceProfile& profile,
                                   int local_iters, int staleness_prev, double alpha) {
  if (staleness_prev < 0 || staleness_prev > local_iters)
    throw ConfigError("fedex_utility: S_prev must lie in [0, K]");
  const double denom = static_cast<double>(local_iters - staleness_prev) * profile.t_cp + profile.t_comm();
  if (!(denom > 0)) throw ConfigError("fedex_utility: zero round-time estimate for device " +
                                      std::to_string(profile.id));
  UtilityRecord r;
  r.device = profile.id;
  r.statistical = statistical_utility(stat_losses);
  r.latency_factor = std::pow(1.0 / denom, alpha);
  r.combined = r.statistical * r.latency_factor;
  r.boosted = r.combined;
  return r;
}

// combined * (1 + c * sqrt(overlooked / round))
inline double temporal_uncertainty_boost(double combined, int overlooked, int current_round, double c_boost) {
  if (overlooked < 0) throw ConfigError("temporal_uncertainty_boost: overlooked must be >= 0");
  if (current_round < 1) throw ConfigError("temporal_uncertainty_boost: round must be >= 1");
  return combined *
         (1.0 + c_boost * std::sqrt(static_cast<double>(overlooked) / static_cast<double>(current_round)));
}

// Top-P by boosted utility, ties to the lower id; result sorted by id.
inline std::vector<DeviceId> rank_and_select(std::span<const UtilityRecord> records, int participants) {
  if (participants < 1) throw ConfigError("rank_and_select: P must be >= 1");
  std::vector<const UtilityRecord*> order;
  order.reserve(records.size());
  for (const auto& r : records) order.push_back(&r);
  if (static_cast<std::size_t>(participants) > records.size()) {
    warn("rank_and_select: " + std::to_string(records.size()) + " candidates for P=" +
         std::to_string(participants) + "; selecting all");
  }
  const std::size_t take = std::min(order.size(), static_cast<std::size_t>(participants));
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(),
                    [](const UtilityRecord* a, const UtilityRecord* b) {
                      if (a->boosted != b->boosted) return a->boosted > b->boosted;
                      return a->device < b->device;
                    });
  std::vector<DeviceId> ids;
  ids.reserve(take);
  for (std::size_t i = 0; i < take; ++i) ids.push_back(order[i]->device);
  std::sort(ids.begin(), ids.end());
  return ids;
}

}  // namespace fedex

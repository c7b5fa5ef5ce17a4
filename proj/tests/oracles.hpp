#pragma once

// Independent reference implementations used to check the library.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "fedex/learning.hpp"
#include "fedex/selection.hpp"
#include "fedex/timing.hpp"

namespace oracle {

using namespace fedex;

// Central-difference gradient of the regularized mean loss.
inline ModelParams finite_difference_grad(const LearningTask& task, const ModelParams& w,
                                          std::span<const LabeledSample> batch, double h = 1e-5) {
  ModelParams g(w.dim());
  ModelParams p = w;
  for (std::size_t i = 0; i < w.dim(); ++i) {
    p[i] = w[i] + h;
    const double up = loss_and_grad(task, p, batch).loss;
    p[i] = w[i] - h;
    const double dn = loss_and_grad(task, p, batch).loss;
    p[i] = w[i];
    g[i] = (up - dn) / (2.0 * h);
  }
  return g;
}

// ||a - b|| / max(||a||, ||b||, tiny)
inline double relative_error(const ModelParams& a, const ModelParams& b) {
  double d = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.dim(); ++i) {
    d += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return std::sqrt(d) / std::max({std::sqrt(na), std::sqrt(nb), 1e-12});
}

// Sort everything by (utility desc, id asc), take P, sort by id.
inline std::vector<DeviceId> sort_select(std::vector<UtilityRecord> recs, int p) {
  std::stable_sort(recs.begin(), recs.end(), [](const UtilityRecord& a, const UtilityRecord& b) {
    if (a.boosted > b.boosted) return true;
    if (a.boosted < b.boosted) return false;
    return a.device < b.device;
  });
  std::vector<DeviceId> ids;
  for (std::size_t i = 0; i < std::min(recs.size(), static_cast<std::size_t>(p)); ++i) ids.push_back(recs[i].device);
  std::sort(ids.begin(), ids.end());
  return ids;
}

// Sorted-vector queue with the same ordering contract as EventQueue.
class SortedQueue {
 public:
  void push(const SimEvent& e) {
    items_.push_back({e, seq_++});
    std::stable_sort(items_.begin(), items_.end(), [](const Item& a, const Item& b) {
      if (a.e.time != b.e.time) return a.e.time < b.e.time;
      if (a.e.kind != b.e.kind) return static_cast<int>(a.e.kind) < static_cast<int>(b.e.kind);
      if (a.e.device != b.e.device) return a.e.device < b.e.device;
      return a.seq < b.seq;
    });
  }
  bool empty() const { return items_.empty(); }
  SimEvent pop() {
    SimEvent e = items_.front().e;
    items_.erase(items_.begin());
    return e;
  }

 private:
  struct Item {
    SimEvent e;
    std::uint64_t seq;
  };
  std::vector<Item> items_;
  std::uint64_t seq_ = 0;
};

// Smallest max latency over all P-subsets of `totals`.
inline double best_subset_latency(const std::vector<double>& totals, int p) {
  const int n = static_cast<int>(totals.size());
  double best = INFINITY;
  std::vector<int> mask(static_cast<std::size_t>(n), 0);
  std::fill(mask.begin(), mask.begin() + p, 1);
  std::sort(mask.begin(), mask.end());
  do {
    double m = 0.0;
    for (int i = 0; i < n; ++i)
      if (mask[static_cast<std::size_t>(i)]) m = std::max(m, totals[static_cast<std::size_t>(i)]);
    best = std::min(best, m);
  } while (std::next_permutation(mask.begin(), mask.end()));
  return best;
}

// Random d x d orthogonal matrix via Gram-Schmidt on Gaussian columns.
inline std::vector<std::vector<double>> random_orthogonal(std::size_t d, RngStream& rng) {
  std::vector<std::vector<double>> q(d, std::vector<double>(d));
  for (std::size_t c = 0; c < d; ++c) {
    std::vector<double> v(d);
    for (auto& x : v) x = rng.normal();
    for (std::size_t k = 0; k < c; ++k) {
      double dot = 0.0;
      for (std::size_t r = 0; r < d; ++r) dot += v[r] * q[r][k];
      for (std::size_t r = 0; r < d; ++r) v[r] -= dot * q[r][k];
    }
    double n = 0.0;
    for (double x : v) n += x * x;
    n = std::sqrt(n);
    for (std::size_t r = 0; r < d; ++r) q[r][c] = v[r] / n;
  }
  return q;
}

inline FeatureMatrix random_features(std::size_t rows, std::size_t cols, RngStream& rng) {
  FeatureMatrix f{rows, cols, std::vector<double>(rows * cols)};
  for (auto& x : f.data) x = rng.normal();
  return f;
}

inline FeatureMatrix multiply(const FeatureMatrix& x, const std::vector<std::vector<double>>& q) {
  FeatureMatrix out{x.rows, q[0].size(), std::vector<double>(x.rows * q[0].size())};
  for (std::size_t r = 0; r < x.rows; ++r)
    for (std::size_t c = 0; c < out.cols; ++c) {
      double s = 0.0;
      for (std::size_t k = 0; k < x.cols; ++k) s += x(r, k) * q[k][c];
      out(r, c) = s;
    }
  return out;
}

inline Dataset random_batch(const LearningTask& task, std::size_t n, RngStream& rng) {
  Dataset b(n);
  for (auto& s : b) {
    s.features.resize(static_cast<std::size_t>(task.input_dim));
    for (auto& x : s.features) x = rng.normal();
    s.label = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(task.num_classes)));
  }
  return b;
}

inline ModelParams random_model(const LearningTask& task, RngStream& rng, double scale = 0.5) {
  ModelParams w(task.param_dim());
  for (auto& x : w) x = rng.normal(0.0, scale);
  return w;
}

}  // namespace oracle

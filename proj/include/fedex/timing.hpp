#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <queue>
#include <span>
#include <utility>
#include <vector>

#include "fedex/core.hpp"

namespace fedex {

struct PhaseTimings {
  double t_classical = 0.0;  // (K - S_prev) * t_cp
  double t_comm = 0.0;       // model_bytes / rate
  double t_wait = 0.0;       // barrier - (t_classical + t_comm)
  int overlap_iters = 0;     // S_n^r
  double idle = 0.0;         // time after the last whole overlap iteration until the barrier

  double total() const noexcept { return t_classical + t_comm; }
};

inline PhaseTimings phase_latency(const DeviceProfile& profile, int local_iters, int staleness_prev) {
  if (staleness_prev < 0 || staleness_prev > local_iters)
    throw ProtocolError("phase_latency: S_prev must lie in [0, K]");
  PhaseTimings p;
  p.t_classical = static_cast<double>(local_iters - staleness_prev) * profile.t_cp;
  p.t_comm = profile.t_comm();
  return p;
}

// Synchronous barrier: the slowest classical + upload time.
inline double round_latency(std::span<const PhaseTimings> selected) {
  if (selected.empty()) throw ProtocolError("round_latency: empty selection");
  double m = 0.0;
  for (const auto& p : selected) m = std::max(m, p.total());
  return m;
}

namespace detail {
// Ratios such as 8.4 / 0.84 land a few ulps above an integer.
inline double ceil_tolerant(double x) { return std::ceil(x - 1e-9 * std::max(1.0, std::abs(x))); }
}  // namespace detail

// min(ceil((t_comm + t_wait) / t_cp), U)
inline int staleness_ceiling(double t_comm, double t_wait, double t_cp, int ceiling_u) {
  if (!(t_cp > 0)) throw ConfigError("staleness_ceiling: t_cp must be > 0");
  if (ceiling_u < 0) throw ConfigError("staleness_ceiling: U must be >= 0");
  const double raw = detail::ceil_tolerant((t_comm + t_wait) / t_cp);
  if (!(raw < static_cast<double>(ceiling_u))) return ceiling_u;
  return std::max(0, static_cast<int>(raw));
}

// Naive overlap sends every K*t_cp seconds; a send that takes longer collides.
inline bool collision_predicate(const DeviceProfile& profile, int local_iters) {
  if (local_iters < 1) throw ConfigError("collision_predicate: K must be >= 1");
  return profile.t_comm() > static_cast<double>(local_iters) * profile.t_cp;
}

struct StalenessSplit {
  int a = 0;  // whole K-blocks
  int b = 0;  // remainder, 0 <= b < K
};

inline StalenessSplit staleness_decompose(int staleness, int local_iters) {
  if (staleness < 0) throw ConfigError("staleness_decompose: S must be >= 0");
  if (local_iters < 1) throw ConfigError("staleness_decompose: K must be >= 1");
  return {staleness / local_iters, staleness % local_iters};
}

// Stored stale copies plus the working model: (ceil(S/K) + 1) * model_bytes.
inline double memory_usage(int staleness, int local_iters, double model_bytes) {
  if (staleness < 0) throw ConfigError("memory_usage: S must be >= 0");
  if (local_iters < 1) throw ConfigError("memory_usage: K must be >= 1");
  const int copies = (staleness + local_iters - 1) / local_iters;
  return static_cast<double>(copies + 1) * model_bytes;
}

// Number of whole iterations (k >= 1, k * t_cp < available) that finish strictly
// before `available` seconds have elapsed.
inline int whole_iterations_before(double available, double t_cp) {
  if (!(available > 0.0)) return 0;
  auto k = static_cast<std::int64_t>(std::floor(available / t_cp));
  while (k > 0 && static_cast<double>(k) * t_cp >= available) --k;
  while (static_cast<double>(k + 1) * t_cp < available) ++k;
  return static_cast<int>(std::min<std::int64_t>(k, std::numeric_limits<int>::max()));
}

// ---------------------------------------------------------------------------
// Discrete-event queue

enum class EventKind : int { TxDone = 0, IterDone = 1, TxStart = 2, Barrier = 3 };

struct SimEvent {
  double time = 0.0;
  DeviceId device = 0;
  EventKind kind = EventKind::IterDone;
  std::int64_t payload = 0;
};

// Min-time queue; ties by kind priority, then device id, then insertion order.
class EventQueue {
 public:
  void push(const SimEvent& e) { heap_.push(Entry{e, seq_++}); }

  // std::nullopt signals the simulation is complete.
  std::optional<SimEvent> pop() {
    if (heap_.empty()) return std::nullopt;
    SimEvent e = heap_.top().event;
    heap_.pop();
    return e;
  }

  bool empty() const noexcept { return heap_.empty(); }
  std::size_t size() const noexcept { return heap_.size(); }

  static bool before(const SimEvent& a, std::uint64_t seq_a, const SimEvent& b, std::uint64_t seq_b) {
    if (a.time != b.time) return a.time < b.time;
    if (a.kind != b.kind) return static_cast<int>(a.kind) < static_cast<int>(b.kind);
    if (a.device != b.device) return a.device < b.device;
    return seq_a < seq_b;
  }

 private:
  struct Entry {
    SimEvent event;
    std::uint64_t seq;
  };
  struct Later {
    bool operator()(const Entry& x, const Entry& y) const { return before(y.event, y.seq, x.event, x.seq); }
  };
  std::priority_queue<Entry, std::vector<Entry>, Later> heap_;
  std::uint64_t seq_ = 0;
};

// ---------------------------------------------------------------------------
// One synchronous overlapped round, run through the event queue.

struct SyncRoundDevice {
  DeviceId id = 0;
  double t_cp = 1.0;
  double t_comm = 0.0;
  int classical_iters = 0;  // K - S_prev
  int overlap_cap = 0;      // remaining room under the staleness ceiling
};

struct SyncRoundOutcome {
  double barrier = 0.0;
  std::vector<PhaseTimings> timings;  // parallel to the input
};

inline SyncRoundOutcome simulate_sync_round(std::span<const SyncRoundDevice> devices) {
  if (devices.empty()) throw ProtocolError("simulate_sync_round: empty selection");
  EventQueue q;
  std::vector<int> done_classical(devices.size(), 0);
  std::vector<int> overlap(devices.size(), 0);
  std::vector<double> upload_at(devices.size(), 0.0);
  std::size_t pending_tx = devices.size();
  std::optional<double> barrier;

  // Device index travels in payload; device id is kept for tie-breaking.
  auto index_event = [&](double t, std::size_t i, EventKind k) {
    q.push(SimEvent{t, devices[i].id, k, static_cast<std::int64_t>(i)});
  };
  for (std::size_t i = 0; i < devices.size(); ++i) {
    if (devices[i].classical_iters > 0)
      index_event(devices[i].t_cp, i, EventKind::IterDone);
    else
      index_event(0.0, i, EventKind::TxStart);
  }

  while (auto ev = q.pop()) {
    const auto i = static_cast<std::size_t>(ev->payload);
    const SyncRoundDevice& d = devices[i];
    switch (ev->kind) {
      case EventKind::IterDone: {
        if (done_classical[i] < d.classical_iters) {
          ++done_classical[i];
          if (done_classical[i] == d.classical_iters) {
            index_event(ev->time, i, EventKind::TxStart);
          } else {
            index_event(static_cast<double>(done_classical[i] + 1) * d.t_cp, i, EventKind::IterDone);
          }
          break;
        }
        if (barrier && ev->time >= *barrier) break;  // unfinished when the round closed
        ++overlap[i];
        if (overlap[i] < d.overlap_cap)
          index_event(upload_at[i] + static_cast<double>(overlap[i] + 1) * d.t_cp, i, EventKind::IterDone);
        break;
      }
      case EventKind::TxStart: {
        upload_at[i] = static_cast<double>(d.classical_iters) * d.t_cp;
        index_event(upload_at[i] + d.t_comm, i, EventKind::TxDone);
        if (d.overlap_cap > 0) index_event(upload_at[i] + d.t_cp, i, EventKind::IterDone);
        break;
      }
      case EventKind::TxDone: {
        if (--pending_tx == 0) {
          barrier = ev->time;
          q.push(SimEvent{ev->time, -1, EventKind::Barrier, -1});
        }
        break;
      }
      case EventKind::Barrier: {
        // Drain: nothing after the barrier belongs to this round.
        while (q.pop()) {
        }
        break;
      }
    }
  }

  SyncRoundOutcome out;
  out.barrier = *barrier;
  out.timings.resize(devices.size());
  for (std::size_t i = 0; i < devices.size(); ++i) {
    PhaseTimings& p = out.timings[i];
    p.t_classical = static_cast<double>(devices[i].classical_iters) * devices[i].t_cp;
    p.t_comm = devices[i].t_comm;
    p.t_wait = out.barrier - p.total();
    p.overlap_iters = overlap[i];
    p.idle = out.barrier - p.t_classical - static_cast<double>(overlap[i]) * devices[i].t_cp;
  }
  return out;
}

}  // namespace fedex

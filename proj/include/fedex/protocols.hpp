#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fedex/config.hpp"
#include "fedex/core.hpp"
#include "fedex/learning.hpp"
#include "fedex/rng.hpp"
#include "fedex/selection.hpp"
#include "fedex/timing.hpp"

namespace fedex {

struct GlobalState {
  ModelParams global_model;
  ModelParams initial_model;
  UpdateRecord last_global_update;  // m-bar of the latest round
  int round = 0;
  bool trigger_latched = false;
  double cumulative_time = 0.0;
};

struct RoundRecord {
  int round = 0;
  Protocol protocol = Protocol::fedavg;
  std::vector<DeviceId> selected;      // ascending
  std::vector<PhaseTimings> timings;   // parallel to `selected`
  double round_latency = 0.0;
  double virtual_time = 0.0;           // cumulative, after this round
  std::vector<int> staleness;          // S_n^r for every device
  std::vector<double> memory;          // bytes held by every device
  double accuracy = 0.0;
  double mean_loss = 0.0;
  double mean_cka = 0.0;
  bool trigger_latched = false;
  int collisions = 0;

  int max_staleness() const {
    int m = 0;
    for (DeviceId id : selected) m = std::max(m, staleness[static_cast<std::size_t>(id)]);
    return m;
  }
  double mean_staleness() const {
    if (selected.empty()) return 0.0;
    double s = 0.0;
    for (DeviceId id : selected) s += staleness[static_cast<std::size_t>(id)];
    return s / static_cast<double>(selected.size());
  }
  double max_memory() const {
    double m = 0.0;
    for (double b : memory) m = std::max(m, b);
    return m;
  }

  // Field-wise equality ignoring the protocol tag and the FedEx trigger flag.
  bool same_trajectory(const RoundRecord& o) const {
    auto same_timings = [&] {
      if (timings.size() != o.timings.size()) return false;
      for (std::size_t i = 0; i < timings.size(); ++i) {
        const auto& a = timings[i];
        const auto& b = o.timings[i];
        if (a.t_classical != b.t_classical || a.t_comm != b.t_comm || a.t_wait != b.t_wait ||
            a.overlap_iters != b.overlap_iters || a.idle != b.idle)
          return false;
      }
      return true;
    };
    return round == o.round && selected == o.selected && same_timings() && round_latency == o.round_latency &&
           virtual_time == o.virtual_time && staleness == o.staleness && memory == o.memory &&
           accuracy == o.accuracy && mean_loss == o.mean_loss && mean_cka == o.mean_cka &&
           collisions == o.collisions;
  }
};

// w_local + m_own - m_global
inline ModelParams update_correction(const ModelParams& w_local, const UpdateRecord& m_own,
                                     const UpdateRecord& m_global) {
  require_same_dim(w_local, m_own.delta, "update_correction");
  require_same_dim(w_local, m_global.delta, "update_correction");
  ModelParams out(w_local);
  for (std::size_t i = 0; i < out.dim(); ++i) out[i] += m_own.delta[i] - m_global.delta[i];
  return out;
}

struct TriggerResult {
  bool latched = false;
  double mean_cka = 0.0;
};

// Mean linear CKA between each device model and the global model on the probe.
inline double mean_feature_similarity(std::span<const FeatureMatrix> device_features,
                                      const FeatureMatrix& global_features) {
  if (device_features.empty()) return 0.0;
  double s = 0.0;
  for (const auto& f : device_features) s += linear_cka(f, global_features);
  return s / static_cast<double>(device_features.size());
}

inline TriggerResult trigger_check(const LearningTask& task, std::span<const ModelParams> device_models,
                                   const ModelParams& global_model, std::span<const LabeledSample> probe,
                                   double delta_cka, bool previously_latched) {
  const FeatureMatrix g = extract_features(task, global_model, probe);
  std::vector<FeatureMatrix> feats;
  feats.reserve(device_models.size());
  for (const auto& m : device_models) feats.push_back(extract_features(task, m, probe));
  TriggerResult r;
  r.mean_cka = mean_feature_similarity(feats, g);
  r.latched = previously_latched || r.mean_cka > delta_cka;
  return r;
}

// ---------------------------------------------------------------------------

enum class TraceKind { Sgd, Correction };

// Observer of every change to a device's local model. For Sgd the model moved
// by -delta, for Correction by +delta.
using TraceFn = std::function<void(DeviceId, TraceKind, const ModelParams& delta)>;

struct BuiltData {
  std::vector<Shard> shards;
  Dataset test_set;
  Dataset probe;
};

// Synthetic blobs (or the CSV named in the config), split non-i.i.d.
inline BuiltData build_data(const SimConfig& cfg) {
  RngStream data_rng(cfg.seed, "data");
  RngStream part_rng(cfg.seed, "partition");
  const int n = cfg.n_devices();
  Dataset train, test;
  if (!cfg.data_csv.empty()) {
    Dataset all = load_csv_dataset(cfg.data_csv);
    data_rng.shuffle(all);
    const auto n_test = static_cast<std::size_t>(std::llround(cfg.test_fraction * static_cast<double>(all.size())));
    if (n_test < 1 || n_test >= all.size()) throw ConfigError("data.csv: too few samples for a test split");
    test.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n_test));
    train.assign(all.begin() + static_cast<std::ptrdiff_t>(n_test), all.end());
  } else {
    const BlobSpec spec{cfg.task.num_classes, cfg.task.input_dim, cfg.separation};
    const BlobCentres centres = make_blob_centres(spec, data_rng);
    const std::size_t n_train = static_cast<std::size_t>(n) * static_cast<std::size_t>(cfg.samples_per_device);
    const auto n_test = static_cast<std::size_t>(
        std::llround(static_cast<double>(n_train) * cfg.test_fraction / (1.0 - cfg.test_fraction)));
    train = sample_blobs(centres, n_train, data_rng);
    test = sample_blobs(centres, std::max<std::size_t>(n_test, 2), data_rng);
  }
  BuiltData out;
  out.shards = partition_noniid(train, n, cfg.lambda, part_rng);
  const std::size_t probe_n = std::min<std::size_t>(static_cast<std::size_t>(cfg.probe_size), test.size());
  if (probe_n < 2) throw ConfigError("data.probe_size: test split too small for a probe set");
  out.probe.assign(test.begin(), test.begin() + static_cast<std::ptrdiff_t>(probe_n));
  out.test_set = std::move(test);
  return out;
}

inline std::vector<DeviceProfile> build_profiles(const SimConfig& cfg) {
  std::vector<DeviceProfile> out;
  int id = 0;
  for (const auto& e : cfg.device_mix) {
    const ProfilePreset& p = cfg.preset(e.preset);
    for (int k = 0; k < e.count; ++k, ++id) {
      DeviceProfile d;
      d.id = id;
      d.preset = p.name;
      d.t_cp = p.t_cp;
      d.model_bytes = cfg.model_bytes;
      d.rate = cfg.model_bytes / p.t_comm_ref;
      d.mem_capacity = p.mem_mb * kBytesPerMb;
      d.shard_id = id;
      d.validate();
      out.push_back(d);
    }
  }
  return out;
}

// Everything one protocol run owns: devices, data, server state, streams.
class Federation {
 public:
  explicit Federation(const SimConfig& cfg) : Federation(cfg, build_profiles(cfg), build_data(cfg)) {}

  Federation(const SimConfig& cfg, std::vector<DeviceProfile> profiles, BuiltData data)
      : cfg_(cfg), task_(cfg.task), profiles_(std::move(profiles)), shards_(std::move(data.shards)),
        test_set_(std::move(data.test_set)), probe_(std::move(data.probe)),
        selection_rng_(cfg.seed, "selection"), estimate_rng_(cfg.seed, "estimate") {
    cfg_.validate();
    if (profiles_.empty()) throw ConfigError("federation: no devices");
    if (shards_.size() != profiles_.size())
      throw ConfigError("federation: " + std::to_string(shards_.size()) + " shards for " +
                        std::to_string(profiles_.size()) + " devices");
    if (test_set_.empty()) throw ConfigError("federation: empty test set");
    if (probe_.size() < 2) throw ConfigError("federation: probe needs at least two samples");
    for (std::size_t i = 0; i < profiles_.size(); ++i) {
      if (profiles_[i].id != static_cast<DeviceId>(i))
        throw ConfigError("federation: device ids must be 0..N-1 in order");
      profiles_[i].validate();
    }

    RngStream init_rng(cfg_.seed, "init");
    global_.initial_model = initial_model(task_, init_rng);
    global_.global_model = global_.initial_model;
    global_.last_global_update = UpdateRecord::zero(task_.param_dim());
    global_.trigger_latched = cfg_.protocol == Protocol::fedex && cfg_.delta_cka <= 0.0;

    const std::size_t dim = task_.param_dim();
    states_.resize(profiles_.size());
    minibatch_rngs_.reserve(profiles_.size());
    for (std::size_t i = 0; i < profiles_.size(); ++i) {
      DeviceState& s = states_[i];
      s.local_model = global_.initial_model;
      s.synced_global = global_.initial_model;
      s.last_upload = UpdateRecord::zero(dim);
      if (!shards_[i].samples.empty())
        s.last_losses = shard_losses(task_, global_.initial_model, shards_[i]);
      else
        warn("device " + std::to_string(i) + " has an empty shard and is never selected");
      minibatch_rngs_.emplace_back(cfg_.seed, "minibatch/" + std::to_string(i));
    }
    feature_cache_.resize(profiles_.size());

    if (cfg_.t_pref > 0.0) {
      t_pref_ = cfg_.t_pref;
    } else {
      std::vector<double> totals;
      for (const auto& p : profiles_) totals.push_back(cfg_.local_iters * p.t_cp + p.t_comm());
      std::sort(totals.begin(), totals.end());
      const std::size_t m = totals.size();
      t_pref_ = m % 2 ? totals[m / 2] : 0.5 * (totals[m / 2 - 1] + totals[m / 2]);
    }
  }

  const SimConfig& config() const noexcept { return cfg_; }
  const LearningTask& task() const noexcept { return task_; }
  GlobalState& global() noexcept { return global_; }
  const GlobalState& global() const noexcept { return global_; }
  std::size_t size() const noexcept { return profiles_.size(); }
  const std::vector<DeviceProfile>& profiles() const noexcept { return profiles_; }
  const std::vector<Shard>& shards() const noexcept { return shards_; }
  std::vector<DeviceState>& states() noexcept { return states_; }
  const std::vector<DeviceState>& states() const noexcept { return states_; }
  const Dataset& test_set() const noexcept { return test_set_; }
  const Dataset& probe() const noexcept { return probe_; }
  RngStream& selection_rng() noexcept { return selection_rng_; }
  RngStream& estimate_rng() noexcept { return estimate_rng_; }
  RngStream& minibatch_rng(DeviceId id) { return minibatch_rngs_.at(static_cast<std::size_t>(id)); }
  double t_pref() const noexcept { return t_pref_; }

  void set_trace(TraceFn fn) { trace_ = std::move(fn); }
  void trace(DeviceId id, TraceKind k, const ModelParams& delta) const {
    if (trace_) trace_(id, k, delta);
  }

  void mark_dirty(DeviceId id) { feature_cache_.at(static_cast<std::size_t>(id)).reset(); }

  // Mean CKA of all device models against the current global model.
  double mean_cka() {
    const FeatureMatrix g = extract_features(task_, global_.global_model, probe_);
    double s = 0.0;
    for (std::size_t i = 0; i < states_.size(); ++i) {
      auto& slot = feature_cache_[i];
      if (!slot) slot = extract_features(task_, states_[i].local_model, probe_);
      s += linear_cka(*slot, g);
    }
    return s / static_cast<double>(states_.size());
  }

  // Devices with data that have not been dropped.
  std::vector<DeviceId> eligible() const {
    std::vector<DeviceId> ids;
    for (std::size_t i = 0; i < states_.size(); ++i) {
      if (states_[i].failed) continue;
      if (shards_[i].samples.empty()) continue;
      ids.push_back(static_cast<DeviceId>(i));
    }
    return ids;
  }

 private:
  SimConfig cfg_;
  LearningTask task_;
  std::vector<DeviceProfile> profiles_;
  std::vector<Shard> shards_;
  Dataset test_set_;
  Dataset probe_;
  std::vector<DeviceState> states_;
  GlobalState global_;
  RngStream selection_rng_;
  RngStream estimate_rng_;
  std::vector<RngStream> minibatch_rngs_;
  std::vector<std::optional<FeatureMatrix>> feature_cache_;
  double t_pref_ = 1.0;
  TraceFn trace_;
};

// ---------------------------------------------------------------------------
// Synchronous rounds (FedAvg, Oort, DGAplus, DGAplus-Oort, FedEx)

enum class SelectionRule { uniform_random, oort, fedex };

namespace detail {

inline double estimate_factor(Federation& fed) {
  const double sigma = fed.config().estimate_noise;
  if (sigma <= 0.0) return 1.0;
  return std::exp(sigma * fed.estimate_rng().normal());
}

inline std::vector<DeviceId> select_participants(Federation& fed, SelectionRule rule, int round) {
  const SimConfig& cfg = fed.config();
  std::vector<DeviceId> pool = fed.eligible();
  if (pool.empty()) throw ProtocolError("round " + std::to_string(round) + ": no eligible devices");
  const auto p = static_cast<std::size_t>(cfg.participants);

  if (rule == SelectionRule::uniform_random) {
    if (pool.size() <= p) return pool;
    // Partial Fisher-Yates on the selection stream.
    for (std::size_t i = 0; i < p; ++i) {
      const auto j = i + static_cast<std::size_t>(fed.selection_rng().uniform_index(pool.size() - i));
      std::swap(pool[i], pool[j]);
    }
    pool.resize(p);
    std::sort(pool.begin(), pool.end());
    return pool;
  }

  std::vector<UtilityRecord> records;
  records.reserve(pool.size());
  for (DeviceId id : pool) {
    const auto& prof = fed.profiles()[static_cast<std::size_t>(id)];
    const auto& st = fed.states()[static_cast<std::size_t>(id)];
    DeviceProfile est = prof;
    est.t_cp *= estimate_factor(fed);
    est.rate /= estimate_factor(fed);
    UtilityRecord r;
    if (rule == SelectionRule::oort) {
      const double t_total = cfg.local_iters * est.t_cp + est.t_comm();
      r.device = id;
      r.statistical = statistical_utility(st.last_losses);
      r.latency_factor = oort_latency_factor(t_total, fed.t_pref(), cfg.alpha);
      r.combined = r.statistical * r.latency_factor;
    } else {
      r = fedex_utility(st.last_losses, est, cfg.local_iters, std::min(st.pending_iterations(), cfg.local_iters),
                        cfg.alpha);
    }
    r.boosted = temporal_uncertainty_boost(r.combined, st.overlooked_rounds, round, cfg.c_boost);
    r.overlooked_boosted = st.overlooked_rounds > 0 && cfg.c_boost > 0.0;
    records.push_back(r);
  }
  return rank_and_select(records, cfg.participants);
}

// Fold `upd` into the pending list, keeping each stored copy at <= K iterations.
inline void append_pending(std::vector<UpdateRecord>& pending, const LearningTask& task, const ModelParams& base,
                           const Shard& shard, int iters, double eta, int batch, RngStream& rng, int round,
                           int local_iters, ModelParams& model_out, std::vector<double>& losses,
                           const std::function<void(const ModelParams&)>& on_step) {
  ModelParams cur = base;
  int left = iters;
  while (left > 0) {
    if (pending.empty() || pending.back().iterations >= local_iters)
      pending.push_back(UpdateRecord::zero(base.dim(), round));
    UpdateRecord& tail = pending.back();
    const int chunk = std::min(left, local_iters - tail.iterations);
    LocalSgdResult step = local_sgd(task, cur, shard, chunk, eta, batch, rng, round);
    on_step(step.update.delta);
    axpy_inplace(1.0, step.update.delta, tail.delta);
    tail.iterations += chunk;
    tail.round = round;
    losses.insert(losses.end(), step.per_sample_losses.begin(), step.per_sample_losses.end());
    cur = std::move(step.model);
    left -= chunk;
  }
  model_out = std::move(cur);
}

}  // namespace detail

// One server round. `overlap` enables continuous computing under the ceiling U.
inline RoundRecord run_sync_round(Federation& fed, Protocol tag, SelectionRule rule, bool overlap) {
  const SimConfig& cfg = fed.config();
  GlobalState& g = fed.global();
  const int r = ++g.round;
  const int K = cfg.local_iters;

  RoundRecord rec;
  rec.round = r;
  rec.protocol = tag;
  rec.mean_cka = fed.mean_cka();
  if (tag == Protocol::fedex) {
    g.trigger_latched = g.trigger_latched || rec.mean_cka > cfg.delta_cka;
    if (!g.trigger_latched) {
      rule = SelectionRule::oort;
      overlap = false;
    }
  }
  rec.trigger_latched = g.trigger_latched;

  rec.selected = detail::select_participants(fed, rule, r);

  // Upload plan. Stored copies of >= K iterations are sent without new classical work.
  struct Plan {
    DeviceId id;
    int classical = 0;
    bool send_stored_block = false;
    int carry = 0;  // pending iterations kept after the upload
  };
  std::vector<Plan> plans;
  std::vector<SyncRoundDevice> timing_in;
  for (DeviceId id : rec.selected) {
    const auto& st = fed.states()[static_cast<std::size_t>(id)];
    const auto& prof = fed.profiles()[static_cast<std::size_t>(id)];
    Plan pl{id};
    const int pending = st.pending_iterations();
    if (pending >= K && !st.pending_updates.empty() && st.pending_updates.front().iterations >= K) {
      pl.send_stored_block = true;
      pl.carry = pending - st.pending_updates.front().iterations;
    } else {
      pl.classical = K - std::min(pending, K);
    }
    const int cap = overlap ? std::max(0, cfg.ceiling - pl.carry) : 0;
    plans.push_back(pl);
    timing_in.push_back({id, prof.t_cp, prof.t_comm(), pl.classical, cap});
  }

  const SyncRoundOutcome timing = simulate_sync_round(timing_in);
  rec.timings = timing.timings;
  rec.round_latency = timing.barrier;

  std::vector<ModelParams> uploads;
  uploads.reserve(plans.size());
  for (std::size_t k = 0; k < plans.size(); ++k) {
    const Plan& pl = plans[k];
    const auto idx = static_cast<std::size_t>(pl.id);
    DeviceState& st = fed.states()[idx];
    const Shard& shard = fed.shards()[idx];
    RngStream& rng = fed.minibatch_rng(pl.id);
    auto trace_sgd = [&](const ModelParams& d) { fed.trace(pl.id, TraceKind::Sgd, d); };

    // Correction onto the current global model: own last upload back in,
    // every global step since the last sync applied.
    const UpdateRecord since_sync{vec_axpy(-1.0, g.global_model, st.synced_global), r - 1, 0};
    const ModelParams corrected = update_correction(st.local_model, st.last_upload, since_sync);
    fed.trace(pl.id, TraceKind::Correction, vec_axpy(-1.0, since_sync.delta, st.last_upload.delta));

    std::vector<double> losses;
    UpdateRecord upload;
    ModelParams model = corrected;
    if (pl.send_stored_block) {
      upload = st.pending_updates.front();
      st.pending_updates.erase(st.pending_updates.begin());
    } else {
      LocalSgdResult cls = local_sgd(fed.task(), corrected, shard, pl.classical, cfg.eta, cfg.batch_size, rng, r);
      trace_sgd(cls.update.delta);
      losses = std::move(cls.per_sample_losses);
      model = std::move(cls.model);
      upload = cls.update;
      for (const auto& p : st.pending_updates) upload = merge_updates(p, upload);
      upload.iterations = K;
      st.pending_updates.clear();
    }
    upload.round = r;

    const int overlap_iters = rec.timings[k].overlap_iters;
    ModelParams after = model;
    detail::append_pending(st.pending_updates, fed.task(), model, shard, overlap_iters, cfg.eta, cfg.batch_size,
                           rng, r, K, after, losses, trace_sgd);

    st.local_model = std::move(after);
    st.synced_global = g.global_model;
    st.last_upload = upload;
    if (!losses.empty()) st.last_losses = std::move(losses);
    st.overlooked_rounds = 0;
    st.times_selected += 1;
    st.staleness_prev = st.pending_iterations();
    fed.mark_dirty(pl.id);
    uploads.push_back(std::move(upload.delta));
  }

  // Non-participants carry K, S and m forward.
  for (std::size_t i = 0, s = 0; i < fed.size(); ++i) {
    if (s < rec.selected.size() && rec.selected[s] == static_cast<DeviceId>(i)) {
      ++s;
      continue;
    }
    fed.states()[i].overlooked_rounds += 1;
  }

  const ModelParams mbar = vec_mean(uploads);
  axpy_inplace(-1.0, mbar, g.global_model);
  if (!g.global_model.all_finite()) throw NumericFault("round " + std::to_string(r) + ": non-finite global model");
  g.last_global_update = UpdateRecord{mbar, r, K};
  g.cumulative_time += rec.round_latency;
  rec.virtual_time = g.cumulative_time;

  rec.staleness.resize(fed.size());
  rec.memory.resize(fed.size());
  for (std::size_t i = 0; i < fed.size(); ++i) {
    DeviceState& st = fed.states()[i];
    rec.staleness[i] = st.pending_iterations();
    rec.memory[i] = memory_usage(rec.staleness[i], K, fed.profiles()[i].model_bytes);
    if (!st.overflowed && rec.memory[i] > fed.profiles()[i].mem_capacity) {
      st.overflowed = true;
      warn("device " + std::to_string(i) + " exceeded its memory capacity in round " + std::to_string(r));
    }
  }

  const EvalResult ev = evaluate(fed.task(), g.global_model, fed.test_set());
  rec.accuracy = ev.accuracy;
  rec.mean_loss = ev.mean_loss;
  return rec;
}

inline RoundRecord run_fedavg_round(Federation& fed) {
  return run_sync_round(fed, Protocol::fedavg, SelectionRule::uniform_random, false);
}
inline RoundRecord run_oort_round(Federation& fed) {
  return run_sync_round(fed, Protocol::oort, SelectionRule::oort, false);
}
inline RoundRecord run_dgaplus_round(Federation& fed) {
  return run_sync_round(fed, Protocol::dgaplus, SelectionRule::uniform_random, true);
}
inline RoundRecord run_dgaplus_oort_round(Federation& fed) {
  return run_sync_round(fed, Protocol::dgaplus_oort, SelectionRule::oort, true);
}
// Before the trigger latches this is an Oort round with no overlap.
inline RoundRecord run_fedex_round(Federation& fed) {
  return run_sync_round(fed, Protocol::fedex, SelectionRule::fedex, true);
}

// ---------------------------------------------------------------------------
// DGA: every device loops K-iteration blocks and sends each block as it
// finishes; the server averages block r once every live device delivered it.

struct DgaBudget {
  int max_rounds = 100;
  double max_seconds = 0.0;  // 0 = unlimited
};

using StopFn = std::function<bool(const RoundRecord&)>;

inline std::vector<RoundRecord> run_dga(Federation& fed, const DgaBudget& budget, const StopFn& stop = {}) {
  const SimConfig& cfg = fed.config();
  GlobalState& g = fed.global();
  const int K = cfg.local_iters;
  const std::size_t n = fed.size();

  struct Dev {
    long iters_done = 0;
    int block_iters = 0;
    UpdateRecord block;
    int blocks_done = 0;
    std::map<int, UpdateRecord> uncorrected;  // own blocks awaiting the averaged update
    std::vector<std::pair<int, ModelParams>> inbox;
    double uplink_free_at = 0.0;
    bool collided = false;
    std::vector<double> losses;
  };
  std::vector<Dev> dev(n);
  for (auto& d : dev) d.block = UpdateRecord::zero(fed.task().param_dim());

  std::map<int, std::map<DeviceId, ModelParams>> arrivals;
  int next_epoch = 1;
  int collisions_this_epoch = 0;
  double last_barrier = g.cumulative_time;
  bool barrier_queued = false;
  std::vector<RoundRecord> out;

  EventQueue q;
  const double t0 = g.cumulative_time;
  for (DeviceId id : fed.eligible())
    q.push({t0 + fed.profiles()[static_cast<std::size_t>(id)].t_cp, id, EventKind::IterDone, 0});

  auto alive = [&] { return fed.eligible(); };
  auto epoch_complete = [&](int e) {
    auto it = arrivals.find(e);
    const auto ids = alive();
    if (ids.empty() || it == arrivals.end()) return false;
    for (DeviceId id : ids)
      if (!it->second.count(id)) return false;
    return true;
  };

  bool done = false;
  while (!done) {
    auto ev = q.pop();
    if (!ev) break;
    const auto i = static_cast<std::size_t>(ev->device >= 0 ? ev->device : 0);
    switch (ev->kind) {
      case EventKind::IterDone: {
        DeviceState& st = fed.states()[i];
        if (st.failed) break;
        Dev& d = dev[i];
        LocalSgdResult step = local_sgd(fed.task(), st.local_model, fed.shards()[i], 1, cfg.eta, cfg.batch_size,
                                        fed.minibatch_rng(ev->device), next_epoch);
        fed.trace(ev->device, TraceKind::Sgd, step.update.delta);
        st.local_model = std::move(step.model);
        axpy_inplace(1.0, step.update.delta, d.block.delta);
        d.block.iterations += 1;
        d.losses.insert(d.losses.end(), step.per_sample_losses.begin(), step.per_sample_losses.end());
        ++d.iters_done;
        ++d.block_iters;

        // Averaged updates that arrived during this iteration replace the own stale block.
        for (auto& [epoch, mbar] : d.inbox) {
          auto own = d.uncorrected.find(epoch);
          const UpdateRecord global_upd{std::move(mbar), epoch, K};
          st.local_model = update_correction(st.local_model, own->second, global_upd);
          fed.trace(ev->device, TraceKind::Correction, vec_axpy(-1.0, global_upd.delta, own->second.delta));
          d.uncorrected.erase(own);
        }
        d.inbox.clear();
        fed.mark_dirty(ev->device);

        if (d.block_iters == K) {
          d.block.round = ++d.blocks_done;
          d.uncorrected.emplace(d.block.round, d.block);
          q.push({ev->time, ev->device, EventKind::TxStart, d.block.round});
          d.block = UpdateRecord::zero(fed.task().param_dim());
          d.block_iters = 0;
          st.last_losses = std::move(d.losses);
          d.losses.clear();
        }
        q.push({ev->time + fed.profiles()[i].t_cp, ev->device, EventKind::IterDone, 0});
        break;
      }
      case EventKind::TxStart: {
        if (fed.states()[i].failed) break;
        Dev& d = dev[i];
        double start = ev->time;
        if (d.uplink_free_at > ev->time) {
          ++collisions_this_epoch;
          if (!d.collided)
            warn("CollisionDetected: device " + std::to_string(ev->device) + " block " +
                 std::to_string(ev->payload) + " queued behind an upload in flight");
          d.collided = true;
          start = d.uplink_free_at;  // FIFO behind the send in flight
        }
        d.uplink_free_at = start + fed.profiles()[i].t_comm();
        q.push({d.uplink_free_at, ev->device, EventKind::TxDone, ev->payload});
        break;
      }
      case EventKind::TxDone: {
        if (fed.states()[i].failed) break;
        const int b = static_cast<int>(ev->payload);
        arrivals[b].emplace(ev->device, dev[i].uncorrected.at(b).delta);
        if (!barrier_queued && epoch_complete(next_epoch)) {
          q.push({ev->time, -1, EventKind::Barrier, next_epoch});
          barrier_queued = true;
        }
        break;
      }
      case EventKind::Barrier: {
        barrier_queued = false;
        const int e = static_cast<int>(ev->payload);
        const auto ids = alive();
        std::vector<ModelParams> ups;
        for (DeviceId id : ids) ups.push_back(arrivals[e].at(id));
        arrivals.erase(e);
        const ModelParams mbar = vec_mean(ups);
        axpy_inplace(-1.0, mbar, g.global_model);
        if (!g.global_model.all_finite()) throw NumericFault("dga epoch " + std::to_string(e) + ": non-finite model");
        g.last_global_update = UpdateRecord{mbar, e, K};
        g.round = e;
        g.cumulative_time = ev->time;

        RoundRecord rec;
        rec.round = e;
        rec.protocol = Protocol::dga;
        rec.selected = ids;
        rec.round_latency = ev->time - last_barrier;
        rec.virtual_time = ev->time;
        rec.collisions = collisions_this_epoch;
        rec.staleness.assign(n, 0);
        rec.memory.assign(n, 0.0);
        for (DeviceId id : ids) {
          const auto k = static_cast<std::size_t>(id);
          dev[k].inbox.emplace_back(e, mbar);
          // The iteration in flight also ran on the stale model.
          const long s = dev[k].iters_done + 1 - static_cast<long>(e) * K;
          rec.staleness[k] = static_cast<int>(std::max(0L, s));
          rec.memory[k] = memory_usage(rec.staleness[k], K, fed.profiles()[k].model_bytes);
          PhaseTimings pt;
          pt.t_classical = K * fed.profiles()[k].t_cp;
          pt.t_comm = fed.profiles()[k].t_comm();
          pt.overlap_iters = rec.staleness[k];
          rec.timings.push_back(pt);
          fed.states()[k].staleness_prev = rec.staleness[k];
          if (rec.memory[k] > fed.profiles()[k].mem_capacity) {
            fed.states()[k].failed = true;
            fed.states()[k].overflowed = true;
            warn("dga: device " + std::to_string(id) + " ran out of memory at epoch " + std::to_string(e));
          }
        }
        rec.mean_cka = fed.mean_cka();
        rec.trigger_latched = false;
        const EvalResult evr = evaluate(fed.task(), g.global_model, fed.test_set());
        rec.accuracy = evr.accuracy;
        rec.mean_loss = evr.mean_loss;
        out.push_back(rec);

        last_barrier = ev->time;
        collisions_this_epoch = 0;
        next_epoch = e + 1;

        if (static_cast<int>(out.size()) >= budget.max_rounds) done = true;
        if (budget.max_seconds > 0.0 && ev->time - t0 >= budget.max_seconds) done = true;
        if (stop && stop(rec)) done = true;
        if (alive().empty()) done = true;
        if (!done && epoch_complete(next_epoch)) {
          q.push({ev->time, -1, EventKind::Barrier, next_epoch});
          barrier_queued = true;
        }
        break;
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

struct Summary {
  Protocol protocol = Protocol::fedavg;
  bool reached = false;
  double ol_s = 0.0;  // virtual seconds to target (or to budget end)
  int nr = 0;
  double prt_s = 0.0;
  double max_accuracy = 0.0;
  std::optional<double> speedup_vs_reference;
};

struct ExperimentResult {
  std::vector<RoundRecord> rounds;
  Summary summary;
};

inline Summary summarize(Protocol protocol, std::span<const RoundRecord> rounds, double target) {
  Summary s;
  s.protocol = protocol;
  for (const auto& r : rounds) {
    s.max_accuracy = std::max(s.max_accuracy, r.accuracy);
    if (!s.reached && target > 0.0 && r.accuracy >= target) {
      s.reached = true;
      s.ol_s = r.virtual_time;
      s.nr = r.round;
    }
  }
  if (!s.reached && !rounds.empty()) {
    s.ol_s = rounds.back().virtual_time;
    s.nr = rounds.back().round;
  }
  s.prt_s = s.nr > 0 ? s.ol_s / s.nr : 0.0;
  return s;
}

inline ExperimentResult run_experiment(Federation& fed) {
  const SimConfig& cfg = fed.config();
  ExperimentResult res;
  const double max_seconds = cfg.max_hours * 3600.0;
  auto reached = [&](const RoundRecord& r) { return cfg.target_accuracy > 0.0 && r.accuracy >= cfg.target_accuracy; };

  if (cfg.protocol == Protocol::dga) {
    res.rounds = run_dga(fed, {cfg.max_rounds, max_seconds}, reached);
  } else {
    while (static_cast<int>(res.rounds.size()) < cfg.max_rounds) {
      RoundRecord rec;
      switch (cfg.protocol) {
        case Protocol::fedavg: rec = run_fedavg_round(fed); break;
        case Protocol::oort: rec = run_oort_round(fed); break;
        case Protocol::dgaplus: rec = run_dgaplus_round(fed); break;
        case Protocol::dgaplus_oort: rec = run_dgaplus_oort_round(fed); break;
        case Protocol::fedex: rec = run_fedex_round(fed); break;
        case Protocol::dga: break;
      }
      res.rounds.push_back(rec);
      if (reached(rec)) break;
      if (max_seconds > 0.0 && rec.virtual_time >= max_seconds) break;
    }
  }
  res.summary = summarize(cfg.protocol, res.rounds, cfg.target_accuracy);
  return res;
}

inline ExperimentResult run_experiment(const SimConfig& cfg) {
  Federation fed(cfg);
  return run_experiment(fed);
}

}  // namespace fedex

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <iostream>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace fedex {

// Error taxonomy. The CLI maps ConfigError to exit code 1 and the others to 2.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ProtocolError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NumericFault : std::runtime_error {
  using std::runtime_error::runtime_error;
};

using DeviceId = int;

// Non-fatal diagnostics go through a replaceable sink (stderr by default).
using WarningHandler = std::function<void(std::string_view)>;

inline WarningHandler& warning_handler() {
  static WarningHandler handler = [](std::string_view msg) { std::cerr << "warning: " << msg << '\n'; };
  return handler;
}

inline void warn(std::string_view msg) {
  if (warning_handler()) warning_handler()(msg);
}

// Flat parameter vector. Dimension is fixed at construction.
class ModelParams {
 public:
  ModelParams() = default;
  explicit ModelParams(std::size_t dim, double fill = 0.0) : values_(dim, fill) {}
  explicit ModelParams(std::vector<double> values) : values_(std::move(values)) {}
  ModelParams(std::initializer_list<double> values) : values_(values) {}

  std::size_t dim() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  std::span<double> span() noexcept { return values_; }
  std::span<const double> span() const noexcept { return values_; }
  const std::vector<double>& values() const noexcept { return values_; }

  auto begin() noexcept { return values_.begin(); }
  auto end() noexcept { return values_.end(); }
  auto begin() const noexcept { return values_.begin(); }
  auto end() const noexcept { return values_.end(); }

  bool all_finite() const noexcept {
    for (double v : values_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  friend bool operator==(const ModelParams&, const ModelParams&) = default;

 private:
  std::vector<double> values_;
};

inline void require_same_dim(const ModelParams& a, const ModelParams& b, std::string_view where) {
  if (a.dim() != b.dim()) {
    throw ConfigError(std::string(where) + ": dimension mismatch (" + std::to_string(a.dim()) +
                      " vs " + std::to_string(b.dim()) + ")");
  }
}

// a*x + y
inline ModelParams vec_axpy(double a, const ModelParams& x, const ModelParams& y) {
  require_same_dim(x, y, "vec_axpy");
  ModelParams out(y);
  for (std::size_t i = 0; i < out.dim(); ++i) out[i] += a * x[i];
  return out;
}

// In-place y += a*x.
inline void axpy_inplace(double a, const ModelParams& x, ModelParams& y) {
  require_same_dim(x, y, "axpy_inplace");
  for (std::size_t i = 0; i < y.dim(); ++i) y[i] += a * x[i];
}

inline double squared_norm(const ModelParams& x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return s;
}

// Elementwise mean; summation runs in list order, callers pass ascending device id.
inline ModelParams vec_mean(std::span<const ModelParams> vs) {
  if (vs.empty()) throw ProtocolError("vec_mean: no participants uploaded");
  ModelParams out(vs.front().dim());
  for (const auto& v : vs) {
    require_same_dim(out, v, "vec_mean");
    for (std::size_t i = 0; i < out.dim(); ++i) out[i] += v[i];
  }
  const double inv = 1.0 / static_cast<double>(vs.size());
  for (double& v : out) v *= inv;
  return out;
}

// Accumulated scaled gradient: delta = eta * sum_k g_k over `iterations` steps.
struct UpdateRecord {
  ModelParams delta;
  int round = 0;
  int iterations = 0;

  static UpdateRecord zero(std::size_t dim, int round = 0) { return {ModelParams(dim), round, 0}; }
};

// Concatenate b after a: the combined displacement of two consecutive phases.
inline UpdateRecord merge_updates(const UpdateRecord& a, const UpdateRecord& b) {
  UpdateRecord out{vec_axpy(1.0, a.delta, b.delta), b.round, a.iterations + b.iterations};
  return out;
}

struct DeviceProfile {
  DeviceId id = 0;
  std::string preset;     // display name only
  double t_cp = 1.0;      // seconds per local iteration
  double rate = 1.0;      // uplink bytes / second
  double model_bytes = 1.0;
  double mem_capacity = 1.0;  // bytes
  int shard_id = 0;

  double t_comm() const noexcept { return model_bytes / rate; }

  void validate() const {
    if (!(t_cp > 0) || !(rate > 0) || !(model_bytes > 0) || !(mem_capacity > 0))
      throw ConfigError("device " + std::to_string(id) +
                        ": t_cp, rate, model_bytes and mem_capacity must be positive");
    const double tc = t_comm();
    if (!std::isfinite(tc) || !(tc > 0))
      throw ConfigError("device " + std::to_string(id) + ": derived t_comm must be finite and positive");
  }
};

// Per-device protocol state.
//
// For every device the invariant
//     local_model == synced_global - last_upload.delta - sum(pending_updates)
// holds between rounds: synced_global is the global model the device last
// corrected onto, last_upload is what it sent, pending_updates is overlap work
// not yet uploaded.
struct DeviceState {
  ModelParams local_model;
  ModelParams synced_global;
  UpdateRecord last_upload;
  std::vector<UpdateRecord> pending_updates;
  int staleness_prev = 0;
  int overlooked_rounds = 0;
  int times_selected = 0;
  std::vector<double> last_losses;
  bool overflowed = false;
  bool failed = false;

  int pending_iterations() const noexcept {
    int s = 0;
    for (const auto& u : pending_updates) s += u.iterations;
    return s;
  }
};

}  // namespace fedex

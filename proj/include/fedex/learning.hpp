#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "fedex/core.hpp"
#include "fedex/rng.hpp"

namespace fedex {

struct LabeledSample {
  std::vector<double> features;
  int label = 0;

  friend bool operator==(const LabeledSample&, const LabeledSample&) = default;
};

using Dataset = std::vector<LabeledSample>;

struct Shard {
  std::vector<LabeledSample> samples;
  DeviceId owner = 0;

  std::size_t size() const noexcept { return samples.size(); }
};

enum class TaskKind { logistic, mlp, quadratic };

inline std::string to_string(TaskKind k) {
  switch (k) {
    case TaskKind::logistic: return "logistic";
    case TaskKind::mlp: return "mlp";
    case TaskKind::quadratic: return "quadratic";
  }
  return "?";
}

inline TaskKind parse_task_kind(std::string_view s) {
  if (s == "logistic" || s == "multinomial-logistic") return TaskKind::logistic;
  if (s == "mlp" || s == "one-hidden-layer-mlp") return TaskKind::mlp;
  if (s == "quadratic") return TaskKind::quadratic;
  throw ConfigError("task.kind: unknown task '" + std::string(s) +
                    "' (valid: logistic, mlp, quadratic)");
}

// Parameter layouts (row-major):
//   logistic  : W[C x d], b[C]
//   mlp       : W1[H x d], b1[H], W2[C x H], b2[C]   (tanh hidden layer)
//   quadratic : C centroids of dimension d; logit_c = -|w_c - x|^2 / 2
struct LearningTask {
  TaskKind kind = TaskKind::logistic;
  int input_dim = 20;
  int num_classes = 10;
  int hidden_dim = 16;
  double l2_reg = 0.0;

  std::size_t param_dim() const noexcept {
    const auto d = static_cast<std::size_t>(input_dim);
    const auto c = static_cast<std::size_t>(num_classes);
    const auto h = static_cast<std::size_t>(hidden_dim);
    switch (kind) {
      case TaskKind::logistic: return c * d + c;
      case TaskKind::mlp: return h * d + h + c * h + c;
      case TaskKind::quadratic: return c * d;
    }
    return 0;
  }

  void validate() const {
    if (input_dim < 1) throw ConfigError("task.input_dim must be >= 1");
    if (num_classes < 1) throw ConfigError("task.num_classes must be >= 1");
    if (kind == TaskKind::mlp && hidden_dim < 1) throw ConfigError("task.hidden_dim must be >= 1");
    if (!(l2_reg >= 0.0)) throw ConfigError("task.l2 must be >= 0");
  }
};

// Zero weights except the MLP, whose hidden layer needs symmetry breaking.
inline ModelParams initial_model(const LearningTask& task, RngStream& rng) {
  ModelParams w(task.param_dim());
  if (task.kind == TaskKind::mlp) {
    const std::size_t h = static_cast<std::size_t>(task.hidden_dim);
    const std::size_t d = static_cast<std::size_t>(task.input_dim);
    const std::size_t c = static_cast<std::size_t>(task.num_classes);
    const double s1 = 1.0 / std::sqrt(static_cast<double>(d));
    const double s2 = 1.0 / std::sqrt(static_cast<double>(h));
    for (std::size_t i = 0; i < h * d; ++i) w[i] = rng.normal(0.0, s1);
    const std::size_t w2 = h * d + h;
    for (std::size_t i = 0; i < c * h; ++i) w[w2 + i] = rng.normal(0.0, s2);
  }
  return w;
}

namespace detail {

inline void check_sample(const LearningTask& task, const LabeledSample& s) {
  if (static_cast<int>(s.features.size()) != task.input_dim)
    throw ConfigError("sample feature dimension " + std::to_string(s.features.size()) +
                      " does not match task.input_dim " + std::to_string(task.input_dim));
  if (s.label < 0 || s.label >= task.num_classes)
    throw ConfigError("sample label " + std::to_string(s.label) + " outside [0, " +
                      std::to_string(task.num_classes) + ")");
}

// Writes logits into `out` (size C); fills `hidden` for the MLP.
inline void forward(const LearningTask& task, std::span<const double> w, std::span<const double> x,
                    std::span<double> out, std::span<double> hidden) {
  const std::size_t d = static_cast<std::size_t>(task.input_dim);
  const std::size_t c = static_cast<std::size_t>(task.num_classes);
  switch (task.kind) {
    case TaskKind::logistic: {
      const double* b = w.data() + c * d;
      for (std::size_t k = 0; k < c; ++k) {
        double z = b[k];
        const double* row = w.data() + k * d;
        for (std::size_t j = 0; j < d; ++j) z += row[j] * x[j];
        out[k] = z;
      }
      break;
    }
    case TaskKind::mlp: {
      const std::size_t h = static_cast<std::size_t>(task.hidden_dim);
      const double* b1 = w.data() + h * d;
      const double* w2 = b1 + h;
      const double* b2 = w2 + c * h;
      for (std::size_t u = 0; u < h; ++u) {
        double a = b1[u];
        const double* row = w.data() + u * d;
        for (std::size_t j = 0; j < d; ++j) a += row[j] * x[j];
        hidden[u] = std::tanh(a);
      }
      for (std::size_t k = 0; k < c; ++k) {
        double z = b2[k];
        const double* row = w2 + k * h;
        for (std::size_t u = 0; u < h; ++u) z += row[u] * hidden[u];
        out[k] = z;
      }
      break;
    }
    case TaskKind::quadratic: {
      for (std::size_t k = 0; k < c; ++k) {
        const double* row = w.data() + k * d;
        double s = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
          const double diff = row[j] - x[j];
          s += diff * diff;
        }
        out[k] = -0.5 * s;
      }
      break;
    }
  }
}

// Softmax cross-entropy; overwrites logits with probabilities.
inline double softmax_xent(std::span<double> logits, int label) {
  const double zy = logits[static_cast<std::size_t>(label)];
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double& z : logits) {
    z = std::exp(z - mx);
    sum += z;
  }
  for (double& z : logits) z /= sum;
  return mx + std::log(sum) - zy;
}

}  // namespace detail

struct LossGrad {
  double loss = 0.0;
  ModelParams grad;
  std::vector<double> per_sample_losses;
};

// Mean loss + l2/2 |w|^2 and its exact gradient over batch[indices[i]].
inline LossGrad loss_and_grad(const LearningTask& task, const ModelParams& model,
                              std::span<const LabeledSample> samples,
                              std::span<const std::size_t> indices) {
  if (indices.empty()) throw ConfigError("loss_and_grad: empty batch");
  if (model.dim() != task.param_dim())
    throw ConfigError("loss_and_grad: model dimension does not match task");

  const std::size_t d = static_cast<std::size_t>(task.input_dim);
  const std::size_t c = static_cast<std::size_t>(task.num_classes);
  const std::size_t h = static_cast<std::size_t>(task.hidden_dim);
  const double inv_b = 1.0 / static_cast<double>(indices.size());

  LossGrad out{0.0, ModelParams(model.dim()), {}};
  out.per_sample_losses.reserve(indices.size());
  std::vector<double> z(c), hid(task.kind == TaskKind::mlp ? h : 0), dh(hid.size());
  auto w = model.span();
  auto g = out.grad.span();

  double total = 0.0;
  for (std::size_t idx : indices) {
    const LabeledSample& s = samples[idx];
    detail::check_sample(task, s);
    const auto y = static_cast<std::size_t>(s.label);
    detail::forward(task, w, s.features, z, hid);

    double li = 0.0;
    if (task.kind == TaskKind::quadratic) {
      const double* row = w.data() + y * d;
      double* grow = g.data() + y * d;
      for (std::size_t j = 0; j < d; ++j) {
        const double diff = row[j] - s.features[j];
        li += 0.5 * diff * diff;
        grow[j] += diff * inv_b;
      }
    } else {
      li = detail::softmax_xent(z, s.label);
      z[y] -= 1.0;  // dL/dz = p - e_y
      if (task.kind == TaskKind::logistic) {
        double* gb = g.data() + c * d;
        for (std::size_t k = 0; k < c; ++k) {
          const double dz = z[k] * inv_b;
          double* grow = g.data() + k * d;
          for (std::size_t j = 0; j < d; ++j) grow[j] += dz * s.features[j];
          gb[k] += dz;
        }
      } else {
        const double* w2 = w.data() + h * d + h;
        double* gb1 = g.data() + h * d;
        double* gw2 = gb1 + h;
        double* gb2 = gw2 + c * h;
        std::fill(dh.begin(), dh.end(), 0.0);
        for (std::size_t k = 0; k < c; ++k) {
          const double dz = z[k] * inv_b;
          for (std::size_t u = 0; u < h; ++u) {
            gw2[k * h + u] += dz * hid[u];
            dh[u] += w2[k * h + u] * dz;
          }
          gb2[k] += dz;
        }
        for (std::size_t u = 0; u < h; ++u) {
          const double da = dh[u] * (1.0 - hid[u] * hid[u]);
          double* grow = g.data() + u * d;
          for (std::size_t j = 0; j < d; ++j) grow[j] += da * s.features[j];
          gb1[u] += da;
        }
      }
    }
    out.per_sample_losses.push_back(li);
    total += li;
  }

  out.loss = total * inv_b;
  if (task.l2_reg > 0.0) {
    out.loss += 0.5 * task.l2_reg * squared_norm(model);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += task.l2_reg * w[i];
  }
  if (!std::isfinite(out.loss) || !out.grad.all_finite())
    throw NumericFault("loss_and_grad: non-finite loss or gradient");
  return out;
}

inline LossGrad loss_and_grad(const LearningTask& task, const ModelParams& model,
                              std::span<const LabeledSample> batch) {
  std::vector<std::size_t> idx(batch.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return loss_and_grad(task, model, batch, idx);
}

struct LocalSgdResult {
  ModelParams model;
  UpdateRecord update;
  std::vector<double> per_sample_losses;  // losses of every sample drawn, in draw order
};

// `iters` minibatch steps. batch_size <= 0 selects the full shard (deterministic
// gradient); otherwise samples are drawn uniformly with replacement.
//
// Each step's iterate is formed as model - delta so that the returned model is
// exactly model - update.delta.
inline LocalSgdResult local_sgd(const LearningTask& task, const ModelParams& model, const Shard& shard,
                                int iters, double eta, int batch_size, RngStream& rng, int round = 0) {
  if (iters < 0) throw ConfigError("local_sgd: iters must be >= 0");
  if (!(eta > 0)) throw ConfigError("local_sgd: eta must be > 0");
  LocalSgdResult out{model, UpdateRecord::zero(model.dim(), round), {}};
  if (iters == 0) return out;
  if (shard.samples.empty()) throw ConfigError("local_sgd: empty shard");

  const bool full = batch_size <= 0;
  const std::size_t bsz = full ? shard.size() : static_cast<std::size_t>(batch_size);
  std::vector<std::size_t> idx(bsz);
  if (full) std::iota(idx.begin(), idx.end(), std::size_t{0});

  ModelParams& delta = out.update.delta;
  ModelParams point(model);
  for (int k = 0; k < iters; ++k) {
    if (!full)
      for (auto& i : idx) i = static_cast<std::size_t>(rng.uniform_index(shard.size()));
    LossGrad lg = loss_and_grad(task, point, shard.samples, idx);
    axpy_inplace(eta, lg.grad, delta);
    for (std::size_t i = 0; i < point.dim(); ++i) point[i] = model[i] - delta[i];
    out.per_sample_losses.insert(out.per_sample_losses.end(), lg.per_sample_losses.begin(),
                                 lg.per_sample_losses.end());
  }
  out.update.iterations = iters;
  out.model = std::move(point);
  if (!out.model.all_finite()) throw NumericFault("local_sgd: non-finite model");
  return out;
}

// Per-sample losses of the whole shard (regularizer excluded).
inline std::vector<double> shard_losses(const LearningTask& task, const ModelParams& model,
                                        const Shard& shard) {
  return loss_and_grad(task, model, shard.samples).per_sample_losses;
}

// |B| * sqrt(mean(loss^2))
inline double statistical_utility(std::span<const double> per_sample_losses) {
  if (per_sample_losses.empty())
    throw ProtocolError("statistical_utility: device has no loss record");
  double sq = 0.0;
  for (double l : per_sample_losses) {
    if (l < 0.0) throw ProtocolError("statistical_utility: negative loss");
    sq += l * l;
  }
  const double n = static_cast<double>(per_sample_losses.size());
  return n * std::sqrt(sq / n);
}

struct FeatureMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;  // row-major

  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
};

// Pre-softmax outputs on the probe, one row per sample.
inline FeatureMatrix extract_features(const LearningTask& task, const ModelParams& model,
                                      std::span<const LabeledSample> probe) {
  const auto c = static_cast<std::size_t>(task.num_classes);
  FeatureMatrix f{probe.size(), c, std::vector<double>(probe.size() * c)};
  std::vector<double> hid(task.kind == TaskKind::mlp ? static_cast<std::size_t>(task.hidden_dim) : 0);
  for (std::size_t i = 0; i < probe.size(); ++i) {
    detail::check_sample(task, probe[i]);
    detail::forward(task, model.span(), probe[i].features,
                    std::span<double>(f.data.data() + i * c, c), hid);
  }
  return f;
}

namespace detail {

inline FeatureMatrix column_centered(const FeatureMatrix& m) {
  FeatureMatrix out = m;
  for (std::size_t c = 0; c < m.cols; ++c) {
    double mean = 0.0;
    for (std::size_t r = 0; r < m.rows; ++r) mean += m(r, c);
    mean /= static_cast<double>(m.rows);
    for (std::size_t r = 0; r < m.rows; ++r) out(r, c) -= mean;
  }
  return out;
}

// |A^T B|_F^2
inline double cross_gram_sq(const FeatureMatrix& a, const FeatureMatrix& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.cols; ++i)
    for (std::size_t j = 0; j < b.cols; ++j) {
      double dot = 0.0;
      for (std::size_t r = 0; r < a.rows; ++r) dot += a(r, i) * b(r, j);
      s += dot * dot;
    }
  return s;
}

inline double frob_sq(const FeatureMatrix& m) {
  double s = 0.0;
  for (double v : m.data) s += v * v;
  return s;
}

}  // namespace detail

// Linear CKA on column-centred features. A centred matrix whose energy is
// round-off relative to the raw features counts as all-zero and yields 0.
inline double linear_cka(const FeatureMatrix& x, const FeatureMatrix& y) {
  if (x.rows != y.rows) throw ConfigError("linear_cka: row-count mismatch");
  if (x.rows < 2) throw ConfigError("linear_cka: need at least two rows");
  const FeatureMatrix xc = detail::column_centered(x);
  const FeatureMatrix yc = detail::column_centered(y);
  constexpr double kZeroTol = 1e-24;
  if (detail::frob_sq(xc) <= kZeroTol * (1.0 + detail::frob_sq(x)) ||
      detail::frob_sq(yc) <= kZeroTol * (1.0 + detail::frob_sq(y)))
    return 0.0;
  const double xy = detail::cross_gram_sq(xc, yc);
  const double xx = std::sqrt(detail::cross_gram_sq(xc, xc));
  const double yy = std::sqrt(detail::cross_gram_sq(yc, yc));
  return std::clamp(xy / (xx * yy), 0.0, 1.0);
}

struct EvalResult {
  double accuracy = 0.0;
  double mean_loss = 0.0;
};

inline EvalResult evaluate(const LearningTask& task, const ModelParams& model,
                           std::span<const LabeledSample> test_set) {
  if (test_set.empty()) throw ConfigError("evaluate: empty test set");
  std::size_t correct = 0;
  double loss = 0.0;
  const auto c = static_cast<std::size_t>(task.num_classes);
  std::vector<double> z(c), hid(task.kind == TaskKind::mlp ? static_cast<std::size_t>(task.hidden_dim) : 0);
  for (const auto& s : test_set) {
    detail::check_sample(task, s);
    detail::forward(task, model.span(), s.features, z, hid);
    const auto pred = static_cast<int>(std::max_element(z.begin(), z.end()) - z.begin());
    if (pred == s.label) ++correct;
    if (task.kind == TaskKind::quadratic) {
      loss += -z[static_cast<std::size_t>(s.label)];
    } else {
      loss += detail::softmax_xent(z, s.label);
    }
  }
  const double n = static_cast<double>(test_set.size());
  return {static_cast<double>(correct) / n, loss / n};
}

// ---------------------------------------------------------------------------
// Data

struct BlobSpec {
  int num_classes = 10;
  int input_dim = 20;
  double separation = 1.0;  // std-dev of class centres; within-class noise is unit
};

struct BlobCentres {
  std::vector<std::vector<double>> centres;
};

inline BlobCentres make_blob_centres(const BlobSpec& spec, RngStream& rng) {
  BlobCentres out;
  out.centres.resize(static_cast<std::size_t>(spec.num_classes));
  for (auto& c : out.centres) {
    c.resize(static_cast<std::size_t>(spec.input_dim));
    for (double& v : c) v = rng.normal(0.0, spec.separation);
  }
  return out;
}

// `total` samples with class counts as equal as possible (low labels get the remainder).
inline Dataset sample_blobs(const BlobCentres& centres, std::size_t total, RngStream& rng) {
  const std::size_t c = centres.centres.size();
  Dataset out;
  out.reserve(total);
  for (std::size_t i = 0; i < total; ++i) {
    LabeledSample s;
    s.label = static_cast<int>(i % c);
    const auto& mu = centres.centres[i % c];
    s.features.resize(mu.size());
    for (std::size_t j = 0; j < mu.size(); ++j) s.features[j] = mu[j] + rng.normal();
    out.push_back(std::move(s));
  }
  rng.shuffle(out);
  return out;
}

// Label-skew split. Device i's dominant label is i mod C; it receives
// round(lambda * m_i) samples of that label and the rest uniformly from the
// remaining pool excluding its dominant label. lambda == 0 is a plain
// uniform random split.
inline std::vector<Shard> partition_noniid(const Dataset& dataset, int n_devices, double lambda,
                                           RngStream& rng) {
  if (n_devices < 1) throw ConfigError("partition_noniid: n_devices must be >= 1");
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("partition_noniid: lambda must lie in [0, 1]");
  const auto n = static_cast<std::size_t>(n_devices);
  if (dataset.size() < n)
    throw ConfigError("partition_noniid: " + std::to_string(dataset.size()) + " samples for " +
                      std::to_string(n) + " devices");

  int num_classes = 0;
  for (const auto& s : dataset) num_classes = std::max(num_classes, s.label + 1);
  const auto nc = static_cast<std::size_t>(num_classes);

  std::vector<std::size_t> shard_size(n, dataset.size() / n);
  for (std::size_t i = 0; i < dataset.size() % n; ++i) ++shard_size[i];

  std::vector<std::vector<std::size_t>> by_class(nc);
  for (std::size_t i = 0; i < dataset.size(); ++i)
    by_class[static_cast<std::size_t>(dataset[i].label)].push_back(i);
  for (auto& v : by_class) rng.shuffle(v);

  std::vector<std::vector<std::size_t>> assigned(n);
  std::vector<std::size_t> remainder_start(n, 0);

  if (lambda == 0.0) {
    std::vector<std::size_t> all(dataset.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    rng.shuffle(all);
    std::size_t pos = 0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < shard_size[i]; ++k) assigned[i].push_back(all[pos++]);
  } else {
    // Dominant-label quota, taken from the tail of each class list.
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t dom = i % nc;
      const auto quota = static_cast<std::size_t>(std::llround(lambda * static_cast<double>(shard_size[i])));
      if (by_class[dom].size() < quota)
        throw ConfigError("partition_noniid: class " + std::to_string(dom) + " has too few samples (need " +
                          std::to_string(quota) + " more, have " + std::to_string(by_class[dom].size()) + ")");
      for (std::size_t k = 0; k < quota; ++k) {
        assigned[i].push_back(by_class[dom].back());
        by_class[dom].pop_back();
      }
      remainder_start[i] = assigned[i].size();
    }

    auto label_of = [&](std::size_t idx) { return static_cast<std::size_t>(dataset[idx].label); };
    std::size_t pool_total = 0;
    for (const auto& v : by_class) pool_total += v.size();

    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t dom = i % nc;
      while (assigned[i].size() < shard_size[i]) {
        const std::size_t eligible = pool_total - by_class[dom].size();
        if (eligible > 0) {
          auto pick = static_cast<std::size_t>(rng.uniform_index(eligible));
          for (std::size_t c = 0; c < nc; ++c) {
            if (c == dom) continue;
            if (pick < by_class[c].size()) {
              assigned[i].push_back(by_class[c][pick]);
              by_class[c][pick] = by_class[c].back();
              by_class[c].pop_back();
              --pool_total;
              break;
            }
            pick -= by_class[c].size();
          }
          continue;
        }
        // Only dominant-label samples remain: trade one with an earlier device
        // whose remainder holds a different label and whose own dominant differs.
        bool swapped = false;
        for (std::size_t j = 0; j < n && !swapped; ++j) {
          if (j == i || j % nc == dom) continue;
          for (std::size_t k = remainder_start[j]; k < assigned[j].size(); ++k) {
            if (label_of(assigned[j][k]) == dom) continue;
            assigned[i].push_back(assigned[j][k]);
            assigned[j][k] = by_class[dom].back();
            by_class[dom].pop_back();
            --pool_total;
            swapped = true;
            break;
          }
        }
        if (!swapped)
          throw ConfigError("partition_noniid: cannot fill device " + std::to_string(i) +
                            " without exceeding its dominant-label fraction (class " +
                            std::to_string(dom) + ")");
      }
    }
  }

  std::vector<Shard> shards(n);
  for (std::size_t i = 0; i < n; ++i) {
    shards[i].owner = static_cast<DeviceId>(i);
    shards[i].samples.reserve(assigned[i].size());
    for (std::size_t idx : assigned[i]) shards[i].samples.push_back(dataset[idx]);
  }
  return shards;
}

// CSV with header `label,f0,f1,...`.
inline Dataset load_csv_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("data.csv: cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("data.csv: empty file '" + path + "'");
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(cell);
  }
  if (header.size() < 2 || header[0] != "label")
    throw ConfigError("data.csv: header must start with 'label,f0,...'");
  for (std::size_t j = 1; j < header.size(); ++j)
    if (header[j] != "f" + std::to_string(j - 1))
      throw ConfigError("data.csv: header column " + std::to_string(j) + " must be 'f" +
                        std::to_string(j - 1) + "'");

  Dataset out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    LabeledSample s;
    std::size_t col = 0;
    const char* p = line.data();
    const char* end = p + line.size();
    while (p <= end) {
      const char* comma = std::find(p, end, ',');
      if (col == 0) {
        auto [ptr, ec] = std::from_chars(p, comma, s.label);
        if (ec != std::errc() || ptr != comma || s.label < 0)
          throw ConfigError("data.csv: bad label on line " + std::to_string(lineno));
      } else {
        double v = 0.0;
        auto [ptr, ec] = std::from_chars(p, comma, v);
        if (ec != std::errc() || ptr != comma || !std::isfinite(v))
          throw ConfigError("data.csv: bad value on line " + std::to_string(lineno));
        s.features.push_back(v);
      }
      ++col;
      p = comma + 1;
    }
    if (col != header.size())
      throw ConfigError("data.csv: line " + std::to_string(lineno) + " has " + std::to_string(col) +
                        " columns, expected " + std::to_string(header.size()));
    out.push_back(std::move(s));
  }
  if (out.empty()) throw ConfigError("data.csv: no samples in '" + path + "'");
  return out;
}

}  // namespace fedex

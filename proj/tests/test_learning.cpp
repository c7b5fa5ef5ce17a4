#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>

#include "fedex/learning.hpp"
#include "oracles.hpp"

using namespace fedex;

namespace {

LearningTask quadratic(int d, int c = 1) {
  LearningTask t;
  t.kind = TaskKind::quadratic;
  t.input_dim = d;
  t.num_classes = c;
  return t;
}

Dataset labelled_range(int classes, int per_class) {
  Dataset ds;
  for (int c = 0; c < classes; ++c)
    for (int k = 0; k < per_class; ++k) ds.push_back({{static_cast<double>(c), static_cast<double>(k)}, c});
  return ds;
}

std::vector<LabeledSample> sorted_samples(std::vector<LabeledSample> v) {
  std::sort(v.begin(), v.end(), [](const LabeledSample& a, const LabeledSample& b) {
    if (a.label != b.label) return a.label < b.label;
    return a.features < b.features;
  });
  return v;
}

}  // namespace

TEST(LossAndGrad, QuadraticExample) {
  const LearningTask t = quadratic(2);
  const Dataset batch{{{0.0, 0.0}, 0}};
  const auto lg = loss_and_grad(t, ModelParams{3, 4}, batch);
  EXPECT_DOUBLE_EQ(lg.loss, 12.5);
  EXPECT_EQ(lg.grad, (ModelParams{3, 4}));
  ASSERT_EQ(lg.per_sample_losses.size(), 1u);
  EXPECT_DOUBLE_EQ(lg.per_sample_losses[0], 12.5);
}

TEST(LossAndGrad, LogisticZeroModelGivesLogC) {
  LearningTask t;
  t.num_classes = 7;
  t.input_dim = 4;
  RngStream rng(1, "b");
  const Dataset batch = oracle::random_batch(t, 12, rng);
  const auto lg = loss_and_grad(t, ModelParams(t.param_dim()), batch);
  for (double l : lg.per_sample_losses) EXPECT_NEAR(l, std::log(7.0), 1e-12);
}

TEST(LossAndGrad, RegularizerExcludedFromPerSample) {
  LearningTask t = quadratic(2);
  t.l2_reg = 0.5;
  const Dataset batch{{{0.0, 0.0}, 0}};
  const auto lg = loss_and_grad(t, ModelParams{3, 4}, batch);
  EXPECT_DOUBLE_EQ(lg.per_sample_losses[0], 12.5);
  EXPECT_DOUBLE_EQ(lg.loss, 12.5 + 0.25 * 25.0);
  EXPECT_EQ(lg.grad, (ModelParams{4.5, 6}));
}

TEST(LossAndGrad, EmptyBatchRejected) {
  const LearningTask t = quadratic(2);
  EXPECT_THROW(loss_and_grad(t, ModelParams{0, 0}, Dataset{}), ConfigError);
}

TEST(LossAndGrad, NonFiniteIsNumericFault) {
  const LearningTask t = quadratic(1);
  const Dataset batch{{{0.0}, 0}};
  EXPECT_THROW(loss_and_grad(t, ModelParams{1e200}, batch), NumericFault);
}

TEST(LossAndGrad, BadLabelRejected) {
  LearningTask t;
  t.input_dim = 2;
  t.num_classes = 2;
  const Dataset batch{{{0.0, 0.0}, 5}};
  EXPECT_THROW(loss_and_grad(t, ModelParams(t.param_dim()), batch), ConfigError);
}

class GradientCheck : public ::testing::TestWithParam<TaskKind> {};

TEST_P(GradientCheck, MatchesCentralDifferences) {
  LearningTask t;
  t.kind = GetParam();
  t.input_dim = 5;
  t.num_classes = 4;
  t.hidden_dim = 6;
  t.l2_reg = 0.01;
  RngStream rng(17, "fd");
  for (int probe = 0; probe < 20; ++probe) {
    const ModelParams w = oracle::random_model(t, rng);
    const Dataset batch = oracle::random_batch(t, 6, rng);
    const auto lg = loss_and_grad(t, w, batch);
    const ModelParams fd = oracle::finite_difference_grad(t, w, batch);
    EXPECT_LT(oracle::relative_error(lg.grad, fd), 1e-5) << to_string(t.kind) << " probe " << probe;
  }
}

INSTANTIATE_TEST_SUITE_P(AllTasks, GradientCheck,
                         ::testing::Values(TaskKind::logistic, TaskKind::mlp, TaskKind::quadratic),
                         [](const auto& info) { return to_string(info.param); });

TEST(LocalSgd, ZeroIterationsIsNoop) {
  const LearningTask t = quadratic(1);
  Shard s{{{{0.0}, 0}}, 0};
  RngStream rng(1, "m");
  const auto r = local_sgd(t, ModelParams{1.0}, s, 0, 0.5, 0, rng);
  EXPECT_EQ(r.model, ModelParams{1.0});
  EXPECT_EQ(r.update.delta, ModelParams{0.0});
  EXPECT_EQ(r.update.iterations, 0);
}

TEST(LocalSgd, HandArithmeticStep) {
  const LearningTask t = quadratic(1);
  Shard s{{{{0.0}, 0}}, 0};
  RngStream rng(1, "m");
  const auto r = local_sgd(t, ModelParams{1.0}, s, 1, 0.5, 0, rng);
  EXPECT_DOUBLE_EQ(r.model[0], 0.5);
  EXPECT_DOUBLE_EQ(r.update.delta[0], 0.5);
  EXPECT_EQ(r.update.iterations, 1);
}

TEST(LocalSgd, ModelEqualsInputMinusDeltaExactly) {
  LearningTask t;
  t.input_dim = 6;
  t.num_classes = 3;
  RngStream rng(4, "data");
  Shard s{oracle::random_batch(t, 40, rng), 0};
  const ModelParams w = oracle::random_model(t, rng);
  for (int batch : {0, 5}) {
    RngStream mb(4, "minibatch/0");
    const auto r = local_sgd(t, w, s, 13, 0.1, batch, mb);
    EXPECT_EQ(r.model, vec_axpy(-1.0, r.update.delta, w));
  }
}

TEST(LocalSgd, MinibatchStreamIsReproducible) {
  LearningTask t;
  t.input_dim = 3;
  t.num_classes = 2;
  RngStream rng(4, "data");
  Shard s{oracle::random_batch(t, 30, rng), 0};
  RngStream a(9, "minibatch/1"), b(9, "minibatch/1");
  const auto ra = local_sgd(t, ModelParams(t.param_dim()), s, 7, 0.1, 4, a);
  const auto rb = local_sgd(t, ModelParams(t.param_dim()), s, 7, 0.1, 4, b);
  EXPECT_EQ(ra.model, rb.model);
  EXPECT_EQ(ra.per_sample_losses, rb.per_sample_losses);
  EXPECT_EQ(ra.per_sample_losses.size(), 28u);
}

TEST(StatisticalUtility, ConstantLosses) {
  const std::vector<double> l(8, 1.5);
  EXPECT_DOUBLE_EQ(statistical_utility(l), 12.0);
}

TEST(StatisticalUtility, HandArithmetic) {
  const std::vector<double> l{3, 4};
  EXPECT_NEAR(statistical_utility(l), 7.0710678118654755, 1e-12);
}

TEST(StatisticalUtility, ZeroAndErrors) {
  const std::vector<double> z(5, 0.0);
  EXPECT_EQ(statistical_utility(z), 0.0);
  EXPECT_THROW(statistical_utility(std::vector<double>{}), ProtocolError);
  EXPECT_THROW(statistical_utility(std::vector<double>{-1.0}), ProtocolError);
}

TEST(Features, ZeroModelGivesZeroMatrixOfProbeShape) {
  LearningTask t;
  t.input_dim = 4;
  t.num_classes = 3;
  RngStream rng(2, "p");
  const Dataset probe = oracle::random_batch(t, 9, rng);
  const FeatureMatrix f = extract_features(t, ModelParams(t.param_dim()), probe);
  EXPECT_EQ(f.rows, 9u);
  EXPECT_EQ(f.cols, 3u);
  for (double v : f.data) EXPECT_EQ(v, 0.0);
}

TEST(Features, IdenticalModelsIdenticalMatrices) {
  LearningTask t;
  t.kind = TaskKind::mlp;
  t.input_dim = 4;
  t.num_classes = 3;
  RngStream rng(2, "p");
  const Dataset probe = oracle::random_batch(t, 9, rng);
  const ModelParams w = oracle::random_model(t, rng);
  EXPECT_EQ(extract_features(t, w, probe).data, extract_features(t, ModelParams(w), probe).data);
}

TEST(Cka, SelfSimilarityOne) {
  RngStream rng(1, "cka");
  const FeatureMatrix x = oracle::random_features(30, 5, rng);
  EXPECT_NEAR(linear_cka(x, x), 1.0, 1e-12);
}

TEST(Cka, OrthogonalAndScalarInvariance) {
  RngStream rng(2, "cka");
  for (int trial = 0; trial < 20; ++trial) {
    const FeatureMatrix x = oracle::random_features(25, 6, rng);
    const auto q = oracle::random_orthogonal(6, rng);
    EXPECT_NEAR(linear_cka(x, oracle::multiply(x, q)), 1.0, 1e-9);
    FeatureMatrix scaled = x;
    for (auto& v : scaled.data) v *= -3.7;
    EXPECT_NEAR(linear_cka(x, scaled), 1.0, 1e-9);
  }
}

TEST(Cka, SymmetricAndBounded) {
  RngStream rng(3, "cka");
  for (int trial = 0; trial < 200; ++trial) {
    const FeatureMatrix x = oracle::random_features(12, 3, rng);
    const FeatureMatrix y = oracle::random_features(12, 4, rng);
    const double a = linear_cka(x, y), b = linear_cka(y, x);
    EXPECT_NEAR(a, b, 1e-12);
    EXPECT_GE(a, 0.0);
    EXPECT_LE(a, 1.0);
  }
}

TEST(Cka, ZeroCenteredMatrixGivesZero) {
  RngStream rng(3, "cka");
  const FeatureMatrix x = oracle::random_features(10, 3, rng);
  FeatureMatrix constant{10, 3, std::vector<double>(30, 2.5)};
  EXPECT_EQ(linear_cka(x, constant), 0.0);
  EXPECT_EQ(linear_cka(FeatureMatrix{10, 3, std::vector<double>(30, 0.0)}, x), 0.0);
}

TEST(Cka, RowMismatchRejected) {
  RngStream rng(3, "cka");
  EXPECT_THROW(linear_cka(oracle::random_features(10, 3, rng), oracle::random_features(11, 3, rng)), ConfigError);
}

TEST(Cka, AgreesWithGramFormulation) {
  // HSIC form: tr(Kx H Ky H) / sqrt(tr(Kx H Kx H) tr(Ky H Ky H)), K = X X^T.
  RngStream rng(8, "cka");
  const FeatureMatrix x = oracle::random_features(15, 4, rng);
  const FeatureMatrix y = oracle::random_features(15, 3, rng);
  const std::size_t n = 15;
  auto centred_gram = [&](const FeatureMatrix& m) {
    std::vector<double> k(n * n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (std::size_t c = 0; c < m.cols; ++c) s += m(i, c) * m(j, c);
        k[i * n + j] = s;
      }
    std::vector<double> row(n, 0.0), col(n, 0.0);
    double all = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        row[i] += k[i * n + j] / n;
        col[j] += k[i * n + j] / n;
        all += k[i * n + j] / (n * n);
      }
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) k[i * n + j] += all - row[i] - col[j];
    return k;
  };
  const auto kx = centred_gram(x), ky = centred_gram(y);
  double xy = 0, xx = 0, yy = 0;
  for (std::size_t i = 0; i < n * n; ++i) {
    xy += kx[i] * ky[i];
    xx += kx[i] * kx[i];
    yy += ky[i] * ky[i];
  }
  EXPECT_NEAR(linear_cka(x, y), xy / std::sqrt(xx * yy), 1e-12);
}

TEST(Evaluate, PerfectSeparableFit) {
  LearningTask t;
  t.input_dim = 2;
  t.num_classes = 2;
  // W rows per class then biases.
  const ModelParams w{10, 0, -10, 0, 0, 0};
  const Dataset test{{{1, 0}, 0}, {{2, 1}, 0}, {{-1, 0}, 1}, {{-3, -1}, 1}};
  EXPECT_DOUBLE_EQ(evaluate(t, w, test).accuracy, 1.0);
}

TEST(Evaluate, ZeroModelBalancedBinaryIsHalf) {
  LearningTask t;
  t.input_dim = 3;
  t.num_classes = 2;
  RngStream rng(5, "e");
  Dataset test = oracle::random_batch(t, 200, rng);
  for (std::size_t i = 0; i < test.size(); ++i) test[i].label = static_cast<int>(i % 2);
  EXPECT_NEAR(evaluate(t, ModelParams(t.param_dim()), test).accuracy, 0.5, 0.1);
}

TEST(Evaluate, QuadraticAccuracyNondecreasingAsLossVanishes) {
  const int c = 4;
  const LearningTask t = quadratic(c, c);
  Dataset data;
  for (int y = 0; y < c; ++y)
    for (int k = 0; k < 5; ++k) {
      std::vector<double> x(c, 0.0);
      x[static_cast<std::size_t>(y)] = 1.0;
      data.push_back({x, y});
    }
  Shard s{data, 0};
  ModelParams w(t.param_dim());
  double prev_acc = -1.0, prev_loss = INFINITY;
  RngStream rng(1, "m");
  for (int step = 0; step < 200; ++step) {
    const EvalResult ev = evaluate(t, w, data);
    EXPECT_GE(ev.accuracy, prev_acc);
    EXPECT_LE(ev.mean_loss, prev_loss + 1e-15);
    prev_acc = ev.accuracy;
    prev_loss = ev.mean_loss;
    w = local_sgd(t, w, s, 1, 0.5, 0, rng).model;
  }
  EXPECT_DOUBLE_EQ(prev_acc, 1.0);
  EXPECT_LT(prev_loss, 1e-6);
}

TEST(Partition, IidSplitSizesAndHistogram) {
  LearningTask t;
  RngStream centres_rng(1, "data");
  const BlobCentres centres = make_blob_centres({4, 3, 1.0}, centres_rng);
  const Dataset ds = sample_blobs(centres, 400, centres_rng);
  RngStream rng(1, "partition");
  const auto shards = partition_noniid(ds, 4, 0.0, rng);
  ASSERT_EQ(shards.size(), 4u);
  for (const auto& s : shards) {
    EXPECT_EQ(s.size(), 100u);
    std::map<int, int> h;
    for (const auto& x : s.samples) ++h[x.label];
    // Expected 25 per class; binomial sd ~ sqrt(100 * .25 * .75) = 4.3.
    for (int c = 0; c < 4; ++c) EXPECT_NEAR(h[c], 25, 4 * 4.33);
  }
}

TEST(Partition, FullSkewSingleLabelDisjoint) {
  const Dataset ds = labelled_range(10, 20);
  RngStream rng(2, "partition");
  const auto shards = partition_noniid(ds, 10, 1.0, rng);
  std::vector<LabeledSample> all;
  for (std::size_t i = 0; i < shards.size(); ++i) {
    std::set<int> labels;
    for (const auto& x : shards[i].samples) labels.insert(x.label);
    EXPECT_EQ(labels.size(), 1u);
    EXPECT_EQ(*labels.begin(), static_cast<int>(i % 10));
    EXPECT_EQ(shards[i].owner, static_cast<DeviceId>(i));
    all.insert(all.end(), shards[i].samples.begin(), shards[i].samples.end());
  }
  EXPECT_EQ(sorted_samples(all), sorted_samples(ds));
}

TEST(Partition, HalfSkewDominantCount) {
  const Dataset ds = labelled_range(4, 100);
  RngStream rng(3, "partition");
  const auto shards = partition_noniid(ds, 4, 0.5, rng);
  ASSERT_EQ(shards.size(), 4u);
  for (int d = 0; d < 4; ++d) {
    ASSERT_EQ(shards[static_cast<std::size_t>(d)].size(), 100u);
    int dominant = 0;
    for (const auto& x : shards[static_cast<std::size_t>(d)].samples) dominant += x.label == d;
    EXPECT_EQ(dominant, 50);
  }
}

TEST(Partition, ConservesSamples) {
  const Dataset ds = labelled_range(5, 40);
  for (double lambda : {0.0, 0.5, 1.0}) {
    RngStream rng(4, "partition");
    const auto shards = partition_noniid(ds, 5, lambda, rng);
    std::vector<LabeledSample> all;
    for (const auto& s : shards) all.insert(all.end(), s.samples.begin(), s.samples.end());
    EXPECT_EQ(sorted_samples(all), sorted_samples(ds)) << "lambda " << lambda;
  }
}

TEST(Partition, InsufficientClassNamesIt) {
  Dataset ds = labelled_range(3, 10);
  ds.erase(std::remove_if(ds.begin(), ds.end(), [](const LabeledSample& s) { return s.label == 2 && s.features[1] > 1; }),
           ds.end());
  RngStream rng(5, "partition");
  try {
    (void)partition_noniid(ds, 6, 1.0, rng);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("class 2"), std::string::npos) << e.what();
  }
}

TEST(Partition, DeterministicForSeed) {
  const Dataset ds = labelled_range(5, 40);
  RngStream a(6, "partition"), b(6, "partition");
  const auto sa = partition_noniid(ds, 7, 0.5, a);
  const auto sb = partition_noniid(ds, 7, 0.5, b);
  for (std::size_t i = 0; i < sa.size(); ++i) EXPECT_EQ(sa[i].samples, sb[i].samples);
}

TEST(Blobs, BalancedLabels) {
  RngStream rng(7, "data");
  const BlobCentres c = make_blob_centres({5, 2, 1.0}, rng);
  const Dataset ds = sample_blobs(c, 103, rng);
  std::map<int, int> h;
  for (const auto& s : ds) ++h[s.label];
  for (int k = 0; k < 5; ++k) EXPECT_GE(h[k], 20);
  EXPECT_EQ(ds.size(), 103u);
}

TEST(CsvDataset, LoadsHeaderAndRows) {
  const auto path = std::filesystem::temp_directory_path() / "fedex_test_dataset.csv";
  {
    std::ofstream o(path);
    o << "label,f0,f1\n1,0.5,-2\n0,3,4\n";
  }
  const Dataset ds = load_csv_dataset(path.string());
  ASSERT_EQ(ds.size(), 2u);
  EXPECT_EQ(ds[0].label, 1);
  EXPECT_EQ(ds[0].features, (std::vector<double>{0.5, -2}));
  EXPECT_EQ(ds[1].features, (std::vector<double>{3, 4}));
  std::filesystem::remove(path);
}

TEST(CsvDataset, RejectsBadRows) {
  const auto path = std::filesystem::temp_directory_path() / "fedex_test_bad.csv";
  {
    std::ofstream o(path);
    o << "label,f0,f1\n1,0.5\n";
  }
  EXPECT_THROW(load_csv_dataset(path.string()), ConfigError);
  std::filesystem::remove(path);
  EXPECT_THROW(load_csv_dataset("/nonexistent/file.csv"), ConfigError);
}

TEST(Task, ParamDimIsPureFunction) {
  LearningTask t;
  t.input_dim = 20;
  t.num_classes = 10;
  EXPECT_EQ(t.param_dim(), 210u);
  t.kind = TaskKind::mlp;
  t.hidden_dim = 16;
  EXPECT_EQ(t.param_dim(), 16u * 20 + 16 + 10 * 16 + 10);
  t.kind = TaskKind::quadratic;
  EXPECT_EQ(t.param_dim(), 200u);
  EXPECT_EQ(parse_task_kind("mlp"), TaskKind::mlp);
  EXPECT_THROW(parse_task_kind("cnn"), ConfigError);
}

/*
 * Copyright 2026 The fairshot Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "fairshot/metrics.hpp"
#include "fairshot/trainer.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace fairshot;
using fairshot::tests::vec;

namespace {

MultiTaskModel literal(const Eigen::MatrixXd& P, const Vector& p, const Vector& B = Vector(), double b0 = 0.0) {
  MultiTaskModel m;
  m.primary_weights = P;
  m.primary_bias = p;
  m.bias_weights = B.size() ? B : Vector::Zero(P.cols());
  m.bias_offset = b0;
  return m;
}

TrainConfig plain_config() {
  TrainConfig c;
  c.beta = 0.0;
  c.bias_head_enabled = false;
  c.hidden_dim = 0;
  return c;
}

Corpus separable_toy() {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<Vector> xs;
  std::vector<std::size_t> ys;
  while (xs.size() < 40) {
    const Vector x = vec({u(rng), u(rng)});
    const double margin = x[0] + 0.5 * x[1];
    if (std::abs(margin) < 0.2) continue;  // separable with a margin by construction
    xs.push_back(x);
    ys.push_back(margin > 0 ? 1 : 0);
  }
  return tests::make_corpus(xs, ys);
}

}  // namespace

TEST(InitModel, ShapesRangesAndDeterminism) {
  const auto m = init_model(4, 10, 1, 0);
  EXPECT_FALSE(m.has_projection());
  EXPECT_EQ(m.primary_weights.rows(), 4);
  EXPECT_EQ(m.primary_weights.cols(), 10);
  const double r = 1.0 / std::sqrt(10.0);
  EXPECT_LE(m.primary_weights.cwiseAbs().maxCoeff(), r);
  EXPECT_LE(m.bias_weights.cwiseAbs().maxCoeff(), r);
  EXPECT_EQ(m.primary_bias, Vector::Zero(4));
  EXPECT_EQ(m.bias_offset, 0.0);

  const auto again = init_model(4, 10, 1, 0);
  EXPECT_EQ(oracle::flatten(m), oracle::flatten(again));
  EXPECT_NE(oracle::flatten(m), oracle::flatten(init_model(4, 10, 2, 0)));

  const auto proj = init_model(4, 10, 1);
  EXPECT_TRUE(proj.has_projection());
  EXPECT_EQ(proj.projection.rows(), 10);
  EXPECT_EQ(proj.input_dim(), 10u);
  const auto narrow = init_model(4, 10, 1, 3);
  EXPECT_EQ(narrow.hidden_dim(), 3u);
  EXPECT_LE(narrow.primary_weights.cwiseAbs().maxCoeff(), 1.0 / std::sqrt(3.0));

  EXPECT_THROW(init_model(1, 10, 1), InvalidArgument);
  EXPECT_THROW(init_model(3, 0, 1), InvalidArgument);
}

TEST(ForwardPrimary, Examples) {
  const auto zero = literal(Eigen::MatrixXd::Zero(4, 3), Vector::Zero(4));
  const Vector p = forward_primary(zero, vec({1, 2, 3}));
  for (int i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(p[i], 0.25);

  const auto big = literal(Eigen::MatrixXd::Zero(4, 1), vec({1000, 0, 0, 0}));
  const Vector q = forward_primary(big, vec({0}));
  EXPECT_TRUE(q.allFinite());
  EXPECT_NEAR(q[0], 1.0, 1e-12);
  EXPECT_NEAR(q.sum(), 1.0, 1e-9);

  for (double t : {-5.0, -0.3, 0.0, 2.0, 40.0}) {
    const auto two = literal(Eigen::MatrixXd::Zero(2, 1), vec({t, 0}));
    const Vector r = forward_primary(two, vec({0}));
    EXPECT_NEAR(r[0], 1.0 / (1.0 + std::exp(-t)), 1e-12);
    EXPECT_NEAR(r[1], 1.0 - 1.0 / (1.0 + std::exp(-t)), 1e-12);
  }
}

TEST(ForwardPrimary, RejectsBadInput) {
  const auto m = literal(Eigen::MatrixXd::Zero(2, 3), Vector::Zero(2));
  EXPECT_THROW(forward_primary(m, vec({1, 2})), DimensionMismatch);
  EXPECT_THROW(forward_primary(m, vec({1, NAN, 2})), InvalidArgument);
}

TEST(ForwardBias, Examples) {
  auto m = literal(Eigen::MatrixXd::Zero(2, 2), Vector::Zero(2));
  EXPECT_DOUBLE_EQ(forward_bias(m, vec({3, 4})), 0.5);
  m.bias_offset = 800.0;
  EXPECT_NEAR(forward_bias(m, vec({0, 0})), 1.0, 1e-15);
  m.bias_offset = -800.0;
  EXPECT_GE(forward_bias(m, vec({0, 0})), 0.0);
  for (double t : {0.1, 1.0, 7.5}) {
    m.bias_offset = t;
    const double up = forward_bias(m, vec({0, 0}));
    m.bias_offset = -t;
    EXPECT_NEAR(forward_bias(m, vec({0, 0})), 1.0 - up, 1e-15);
  }
}

TEST(Loss, PerfectPredictionWithoutRegularisationIsZero) {
  const auto m = literal(Eigen::MatrixXd::Zero(3, 1), vec({1000, 0, 0}));
  EXPECT_EQ(loss(m, vec({0}), 0, 0, plain_config()), 0.0);
}

TEST(Loss, LambdaZeroIsRegularisedCrossEntropy) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int t = 0; t < 20; ++t) {
    auto m = init_model(3, 5, static_cast<std::uint64_t>(t), t % 2 ? std::optional<std::size_t>(0) : std::nullopt);
    const Vector x = vec({u(rng), u(rng), u(rng), u(rng), u(rng)});
    TrainConfig on;
    on.lambda = 0.0;
    on.beta = 0.01;
    TrainConfig off = on;
    off.bias_head_enabled = false;
    for (auto obj : {BiasObjective::subtract, BiasObjective::invert}) {
      on.objective = obj;
      EXPECT_DOUBLE_EQ(loss(m, x, 1, 1, on), loss(m, x, 1, 1, off));
    }
    // explicit cross-entropy + beta ||P||^2
    const Vector p = forward_primary(m, x);
    EXPECT_NEAR(loss(m, x, 2, 0, off), -std::log(p[2]) + 0.01 * m.primary_weights.squaredNorm(), 1e-12);
  }
}

TEST(Loss, TermsFollowTheObjective) {
  auto m = init_model(3, 4, 5);
  m.bias_offset = 0.7;
  const Vector x = vec({0.3, -0.2, 0.9, 0.1});
  TrainConfig c;
  c.beta = 0.0;
  c.lambda = 0.5;
  const double p = forward_primary(m, x)[1];
  const double q = forward_bias(m, x);
  c.objective = BiasObjective::subtract;
  EXPECT_NEAR(loss(m, x, 1, 1, c), -std::log(p) + 0.5 * std::log(q), 1e-12);
  c.objective = BiasObjective::invert;
  EXPECT_NEAR(loss(m, x, 1, 1, c), -std::log(p) - 0.5 * std::log(1.0 - q), 1e-12);
  c.l2_form = L2Form::plain;
  c.beta = 0.2;
  c.bias_head_enabled = false;
  EXPECT_NEAR(loss(m, x, 1, 1, c), -std::log(p) + 0.2 * m.primary_weights.norm(), 1e-12);
}

TEST(Loss, ClampingIsReported) {
  const auto m = literal(Eigen::MatrixXd::Zero(2, 1), vec({0, 1000}));
  const auto t = loss_terms(m, vec({0}), 0, 0, plain_config());
  EXPECT_EQ(t.clamped, 1u);
  EXPECT_NEAR(t.primary, -std::log(1e-12), 1e-9);
}

// Analytic gradient against central finite differences on random small models.
TEST(Gradient, MatchesFiniteDifferences) {
  std::mt19937_64 rng(123);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int model_id = 0; model_id < 100; ++model_id) {
    const std::optional<std::size_t> hidden =
        model_id % 3 == 0 ? std::optional<std::size_t>(0) : std::optional<std::size_t>(model_id % 3 == 1 ? 5 : 4);
    auto m = init_model(3, 5, static_cast<std::uint64_t>(model_id), hidden);
    m.primary_bias = vec({u(rng), u(rng), u(rng)});
    m.bias_offset = u(rng);
    const Eigen::Index batch = 1 + model_id % 4;
    Eigen::MatrixXd X(5, batch);
    std::vector<std::size_t> labels;
    std::vector<std::uint8_t> biases;
    for (Eigen::Index j = 0; j < batch; ++j) {
      for (Eigen::Index i = 0; i < 5; ++i) X(i, j) = 2.0 * u(rng);
      labels.push_back(static_cast<std::size_t>(rng() % 3));
      biases.push_back(static_cast<std::uint8_t>(rng() % 2));
    }
    for (auto obj : {BiasObjective::subtract, BiasObjective::invert})
      for (auto form : {L2Form::squared, L2Form::plain}) {
        TrainConfig c;
        c.objective = obj;
        c.l2_form = form;
        c.lambda = 0.25 + std::abs(u(rng));
        c.beta = 0.1 * std::abs(u(rng));
        LossTerms t;
        const auto g = batch_loss_gradient(m, X, labels, biases, c, &t);
        ASSERT_EQ(t.clamped, 0u);
        const auto check = oracle::compare_gradients(oracle::flatten(g), oracle::numeric_gradient(m, X, labels, biases, c));
        EXPECT_LT(check.norm_relative, 1e-5) << model_id;
        EXPECT_LT(check.component_relative, 1e-5) << model_id;
      }
  }
}

TEST(Gradient, PerLabelBetaWeightsTheMeanOfTheBatch) {
  auto m = init_model(3, 5, 8, 0);
  Eigen::MatrixXd X = Eigen::MatrixXd::Random(5, 3);
  const std::vector<std::size_t> labels = {0, 2, 2};
  const std::vector<std::uint8_t> biases = {0, 0, 0};
  TrainConfig c;
  c.bias_head_enabled = false;
  c.beta_per_label = {{0, 0.3}, {2, 0.0}};
  const auto g = batch_loss_gradient(m, X, labels, biases, c);
  const auto check = oracle::compare_gradients(oracle::flatten(g), oracle::numeric_gradient(m, X, labels, biases, c));
  EXPECT_LT(check.norm_relative, 1e-5);
}

TEST(Train, SeparableToyReachesFullTrainingAccuracy) {
  const auto toy = separable_toy();
  TrainConfig c = plain_config();
  c.epochs = 200;
  c.learning_rate = 0.5;
  c.batch_size = 8;
  const auto r = train(toy, {}, c);
  EXPECT_EQ(accuracy(predict(r.model, toy), reference_labels(toy)), 1.0);
}

// Parameter-for-parameter equality with an independent softmax regression
// loop using the same initial weights and batch order.
TEST(Train, LambdaZeroBetaZeroEqualsPlainSoftmaxRegression) {
  SyntheticSpec spec;
  spec.per_cell = 6;
  const auto corpus = make_synthetic(spec, 2);
  TrainConfig c;
  c.lambda = 0.0;
  c.beta = 0.0;
  c.hidden_dim = 0;
  c.epochs = 15;
  c.batch_size = 7;
  c.learning_rate = 0.03;
  c.seed = 99;
  std::vector<std::uint8_t> bias(corpus.size(), 1);
  const auto trained = train(corpus, bias, c).model;

  const std::size_t n = corpus.size(), C = corpus.label_count(), d = corpus.dimension();
  const auto init = init_model(C, d, c.seed, 0);
  std::vector<std::vector<double>> W(C, std::vector<double>(d));
  std::vector<double> b(C, 0.0);
  for (std::size_t a = 0; a < C; ++a)
    for (std::size_t k = 0; k < d; ++k) W[a][k] = init.primary_weights(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(k));
  Rng rng = make_rng(c.seed, 1);
  std::vector<std::size_t> order(n);
  for (std::size_t e = 0; e < c.epochs; ++e) {
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t s = 0; s < n; s += c.batch_size) {
      const std::size_t t = std::min(n, s + c.batch_size);
      std::vector<std::vector<double>> gW(C, std::vector<double>(d, 0.0));
      std::vector<double> gb(C, 0.0);
      for (std::size_t k = s; k < t; ++k) {
        const auto& in = corpus.instances[order[k]];
        std::vector<double> z(C);
        double mx = -1e300;
        for (std::size_t a = 0; a < C; ++a) {
          z[a] = b[a];
          for (std::size_t j = 0; j < d; ++j) z[a] += W[a][j] * in.x[static_cast<Eigen::Index>(j)];
          mx = std::max(mx, z[a]);
        }
        double sum = 0.0;
        for (auto& v : z) sum += (v = std::exp(v - mx));
        for (std::size_t a = 0; a < C; ++a) {
          const double g = z[a] / sum - (a == in.y ? 1.0 : 0.0);
          gb[a] += g;
          for (std::size_t j = 0; j < d; ++j) gW[a][j] += g * in.x[static_cast<Eigen::Index>(j)];
        }
      }
      const double scale = c.learning_rate / static_cast<double>(t - s);
      for (std::size_t a = 0; a < C; ++a) {
        b[a] -= scale * gb[a];
        for (std::size_t j = 0; j < d; ++j) W[a][j] -= scale * gW[a][j];
      }
    }
  }
  for (std::size_t a = 0; a < C; ++a) {
    EXPECT_NEAR(trained.primary_bias[static_cast<Eigen::Index>(a)], b[a], 1e-10);
    for (std::size_t j = 0; j < d; ++j)
      EXPECT_NEAR(trained.primary_weights(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(j)), W[a][j], 1e-10);
  }
}

TEST(Train, DeterministicAndTraced) {
  SyntheticSpec spec;
  spec.per_cell = 5;
  const auto corpus = make_synthetic(spec, 1);
  std::vector<std::uint8_t> bias(corpus.size(), 0);
  for (std::size_t i = 0; i < bias.size(); i += 3) bias[i] = 1;
  TrainConfig c;
  c.epochs = 12;
  const auto a = train(corpus, bias, c), b = train(corpus, bias, c);
  EXPECT_EQ(oracle::flatten(a.model), oracle::flatten(b.model));
  ASSERT_EQ(a.trace.size(), 12u);
  EXPECT_EQ(a.trace.back().epoch, 12u);
  c.seed = 2;
  EXPECT_NE(oracle::flatten(train(corpus, bias, c).model), oracle::flatten(a.model));
}

TEST(Train, FullBatchConvexLossIsNonIncreasing) {
  SyntheticSpec spec;
  spec.per_cell = 5;
  spec.separation = 2.0;
  const auto corpus = make_synthetic(spec, 6);
  TrainConfig c = plain_config();
  c.batch_size = corpus.size();
  c.learning_rate = 0.01;
  c.epochs = 100;
  const auto r = train(corpus, {}, c);
  for (std::size_t e = 1; e < r.trace.size(); ++e) EXPECT_LE(r.trace[e].total, r.trace[e - 1].total + 1e-12);
}

TEST(Train, WeightDecayShrinksThePrimaryHead) {
  SyntheticSpec spec;
  spec.per_cell = 5;
  const auto corpus = make_synthetic(spec, 3);
  TrainConfig c = plain_config();
  c.epochs = 100;
  const double free_norm = train(corpus, {}, c).model.primary_weights.norm();
  c.beta = 0.05;
  EXPECT_LE(train(corpus, {}, c).model.primary_weights.norm(), free_norm);
}

TEST(Train, ContractViolations) {
  SyntheticSpec spec;
  spec.per_cell = 2;
  const auto corpus = make_synthetic(spec, 3);
  TrainConfig c;
  std::vector<std::uint8_t> short_bias(3, 0);
  EXPECT_THROW(train(corpus, short_bias, c), InvalidArgument);
  Corpus empty{corpus.label_names, corpus.schema, {}};
  EXPECT_THROW(train(empty, {}, plain_config()), InvalidArgument);
  auto bad = corpus;
  bad.instances[0].y = 9;
  EXPECT_THROW(train(bad, {}, plain_config()), InvalidArgument);
  c.learning_rate = 0.0;
  EXPECT_THROW(train(corpus, std::vector<std::uint8_t>(corpus.size(), 0), c), InvalidArgument);
}

// With a fully skewed label, the bias head moves F towards uniform at a small
// accuracy cost.
TEST(Train, BiasHeadRaisesFairnessOnPlantedData) {
  SyntheticSpec spec;
  spec.dimension = 50;
  spec.label_separation = 1.5;
  spec.bias = 1.0;
  const auto train_set = make_synthetic(spec, 10);
  spec.bias = 0.0;
  const auto test_set = make_synthetic(spec, 1010);
  AttributeAssignments truth;
  for (const auto& in : train_set.instances) truth.push_back(in.z);
  std::vector<PartitionAssignment> parts;
  for (const auto& g : group_by_label(train_set)) parts.push_back(attributes_to_partition(g, truth, train_set.schema));
  // disparity 3 for the full cell and 1 for the empty ones: flag only the full cell
  const auto labels = bias_labels_from_partitions(parts, 2.0, train_set.size()).labels;

  TrainConfig c;
  c.lambda = 0.0;
  const auto base = train(train_set, labels, c).model;
  c.lambda = 1.0;
  const auto debiased = train(train_set, labels, c).model;
  const auto unit = default_units(test_set).front();
  const std::vector<FairnessUnit> units = {unit};
  const auto r0 = evaluate(base, test_set, units), r1 = evaluate(debiased, test_set, units);
  ASSERT_TRUE(r0.units[0].fairness && r1.units[0].fairness);
  EXPECT_GT(*r1.units[0].fairness, *r0.units[0].fairness);
  EXPECT_GE(r1.accuracy, r0.accuracy - 0.05);
}

TEST(Predict, ArgmaxTiesAndScaleInvariance) {
  const auto uniform = literal(Eigen::MatrixXd::Zero(4, 2), Vector::Zero(4));
  EXPECT_EQ(predict_one(uniform, vec({1, 1})), 0u);
  const double l = std::log(0.1), h = std::log(0.7);
  const auto peaked = literal(Eigen::MatrixXd::Zero(4, 1), vec({l, h, l, l}));
  EXPECT_EQ(predict_one(peaked, vec({0})), 1u);

  auto m = init_model(4, 6, 3);
  m.primary_bias = vec({0.1, -0.2, 0.3, 0.0});
  SyntheticSpec spec;
  spec.dimension = 6;
  spec.labels = 2;
  spec.per_cell = 5;
  const auto corpus = make_synthetic(spec, 4);
  const auto before = predict(m, corpus);
  m.primary_weights *= 3.5;
  m.primary_bias *= 3.5;
  EXPECT_EQ(predict(m, corpus), before);
}

TEST(Checkpoint, RoundTripsExactly) {
  for (std::optional<std::size_t> hidden : {std::optional<std::size_t>(0), std::optional<std::size_t>(3), std::optional<std::size_t>()}) {
    auto m = init_model(3, 5, 4, hidden);
    m.bias_offset = -0.125;
    std::stringstream s;
    write_model(m, s);
    const auto back = read_model(s);
    EXPECT_EQ(oracle::flatten(back), oracle::flatten(m));
    EXPECT_EQ(back.has_projection(), m.has_projection());
  }
  std::stringstream junk("not a model");
  EXPECT_THROW(read_model(junk), Error);
}

TEST(LossTrace, CsvColumns) {
  std::ostringstream out;
  write_loss_trace({{1, 0.5, 0.25, 0.25}}, out);
  EXPECT_EQ(out.str(), "epoch,primary_loss,bias_loss,total\n1,0.5,0.25,0.25\n");
}

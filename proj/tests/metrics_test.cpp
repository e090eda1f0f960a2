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

#include <algorithm>
#include <numeric>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "test_util.hpp"

namespace fairshot {
namespace {

using tests::make_corpus;
using tests::vec;

// Two labels, four combinations, one instance per (label, combination).
Corpus balanced_corpus() {
  std::vector<Vector> xs;
  std::vector<std::size_t> ys;
  std::vector<std::optional<AttributeValues>> zs;
  const auto schema = AttributeSchema::eec();
  for (std::size_t a = 0; a < 2; ++a)
    for (std::size_t j = 0; j < 4; ++j) {
      xs.push_back(vec({0.0}));
      ys.push_back(a);
      zs.push_back(schema.combo_values(j));
    }
  return make_corpus(xs, ys, zs);
}

PosteriorCounts counts(std::vector<std::size_t> per_value) {
  PosteriorCounts pc{per_value, 0};
  for (auto c : per_value) pc.predicted += c;
  return pc;
}

TEST(Accuracy, Examples) {
  const std::vector<std::size_t> p{0, 1, 2, 1}, r{0, 1, 1, 1};
  EXPECT_DOUBLE_EQ(accuracy(p, r), 0.75);
  EXPECT_DOUBLE_EQ(accuracy(r, r), 1.0);
  const std::vector<std::size_t> e;
  EXPECT_THROW(accuracy(e, e), InvalidArgument);
  EXPECT_THROW(accuracy(p, std::vector<std::size_t>{0}), InvalidArgument);
}

TEST(Fairness, Examples) {
  EXPECT_NEAR(*fairness_from_counts(counts({5, 5})), 1.0, 1e-12);
  EXPECT_NEAR(*fairness_from_counts(counts({3, 1})), 0.75, 1e-12);
  EXPECT_NEAR(*fairness_from_counts(counts({4, 0})), 0.0, 1e-12);
  EXPECT_FALSE(fairness_from_counts(counts({0, 0})).has_value());
  // Three-valued attribute: 27 * (1/3)^3.
  EXPECT_NEAR(*fairness_from_counts(counts({2, 2, 2})), 1.0, 1e-12);
}

TEST(Fairness, PropertiesOnRandomPosteriors) {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<std::size_t> card(2, 5), count(0, 40);
  for (int t = 0; t < 2000; ++t) {
    std::vector<std::size_t> v(card(rng));
    for (auto& x : v) x = count(rng);
    if (std::accumulate(v.begin(), v.end(), std::size_t{0}) == 0) continue;
    const double f = *fairness_from_counts(counts(v));
    EXPECT_GE(f, 0.0);
    EXPECT_LE(f, 1.0 + 1e-12);
    auto w = v;
    std::shuffle(w.begin(), w.end(), rng);
    EXPECT_NEAR(*fairness_from_counts(counts(w)), f, 1e-12);
    const bool uniform = std::all_of(v.begin(), v.end(), [&](auto x) { return x == v[0]; });
    EXPECT_EQ(uniform, std::abs(f - 1.0) < 1e-12) << t;
  }
}

TEST(Gamma, Examples) {
  EXPECT_NEAR(gamma(0.6818, 0.8238), 0.7461, 1e-3);
  EXPECT_NEAR(gamma(0.9532, 0.8870), 0.9189, 1e-3);
  EXPECT_DOUBLE_EQ(gamma(0.4, 0.4), 0.4);
  EXPECT_DOUBLE_EQ(gamma(0.0, 0.7), 0.0);
  EXPECT_THROW(gamma(0.0, 0.0), InvalidArgument);
  EXPECT_THROW(gamma(-0.1, 0.5), InvalidArgument);
  EXPECT_THROW(gamma(0.5, std::nan("")), InvalidArgument);
}

TEST(Gamma, SymmetricAndBetweenMinAndMax) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.001, 1.0);
  for (int t = 0; t < 1000; ++t) {
    const double f = u(rng), a = u(rng);
    const double g = gamma(f, a);
    EXPECT_NEAR(g, gamma(a, f), 1e-15);
    EXPECT_NEAR(g, oracle::harmonic_mean(f, a), 1e-12);
    EXPECT_GE(g, std::min(f, a) - 1e-15);
    EXPECT_LE(g, std::max(f, a) + 1e-15);
  }
}

TEST(Evaluate, PerfectBalancedPredictor) {
  const auto test = balanced_corpus();
  const auto preds = reference_labels(test);
  const std::vector<FairnessUnit> units{{0, 0}, {0, 1}, {1, 0}};
  const auto r = evaluate_predictions(preds, test, units);
  EXPECT_DOUBLE_EQ(r.accuracy, 1.0);
  ASSERT_EQ(r.units.size(), 3u);
  for (const auto& u : r.units) {
    EXPECT_NEAR(*u.fairness, 1.0, 1e-12);
    EXPECT_NEAR(*u.gamma, 1.0, 1e-12);
    EXPECT_EQ(u.counts.predicted, 4u);
    EXPECT_EQ(u.counts.per_value, (std::vector<std::size_t>{2, 2}));
  }
  EXPECT_EQ(r.units[1].name, "l0:race");
}

TEST(Evaluate, ConstantPredictor) {
  const auto test = balanced_corpus();
  const std::vector<std::size_t> preds(test.size(), 1);
  const std::vector<FairnessUnit> units{{0, 0}, {1, 1}};
  const auto r = evaluate_predictions(preds, test, units);
  EXPECT_DOUBLE_EQ(r.accuracy, 0.5);
  EXPECT_FALSE(r.units[0].fairness.has_value());
  EXPECT_FALSE(r.units[0].gamma.has_value());
  EXPECT_NEAR(*r.units[1].fairness, 1.0, 1e-12);
  EXPECT_NEAR(*r.units[1].gamma, 2.0 / 3.0, 1e-12);
}

TEST(Evaluate, CountTablesSumToPredicted) {
  std::mt19937_64 rng(5);
  const auto test = balanced_corpus();
  std::uniform_int_distribution<std::size_t> lab(0, 1);
  for (int t = 0; t < 50; ++t) {
    std::vector<std::size_t> preds(test.size());
    for (auto& p : preds) p = lab(rng);
    for (std::size_t a = 0; a < 2; ++a)
      for (std::size_t m = 0; m < 2; ++m) {
        const auto pc = posterior_counts(preds, test, a, m);
        EXPECT_EQ(std::accumulate(pc.per_value.begin(), pc.per_value.end(), std::size_t{0}), pc.predicted);
        EXPECT_EQ(pc.predicted, static_cast<std::size_t>(std::count(preds.begin(), preds.end(), a)));
      }
  }
}

TEST(Evaluate, RejectsUnannotatedOrMismatched) {
  auto test = balanced_corpus();
  const auto preds = reference_labels(test);
  EXPECT_THROW(posterior_counts(std::vector<std::size_t>{0}, test, 0, 0), InvalidArgument);
  EXPECT_THROW(posterior_counts(preds, test, 0, 2), InvalidArgument);
  test.instances[0].z.reset();
  EXPECT_THROW(posterior_counts(preds, test, 0, 0), InvalidArgument);
  // Unannotated instances predicted as another label are not counted.
  EXPECT_NO_THROW(posterior_counts(preds, test, 1, 0));
}

TEST(Units, DefaultsAndParsing) {
  SyntheticSpec spec;
  spec.per_cell = 1;
  const auto c = make_synthetic(spec, 1);
  const auto units = default_units(c);
  ASSERT_EQ(units.size(), 3u);
  EXPECT_EQ(unit_name(c, units[0]), "fear:gender");
  EXPECT_EQ(unit_name(c, units[1]), "fear:race");
  EXPECT_EQ(unit_name(c, units[2]), "anger:gender");
  EXPECT_EQ(parse_unit(c, "anger:race"), (FairnessUnit{3, 1}));
  EXPECT_THROW(parse_unit(c, "anger"), InvalidArgument);
  EXPECT_THROW(parse_unit(c, "surprise:race"), InvalidArgument);
  EXPECT_THROW(parse_unit(c, "fear:age"), InvalidArgument);

  const auto other = balanced_corpus();
  const auto fallback = default_units(other);
  EXPECT_EQ(fallback, (std::vector<FairnessUnit>{{0, 0}, {0, 1}}));
}

TEST(Report, CsvFormat) {
  const auto test = balanced_corpus();
  const std::vector<std::size_t> preds(test.size(), 1);
  const std::vector<FairnessUnit> units{{0, 0}, {1, 1}};
  std::ostringstream out;
  write_report_csv("BAC", evaluate_predictions(preds, test, units), out);
  EXPECT_EQ(out.str(),
            "method,accuracy,unit,F,gamma\n"
            "BAC,0.500000,l0:gender,undefined,undefined\n"
            "BAC,0.500000,l1:race,1.000000,0.666667\n");
}

}  // namespace
}  // namespace fairshot

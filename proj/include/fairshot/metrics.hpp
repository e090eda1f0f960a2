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

#ifndef FAIRSHOT_METRICS_HPP
#define FAIRSHOT_METRICS_HPP

#include <cmath>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "fairshot/corpus.hpp"
#include "fairshot/error.hpp"
#include "fairshot/text.hpp"
#include "fairshot/trainer.hpp"

namespace fairshot {

inline double accuracy(std::span<const std::size_t> predictions, std::span<const std::size_t> references) {
  if (predictions.empty()) throw InvalidArgument("accuracy: empty input");
  if (predictions.size() != references.size()) throw InvalidArgument("accuracy: length mismatch");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) hits += predictions[i] == references[i];
  return static_cast<double>(hits) / static_cast<double>(predictions.size());
}

inline std::vector<std::size_t> reference_labels(const Corpus& corpus) {
  std::vector<std::size_t> out;
  out.reserve(corpus.size());
  for (const auto& in : corpus.instances) out.push_back(in.y);
  return out;
}

/// Instances predicted `label`, counted per value of one attribute.
struct PosteriorCounts {
  std::vector<std::size_t> per_value;
  std::size_t predicted = 0;
};

inline PosteriorCounts posterior_counts(std::span<const std::size_t> predictions, const Corpus& test,
                                        std::size_t label, std::size_t attribute) {
  if (predictions.size() != test.size()) throw InvalidArgument("fairness: predictions do not match the test set");
  if (attribute >= test.schema.size()) throw InvalidArgument("fairness: attribute index out of range");
  PosteriorCounts pc{std::vector<std::size_t>(test.schema.cardinality(attribute), 0), 0};
  for (std::size_t n = 0; n < test.size(); ++n) {
    if (predictions[n] != label) continue;
    const auto& z = test.instances[n].z;
    if (!z) throw InvalidArgument("fairness: test instance " + std::to_string(n) + " is not annotated");
    ++pc.per_value[(*z)[attribute]];
    ++pc.predicted;
  }
  return pc;
}

/// p^p times the product of the posterior fractions; empty when nothing
/// was predicted (the fractions are undefined).
inline std::optional<double> fairness_from_counts(const PosteriorCounts& pc) {
  if (pc.predicted == 0) return std::nullopt;
  const auto p = static_cast<double>(pc.per_value.size());
  double f = std::pow(p, p);
  for (auto count : pc.per_value) f *= static_cast<double>(count) / static_cast<double>(pc.predicted);
  return f;
}

inline std::optional<double> fairness(std::span<const std::size_t> predictions, const Corpus& test,
                                      std::size_t label, std::size_t attribute) {
  return fairness_from_counts(posterior_counts(predictions, test, label, attribute));
}

/// Harmonic mean 2FA / (F + A).
inline double gamma(double f, double a) {
  if (!(f >= 0.0) || !(a >= 0.0)) throw InvalidArgument("gamma: arguments must be non-negative");
  if (f == 0.0 && a == 0.0) throw InvalidArgument("gamma: undefined for F = A = 0");
  return 2.0 * f * a / (f + a);
}

struct FairnessUnit {
  std::size_t label = 0;
  std::size_t attribute = 0;

  friend bool operator==(const FairnessUnit&, const FairnessUnit&) = default;
};

inline std::string unit_name(const Corpus& corpus, const FairnessUnit& u) {
  return corpus.label_names.at(u.label) + ":" + corpus.schema.attribute(u.attribute).name;
}

/// Parse "label:attribute" against a corpus' label and attribute names.
inline FairnessUnit parse_unit(const Corpus& corpus, std::string_view spec) {
  const auto colon = spec.find(':');
  if (colon == std::string_view::npos) throw InvalidArgument("unit '" + std::string(spec) + "' is not label:attribute");
  const auto label = corpus.label_index(spec.substr(0, colon));
  const auto attr = corpus.schema.index_of(spec.substr(colon + 1));
  if (!label || !attr) throw InvalidArgument("unit '" + std::string(spec) + "' does not match the corpus");
  return {*label, *attr};
}

/// (fear, gender), (fear, race), (anger, gender) where the corpus has them;
/// otherwise (first label, every attribute).
inline std::vector<FairnessUnit> default_units(const Corpus& corpus) {
  const auto fear = corpus.label_index("fear");
  const auto anger = corpus.label_index("anger");
  const auto gender = corpus.schema.index_of("gender");
  const auto race = corpus.schema.index_of("race");
  if (fear && anger && gender && race) return {{*fear, *gender}, {*fear, *race}, {*anger, *gender}};
  std::vector<FairnessUnit> out;
  for (std::size_t i = 0; i < corpus.schema.size(); ++i) out.push_back({0, i});
  return out;
}

struct UnitResult {
  FairnessUnit unit;
  std::string name;
  std::optional<double> fairness;
  std::optional<double> gamma;
  PosteriorCounts counts;
};

struct EvalReport {
  double accuracy = 0.0;
  std::vector<UnitResult> units;
};

inline EvalReport evaluate_predictions(std::span<const std::size_t> predictions, const Corpus& test,
                                       std::span<const FairnessUnit> units) {
  EvalReport r;
  const auto refs = reference_labels(test);
  r.accuracy = accuracy(predictions, refs);
  for (const auto& u : units) {
    UnitResult ur{u, unit_name(test, u), std::nullopt, std::nullopt,
                  posterior_counts(predictions, test, u.label, u.attribute)};
    ur.fairness = fairness_from_counts(ur.counts);
    if (ur.fairness && r.accuracy > 0.0) ur.gamma = gamma(*ur.fairness, r.accuracy);
    r.units.push_back(std::move(ur));
  }
  return r;
}

inline EvalReport evaluate(const MultiTaskModel& model, const Corpus& test, std::span<const FairnessUnit> units) {
  const auto preds = predict(model, test);
  return evaluate_predictions(preds, test, units);
}

inline std::string format_metric(const std::optional<double>& v, int precision = 6) {
  return v ? text::format_fixed(*v, precision) : std::string("undefined");
}

inline constexpr const char* kReportCsvHeader = "method,accuracy,unit,F,gamma";

/// One row per unit: method,accuracy,unit,F,gamma.
inline void write_report_rows(const std::string& method, const EvalReport& report, std::ostream& out) {
  for (const auto& u : report.units)
    out << text::csv_escape(method) << ',' << text::format_fixed(report.accuracy, 6) << ','
        << text::csv_escape(u.name) << ',' << format_metric(u.fairness) << ',' << format_metric(u.gamma) << '\n';
}

inline void write_report_csv(const std::string& method, const EvalReport& report, std::ostream& out) {
  out << kReportCsvHeader << '\n';
  write_report_rows(method, report, out);
}

}  // namespace fairshot

#endif  // FAIRSHOT_METRICS_HPP

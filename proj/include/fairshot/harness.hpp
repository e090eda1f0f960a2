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

#ifndef FAIRSHOT_HARNESS_HPP
#define FAIRSHOT_HARNESS_HPP

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fairshot/bias.hpp"
#include "fairshot/corpus.hpp"
#include "fairshot/embeddings.hpp"
#include "fairshot/error.hpp"
#include "fairshot/metrics.hpp"
#include "fairshot/partition.hpp"
#include "fairshot/rng.hpp"
#include "fairshot/text.hpp"
#include "fairshot/trainer.hpp"

namespace fairshot {

using json = nlohmann::json;

/// Error raised inside one pipeline stage; `stage()` names it.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& what)
      : Error("stage " + stage + ": " + what), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

template <class F>
decltype(auto) run_stage(const std::string& name, F&& f) {
  try {
    return std::forward<F>(f)();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

enum class MethodId { bac, badr, bas, bacp, basav, basav_knn };

inline std::string method_name(MethodId m) {
  switch (m) {
    case MethodId::bac: return "BAC";
    case MethodId::badr: return "BADR";
    case MethodId::bas: return "BAS";
    case MethodId::bacp: return "BACP";
    case MethodId::basav: return "BASAV";
    case MethodId::basav_knn: return "BASAV-KNN";
  }
  return "?";
}

inline MethodId parse_method(std::string_view s) {
  std::string k;
  for (char c : s) k.push_back(c == '_' ? '-' : static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  if (k == "bac") return MethodId::bac;
  if (k == "badr") return MethodId::badr;
  if (k == "bas") return MethodId::bas;
  if (k == "bacp") return MethodId::bacp;
  if (k == "basav") return MethodId::basav;
  if (k == "basav-knn") return MethodId::basav_knn;
  throw InvalidArgument("unknown method '" + std::string(s) + "'");
}

inline bool uses_alpha(MethodId m) { return m == MethodId::basav || m == MethodId::basav_knn; }
inline bool uses_epsilon_cluster(MethodId m) {
  return m == MethodId::bacp || m == MethodId::badr || m == MethodId::basav || m == MethodId::basav_knn;
}
inline bool uses_epsilon_annot(MethodId m) { return m == MethodId::bas; }
inline bool uses_knn(MethodId m) { return m == MethodId::basav_knn; }
inline bool uses_bias_head(MethodId m) { return m != MethodId::bac && m != MethodId::badr; }
inline bool uses_beta0(MethodId m) { return m == MethodId::badr; }

struct MethodDefaults {
  static constexpr double alpha = 0.2;
  static constexpr double epsilon_annot = 0.5;
  static constexpr double epsilon_cluster = 0.35;
  static constexpr std::size_t knn_k = 3;
  static constexpr double beta = 1e-3;
  static constexpr double beta0 = 1e-3;
  static constexpr double lambda = 1.0;
};

/**
 * Everything needed to reproduce one method run. Method-specific fields are
 * optional: resolve() fills defaults for those the method uses, and validate()
 * rejects those it does not.
 */
struct MethodSpec {
  MethodId method = MethodId::bac;
  std::string label;  // display name, e.g. "BACP-DW"; defaults to the method name

  std::string corpus;
  std::string test_corpus;
  std::string embeddings;
  std::string test_embeddings;
  double train_fraction = 0.8;
  std::vector<std::uint64_t> seeds = {1};

  std::optional<double> alpha;
  std::optional<double> epsilon_annot;
  std::optional<double> epsilon_cluster;
  std::optional<std::size_t> knn_k;
  KnnScope knn_scope = KnnScope::global;
  std::optional<double> beta;
  std::optional<double> beta0;
  BetaScope beta_scope = BetaScope::per_label;
  std::optional<double> lambda;

  double learning_rate = 0.05;
  std::size_t epochs = 300;
  std::size_t batch_size = 32;
  std::optional<std::size_t> hidden_dim;
  BiasObjective bias_objective = BiasObjective::subtract;
  L2Form l2_form = L2Form::squared;

  KMeansOptions kmeans;
  ClassifierOptions classifier;

  Tokenizer tokenizer = Tokenizer::lower_strip;
  std::vector<Attribute> attributes = AttributeSchema::eec().attributes();
  std::vector<std::string> labels;
  std::vector<std::string> units;
  bool evaluate_on_all = false;

  std::string display_label() const { return label.empty() ? method_name(method) : label; }

  void validate() const {
    auto reject = [&](bool set, bool applicable, const char* key) {
      if (set && !applicable)
        throw InvalidArgument(std::string(key) + " is not applicable to " + method_name(method));
    };
    reject(alpha.has_value(), uses_alpha(method), "alpha");
    reject(epsilon_annot.has_value(), uses_epsilon_annot(method), "epsilon_annot");
    reject(epsilon_cluster.has_value(), uses_epsilon_cluster(method), "epsilon_cluster");
    reject(knn_k.has_value(), uses_knn(method), "knn_k");
    reject(lambda.has_value(), uses_bias_head(method), "lambda");
    reject(beta0.has_value(), uses_beta0(method), "beta0");
    reject(beta.has_value(), !uses_beta0(method), "beta");
    if (alpha && !(*alpha > 0.0 && *alpha <= 1.0)) throw InvalidArgument("alpha must lie in (0, 1]");
    if (epsilon_annot && !(*epsilon_annot >= 0.0 && *epsilon_annot <= 1.0))
      throw InvalidArgument("epsilon_annot must lie in [0, 1]");
    if (epsilon_cluster && !(*epsilon_cluster >= 0.0)) throw InvalidArgument("epsilon_cluster must be >= 0");
    if (knn_k && *knn_k == 0) throw InvalidArgument("knn_k must be positive");
    if ((beta && !(*beta >= 0.0)) || (beta0 && !(*beta0 >= 0.0)) || (lambda && !(*lambda >= 0.0)))
      throw InvalidArgument("beta, beta0 and lambda must be >= 0");
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw InvalidArgument("train_fraction must lie in (0, 1)");
    if (seeds.empty()) throw InvalidArgument("at least one seed is required");
    AttributeSchema schema(attributes);  // throws on an invalid schema
    (void)schema;
  }

  MethodSpec resolved() const {
    MethodSpec r = *this;
    r.validate();
    if (uses_alpha(method) && !r.alpha) r.alpha = MethodDefaults::alpha;
    if (uses_epsilon_annot(method) && !r.epsilon_annot) r.epsilon_annot = MethodDefaults::epsilon_annot;
    if (uses_epsilon_cluster(method) && !r.epsilon_cluster) r.epsilon_cluster = MethodDefaults::epsilon_cluster;
    if (uses_knn(method) && !r.knn_k) r.knn_k = MethodDefaults::knn_k;
    if (uses_bias_head(method) && !r.lambda) r.lambda = MethodDefaults::lambda;
    if (uses_beta0(method) && !r.beta0) r.beta0 = MethodDefaults::beta0;
    if (!uses_beta0(method) && !r.beta) r.beta = MethodDefaults::beta;
    return r;
  }

  TrainConfig train_config(std::uint64_t seed) const {
    TrainConfig c;
    c.beta = beta.value_or(0.0);
    c.lambda = lambda.value_or(0.0);
    c.learning_rate = learning_rate;
    c.epochs = epochs;
    c.batch_size = batch_size;
    c.seed = seed;
    c.bias_head_enabled = uses_bias_head(method);
    c.objective = bias_objective;
    c.l2_form = l2_form;
    c.hidden_dim = hidden_dim;
    return c;
  }
};

// JSON <-> MethodSpec ------------------------------------------------------

namespace detail {

inline std::string knn_scope_name(KnnScope s) { return s == KnnScope::global ? "global" : "per-label"; }
inline std::string beta_scope_name(BetaScope s) { return s == BetaScope::global ? "global" : "per-label"; }
inline std::string objective_name(BiasObjective o) { return o == BiasObjective::subtract ? "subtract" : "invert"; }
inline std::string l2_name(L2Form f) { return f == L2Form::squared ? "squared" : "plain"; }
inline std::string tokenizer_name(Tokenizer t) { return t == Tokenizer::lower_strip ? "lower-strip" : "whitespace"; }

template <class E>
E parse_choice(const std::string& key, const std::string& value,
               std::initializer_list<std::pair<const char*, E>> choices) {
  for (const auto& [name, v] : choices)
    if (value == name) return v;
  std::string allowed;
  for (const auto& [name, v] : choices) allowed += std::string(allowed.empty() ? "" : ", ") + name;
  throw InvalidArgument(key + ": '" + value + "' is not one of {" + allowed + "}");
}

}  // namespace detail

inline json to_json(const MethodSpec& s) {
  json j;
  j["method"] = method_name(s.method);
  if (!s.label.empty()) j["label"] = s.label;
  j["corpus"] = s.corpus;
  if (!s.test_corpus.empty()) j["test_corpus"] = s.test_corpus;
  j["embeddings"] = s.embeddings;
  if (!s.test_embeddings.empty()) j["test_embeddings"] = s.test_embeddings;
  j["train_fraction"] = s.train_fraction;
  j["seeds"] = s.seeds;
  if (s.alpha) j["alpha"] = *s.alpha;
  if (s.epsilon_annot) j["epsilon_annot"] = *s.epsilon_annot;
  if (s.epsilon_cluster) j["epsilon_cluster"] = *s.epsilon_cluster;
  if (s.knn_k) j["knn_k"] = *s.knn_k;
  if (uses_knn(s.method)) j["knn_scope"] = detail::knn_scope_name(s.knn_scope);
  if (s.beta) j["beta"] = *s.beta;
  if (s.beta0) j["beta0"] = *s.beta0;
  if (uses_beta0(s.method)) j["beta_scope"] = detail::beta_scope_name(s.beta_scope);
  if (s.lambda) j["lambda"] = *s.lambda;
  j["learning_rate"] = s.learning_rate;
  j["epochs"] = s.epochs;
  j["batch_size"] = s.batch_size;
  if (s.hidden_dim) j["hidden_dim"] = *s.hidden_dim;
  if (uses_bias_head(s.method)) j["bias_objective"] = detail::objective_name(s.bias_objective);
  j["l2_form"] = detail::l2_name(s.l2_form);
  if (uses_epsilon_cluster(s.method)) {
    j["kmeans_max_iter"] = s.kmeans.max_iter;
    j["kmeans_tol"] = s.kmeans.tol;
    j["kmeans_restarts"] = s.kmeans.restarts;
  }
  if (s.method == MethodId::basav) {
    j["classifier_epochs"] = s.classifier.epochs;
    j["classifier_learning_rate"] = s.classifier.learning_rate;
    j["classifier_batch_size"] = s.classifier.batch_size;
  }
  j["tokenizer"] = detail::tokenizer_name(s.tokenizer);
  json attrs = json::array();
  for (const auto& a : s.attributes) attrs.push_back({{"name", a.name}, {"values", a.values}});
  j["attributes"] = attrs;
  if (!s.labels.empty()) j["labels"] = s.labels;
  if (!s.units.empty()) j["units"] = s.units;
  j["evaluate_on"] = s.evaluate_on_all ? "all" : "test";
  return j;
}

/// Flat key space; unknown keys are rejected. Null values leave the default.
inline MethodSpec spec_from_json(const json& j) {
  if (!j.is_object()) throw InvalidArgument("config must be a JSON object");
  MethodSpec s;
  for (const auto& [key, v] : j.items()) {
    if (v.is_null()) continue;
    try {
      if (key == "method") s.method = parse_method(v.get<std::string>());
      else if (key == "label") s.label = v.get<std::string>();
      else if (key == "corpus") s.corpus = v.get<std::string>();
      else if (key == "test_corpus") s.test_corpus = v.get<std::string>();
      else if (key == "embeddings") s.embeddings = v.get<std::string>();
      else if (key == "test_embeddings") s.test_embeddings = v.get<std::string>();
      else if (key == "train_fraction") s.train_fraction = v.get<double>();
      else if (key == "seeds") s.seeds = v.is_array() ? v.get<std::vector<std::uint64_t>>()
                                                     : std::vector<std::uint64_t>{v.get<std::uint64_t>()};
      else if (key == "seed") s.seeds = {v.get<std::uint64_t>()};
      else if (key == "alpha") s.alpha = v.get<double>();
      else if (key == "epsilon_annot") s.epsilon_annot = v.get<double>();
      else if (key == "epsilon_cluster") s.epsilon_cluster = v.get<double>();
      else if (key == "knn_k") s.knn_k = v.get<std::size_t>();
      else if (key == "knn_scope")
        s.knn_scope = detail::parse_choice<KnnScope>(key, v.get<std::string>(),
                                                     {{"global", KnnScope::global}, {"per-label", KnnScope::per_label}});
      else if (key == "beta") s.beta = v.get<double>();
      else if (key == "beta0") s.beta0 = v.get<double>();
      else if (key == "beta_scope")
        s.beta_scope = detail::parse_choice<BetaScope>(key, v.get<std::string>(),
                                                       {{"per-label", BetaScope::per_label}, {"global", BetaScope::global}});
      else if (key == "lambda") s.lambda = v.get<double>();
      else if (key == "learning_rate") s.learning_rate = v.get<double>();
      else if (key == "epochs") s.epochs = v.get<std::size_t>();
      else if (key == "batch_size") s.batch_size = v.get<std::size_t>();
      else if (key == "hidden_dim") s.hidden_dim = v.get<std::size_t>();
      else if (key == "bias_objective")
        s.bias_objective = detail::parse_choice<BiasObjective>(
            key, v.get<std::string>(), {{"subtract", BiasObjective::subtract}, {"invert", BiasObjective::invert}});
      else if (key == "l2_form")
        s.l2_form = detail::parse_choice<L2Form>(key, v.get<std::string>(),
                                                 {{"squared", L2Form::squared}, {"plain", L2Form::plain}});
      else if (key == "kmeans_max_iter") s.kmeans.max_iter = v.get<std::size_t>();
      else if (key == "kmeans_tol") s.kmeans.tol = v.get<double>();
      else if (key == "kmeans_restarts") s.kmeans.restarts = v.get<std::size_t>();
      else if (key == "classifier_epochs") s.classifier.epochs = v.get<std::size_t>();
      else if (key == "classifier_learning_rate") s.classifier.learning_rate = v.get<double>();
      else if (key == "classifier_batch_size") s.classifier.batch_size = v.get<std::size_t>();
      else if (key == "tokenizer")
        s.tokenizer = detail::parse_choice<Tokenizer>(
            key, v.get<std::string>(), {{"lower-strip", Tokenizer::lower_strip}, {"whitespace", Tokenizer::whitespace}});
      else if (key == "attributes") {
        s.attributes.clear();
        for (const auto& a : v) s.attributes.push_back({a.at("name").get<std::string>(), a.at("values").get<std::vector<std::string>>()});
      } else if (key == "labels") s.labels = v.get<std::vector<std::string>>();
      else if (key == "units") s.units = v.get<std::vector<std::string>>();
      else if (key == "evaluate_on")
        s.evaluate_on_all = detail::parse_choice<bool>(key, v.get<std::string>(), {{"test", false}, {"all", true}});
      else throw InvalidArgument("unknown config key '" + key + "'");
    } catch (const json::exception& e) {
      throw InvalidArgument("config key '" + key + "': " + e.what());
    }
  }
  return s;
}

// Data loading --------------------------------------------------------------

/// Relative paths that do not exist are looked up under $FAIRSHOT_DATA_DIR.
inline std::filesystem::path resolve_input_path(const std::string& p) {
  std::filesystem::path path(p);
  if (path.is_relative() && !std::filesystem::exists(path))
    if (const char* dir = std::getenv("FAIRSHOT_DATA_DIR")) {
      auto alt = std::filesystem::path(dir) / path;
      if (std::filesystem::exists(alt)) return alt;
    }
  return path;
}

struct RunData {
  Corpus corpus;              // training pool (split per seed unless `test` is set)
  std::optional<Corpus> test;
};

inline RunData load_run_data(const MethodSpec& spec) {
  if (spec.corpus.empty()) throw StageError("load", "no corpus given");
  if (spec.embeddings.empty()) throw StageError("load", "no embeddings given");
  const AttributeSchema schema(spec.attributes);
  CorpusOptions opts{spec.tokenizer, spec.labels};
  const auto table = run_stage("load-embeddings", [&] { return load_embeddings(resolve_input_path(spec.embeddings)); });
  RunData data{run_stage("load-corpus", [&] { return load_corpus(resolve_input_path(spec.corpus), table, schema, opts); }),
               std::nullopt};
  if (!spec.test_corpus.empty()) {
    opts.labels = data.corpus.label_names;
    if (spec.test_embeddings.empty() || spec.test_embeddings == spec.embeddings) {
      data.test = run_stage("load-test-corpus",
                            [&] { return load_corpus(resolve_input_path(spec.test_corpus), table, schema, opts); });
    } else {
      const auto test_table =
          run_stage("load-test-embeddings", [&] { return load_embeddings(resolve_input_path(spec.test_embeddings)); });
      data.test = run_stage("load-test-corpus",
                            [&] { return load_corpus(resolve_input_path(spec.test_corpus), test_table, schema, opts); });
    }
  }
  return data;
}

// Pipeline ------------------------------------------------------------------

struct RunArtifacts {
  std::vector<PartitionAssignment> partitions;
  std::map<std::size_t, double> betas;  // BADR
  std::size_t bias_positive = 0;
  std::size_t train_size = 0;
  std::size_t seed_set_size = 0;
  std::optional<double> attribute_recovery;  // few-shot routes with hidden ground truth
  std::vector<EpochLoss> loss_trace;
};

struct RunResult {
  std::string method;  // display label
  MethodSpec config;   // resolved, single seed
  std::uint64_t seed = 0;
  EvalReport report;
  double wall_seconds = 0.0;
  RunArtifacts artifacts;
  MultiTaskModel model;
};

namespace detail {

enum Stream : std::uint64_t { kSplit = 1, kSeedSet = 2, kKMeans = 3, kClassifier = 4, kTrain = 5 };

inline std::vector<PartitionAssignment> cluster_groups(const Corpus& train, const MethodSpec& spec, std::uint64_t seed) {
  const std::size_t K = train.schema.combination_count();
  std::vector<PartitionAssignment> out;
  for (const auto& g : group_by_label(train))
    out.push_back(kmeans_partition(train, g, K, derive_seed(derive_seed(seed, kKMeans), g.label), spec.kmeans));
  return out;
}

inline std::vector<FairnessUnit> resolve_units(const MethodSpec& spec, const Corpus& test) {
  if (spec.units.empty()) return default_units(test);
  std::vector<FairnessUnit> out;
  for (const auto& u : spec.units) out.push_back(parse_unit(test, u));
  return out;
}

}  // namespace detail

/**
 * Run one method on an explicit train/test pair.
 *
 * BAC: primary head only. BADR: primary head only, per-label beta from the
 * k-means disparity. BAS: pseudo-labels from annotations. BACP: pseudo-labels
 * from per-label k-means. BASAV / BASAV-KNN: seed set annotations propagated
 * by a classifier / by k-NN, then pseudo-labels from the induced partition.
 */
inline RunResult run_method(const MethodSpec& spec_in, const Corpus& train, const Corpus& test, std::uint64_t seed) {
  const auto started = std::chrono::steady_clock::now();
  MethodSpec spec = spec_in.resolved();
  spec.seeds = {seed};
  RunResult res;
  res.method = spec.display_label();
  res.seed = seed;
  auto& art = res.artifacts;
  art.train_size = train.size();
  TrainConfig config = spec.train_config(derive_seed(seed, detail::kTrain));
  std::vector<std::uint8_t> bias_labels;

  auto from_partitions = [&] {
    auto labeling = run_stage("bias-labels", [&] {
      return bias_labels_from_partitions(art.partitions, *spec.epsilon_cluster, train.size());
    });
    bias_labels = std::move(labeling.labels);
  };

  auto few_shot = [&](bool knn) {
    auto seeds = run_stage("seed-set", [&] { return sample_seed_set(train, *spec.alpha, derive_seed(seed, detail::kSeedSet)); });
    art.seed_set_size = seeds.seed_set.size();
    std::vector<AttributeValues> inferred;
    if (!seeds.rest.empty()) {
      if (knn) {
        inferred = run_stage("knn-propagate", [&] { return knn_propagate(seeds.seed_set, seeds.rest, *spec.knn_k, spec.knn_scope); });
      } else {
        inferred = run_stage("attribute-classifier", [&] {
          ClassifierOptions opts = spec.classifier;
          opts.seed = derive_seed(seed, detail::kClassifier);
          const auto clf = train_attribute_classifier(seeds.seed_set, opts);
          return infer_attributes(clf, seeds.rest);
        });
      }
    }
    AttributeAssignments attrs(train.size());
    for (auto i : seeds.seed_indices) attrs[i] = train.instances[i].z;
    std::size_t hits = 0, total = 0;
    for (std::size_t r = 0; r < seeds.rest_indices.size(); ++r) {
      const auto i = seeds.rest_indices[r];
      attrs[i] = inferred[r];
      if (!train.instances[i].z) continue;
      for (std::size_t a = 0; a < inferred[r].size(); ++a) {
        hits += inferred[r][a] == (*train.instances[i].z)[a];
        ++total;
      }
    }
    if (total > 0) art.attribute_recovery = static_cast<double>(hits) / static_cast<double>(total);
    art.partitions = run_stage("partition", [&] {
      std::vector<PartitionAssignment> out;
      for (const auto& g : group_by_label(train)) out.push_back(attributes_to_partition(g, attrs, train.schema));
      return out;
    });
    from_partitions();
  };

  switch (spec.method) {
    case MethodId::bac:
      break;
    case MethodId::badr:
      art.partitions = run_stage("kmeans", [&] { return detail::cluster_groups(train, spec, seed); });
      art.betas = run_stage("dynamic-beta", [&] { return dynamic_beta(art.partitions, *spec.beta0, spec.beta_scope); });
      config.beta_per_label = art.betas;
      break;
    case MethodId::bas:
      bias_labels = run_stage("bias-labels", [&] { return bias_labels_from_annotations(train, *spec.epsilon_annot).labels; });
      break;
    case MethodId::bacp:
      art.partitions = run_stage("kmeans", [&] { return detail::cluster_groups(train, spec, seed); });
      from_partitions();
      break;
    case MethodId::basav:
      few_shot(false);
      break;
    case MethodId::basav_knn:
      few_shot(true);
      break;
  }
  art.bias_positive = static_cast<std::size_t>(std::count(bias_labels.begin(), bias_labels.end(), std::uint8_t{1}));

  auto trained = run_stage("train", [&] { return fairshot::train(train, bias_labels, config); });
  art.loss_trace = std::move(trained.trace);
  res.model = std::move(trained.model);
  if (!spec.hidden_dim) spec.hidden_dim = res.model.has_projection() ? res.model.hidden_dim() : 0;

  res.report = run_stage("evaluate", [&] {
    if (!spec.evaluate_on_all) {
      const auto units = detail::resolve_units(spec, test);
      return evaluate(res.model, test, units);
    }
    Corpus all{train.label_names, train.schema, train.instances};
    all.instances.insert(all.instances.end(), test.instances.begin(), test.instances.end());
    const auto units = detail::resolve_units(spec, all);
    return evaluate(res.model, all, units);
  });
  spec.units.clear();
  for (const auto& u : res.report.units) spec.units.push_back(u.name);
  res.config = std::move(spec);
  res.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return res;
}

/// Train/test pair for one seed: the explicit test corpus, or a stratified split.
inline std::pair<Corpus, Corpus> train_test_for_seed(const MethodSpec& spec, const RunData& data, std::uint64_t seed) {
  if (data.test) return {data.corpus, *data.test};
  auto s = run_stage("split", [&] { return split(data.corpus, spec.train_fraction, derive_seed(seed, detail::kSplit)); });
  return {std::move(s.train), std::move(s.test)};
}

inline RunResult run_method(const MethodSpec& spec, const RunData& data, std::uint64_t seed) {
  auto [train, test] = train_test_for_seed(spec, data, seed);
  return run_method(spec, train, test, seed);
}

// Persistence ----------------------------------------------------------------

inline json report_to_json(const EvalReport& r) {
  json units = json::array();
  for (const auto& u : r.units) {
    json ju{{"unit", u.name},
            {"F", u.fairness ? json(*u.fairness) : json(nullptr)},
            {"gamma", u.gamma ? json(*u.gamma) : json(nullptr)},
            {"predicted", u.counts.predicted},
            {"counts", u.counts.per_value}};
    units.push_back(std::move(ju));
  }
  return {{"accuracy", r.accuracy}, {"units", units}};
}

inline json result_to_json(const RunResult& r) {
  json parts = json::array();
  for (const auto& p : r.artifacts.partitions) parts.push_back({{"label", p.label}, {"sizes", p.sizes}});
  json betas = json::object();
  for (const auto& [label, b] : r.artifacts.betas) betas[std::to_string(label)] = b;
  json art{{"partitions", parts},
           {"betas", betas},
           {"bias_positive", r.artifacts.bias_positive},
           {"train_size", r.artifacts.train_size},
           {"seed_set_size", r.artifacts.seed_set_size},
           {"attribute_recovery",
            r.artifacts.attribute_recovery ? json(*r.artifacts.attribute_recovery) : json(nullptr)},
           {"epochs", r.artifacts.loss_trace.size()}};
  if (!r.artifacts.loss_trace.empty()) art["final_loss"] = r.artifacts.loss_trace.back().total;
  return {{"method", r.method},
          {"seed", r.seed},
          {"config", to_json(r.config)},
          {"report", report_to_json(r.report)},
          {"wall_seconds", r.wall_seconds},
          {"artifacts", art}};
}

/// Report rows as read back from a saved RunResult.
struct SavedReport {
  std::string method;
  double accuracy = 0.0;
  struct Unit {
    std::string name;
    std::optional<double> fairness;
    std::optional<double> gamma;
  };
  std::vector<Unit> units;
};

inline SavedReport saved_report_from_json(const json& j) {
  SavedReport r;
  try {
    r.method = j.at("method").get<std::string>();
    const auto& rep = j.at("report");
    r.accuracy = rep.at("accuracy").get<double>();
    for (const auto& u : rep.at("units")) {
      SavedReport::Unit su{u.at("unit").get<std::string>(), std::nullopt, std::nullopt};
      if (!u.at("F").is_null()) su.fairness = u.at("F").get<double>();
      if (!u.at("gamma").is_null()) su.gamma = u.at("gamma").get<double>();
      r.units.push_back(std::move(su));
    }
  } catch (const json::exception& e) {
    throw Error(std::string("not a run result: ") + e.what());
  }
  return r;
}

inline void write_saved_reports_csv(const std::vector<SavedReport>& reports, std::ostream& out) {
  out << kReportCsvHeader << '\n';
  for (const auto& r : reports)
    for (const auto& u : r.units)
      out << text::csv_escape(r.method) << ',' << text::format_fixed(r.accuracy, 6) << ',' << text::csv_escape(u.name)
          << ',' << format_metric(u.fairness) << ',' << format_metric(u.gamma) << '\n';
}

/// Aligned text table: one row per method, Acc then F and gamma per unit.
inline void write_saved_reports_table(const std::vector<SavedReport>& reports, std::ostream& out) {
  std::vector<std::string> units;
  for (const auto& r : reports)
    for (const auto& u : r.units)
      if (std::find(units.begin(), units.end(), u.name) == units.end()) units.push_back(u.name);

  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> top{"", ""}, head{"Method", "Acc"};
  for (const auto& u : units) {
    top.push_back("(" + u + ")");
    top.push_back("");
    head.push_back("F");
    head.push_back("gamma");
  }
  for (const auto& r : reports) {
    std::vector<std::string> row{r.method, text::format_fixed(r.accuracy, 4)};
    for (const auto& name : units) {
      auto it = std::find_if(r.units.begin(), r.units.end(), [&](const auto& u) { return u.name == name; });
      row.push_back(it == r.units.end() ? "-" : format_metric(it->fairness, 4));
      row.push_back(it == r.units.end() ? "-" : format_metric(it->gamma, 4));
    }
    rows.push_back(std::move(row));
  }
  std::vector<std::size_t> width(head.size(), 0);
  auto measure = [&](const std::vector<std::string>& row) {
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  };
  measure(head);
  for (const auto& r : rows) measure(r);
  // unit captions span their F and gamma columns
  for (std::size_t c = 2; c + 1 < top.size(); c += 2) {
    const std::size_t span = width[c] + 2 + width[c + 1];
    if (top[c].size() > span) width[c + 1] += top[c].size() - span;
  }
  auto emit = [&](const std::vector<std::string>& row, bool caption) {
    std::string line;
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (caption && c >= 2 && (c % 2) == 0) {
        const std::size_t span = width[c] + 2 + width[c + 1];
        std::string cell = row[c];
        cell.resize(span, ' ');
        line += cell;
        if (c + 2 < row.size()) line += "  ";
        ++c;
        continue;
      }
      std::string cell = row[c];
      if (c == 0) cell.resize(width[c], ' ');
      else cell = std::string(width[c] - std::min(width[c], cell.size()), ' ') + cell;
      line += cell;
      if (c + 1 < row.size()) line += "  ";
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    out << line << '\n';
  };
  emit(top, true);
  emit(head, false);
  for (const auto& r : rows) emit(r, false);
}

// Sweeps ---------------------------------------------------------------------

enum class SweepParam { alpha, epsilon_cluster, knn_k, beta, lambda };

inline SweepParam parse_sweep_param(std::string_view s) {
  if (s == "alpha") return SweepParam::alpha;
  if (s == "epsilon_cluster" || s == "epsilon-cluster") return SweepParam::epsilon_cluster;
  if (s == "knn_k" || s == "knn-k") return SweepParam::knn_k;
  if (s == "beta") return SweepParam::beta;
  if (s == "lambda") return SweepParam::lambda;
  throw InvalidArgument("unknown sweep parameter '" + std::string(s) + "'");
}

inline std::string sweep_param_name(SweepParam p) {
  switch (p) {
    case SweepParam::alpha: return "alpha";
    case SweepParam::epsilon_cluster: return "epsilon_cluster";
    case SweepParam::knn_k: return "knn_k";
    case SweepParam::beta: return "beta";
    case SweepParam::lambda: return "lambda";
  }
  return "?";
}

/// Copy of `spec` with the swept parameter set to `value`. For BADR, `beta`
/// addresses beta0.
inline MethodSpec with_parameter(MethodSpec spec, SweepParam p, double value) {
  const auto m = spec.method;
  auto inapplicable = [&] {
    return InvalidArgument("parameter " + sweep_param_name(p) + " is not applicable to " + method_name(m));
  };
  switch (p) {
    case SweepParam::alpha:
      if (!uses_alpha(m)) throw inapplicable();
      spec.alpha = value;
      break;
    case SweepParam::epsilon_cluster:
      if (!uses_epsilon_cluster(m)) throw inapplicable();
      spec.epsilon_cluster = value;
      break;
    case SweepParam::knn_k:
      if (!uses_knn(m)) throw inapplicable();
      if (value < 1.0 || value != std::floor(value)) throw InvalidArgument("knn_k values must be positive integers");
      spec.knn_k = static_cast<std::size_t>(value);
      break;
    case SweepParam::beta:
      if (uses_beta0(m)) spec.beta0 = value;
      else spec.beta = value;
      break;
    case SweepParam::lambda:
      if (!uses_bias_head(m)) throw inapplicable();
      spec.lambda = value;
      break;
  }
  return spec;
}

struct SweepRow {
  std::string kind;  // "run", "mean" or "stddev"
  double value = 0.0;
  std::string seed;  // empty for summary rows
  std::string unit;
  std::optional<double> accuracy;
  std::optional<double> fairness;
  std::optional<double> gamma;
  std::optional<double> bias_positive;
  std::optional<double> attribute_recovery;
};

struct SweepResult {
  std::string method;
  SweepParam parameter = SweepParam::alpha;
  std::vector<SweepRow> rows;
};

/// Seeds used for `repeats` repetitions: the spec's seeds, extended by
/// consecutive integers after the last one.
inline std::vector<std::uint64_t> repeat_seeds(const MethodSpec& spec, std::size_t repeats) {
  std::vector<std::uint64_t> out(spec.seeds.begin(), spec.seeds.begin() + static_cast<std::ptrdiff_t>(
                                                                            std::min(repeats, spec.seeds.size())));
  while (out.size() < repeats) out.push_back(out.empty() ? 1 : out.back() + 1);
  return out;
}

/// Runs every (value, seed) pair; `runner` performs one run.
template <class Runner>
SweepResult sweep(const MethodSpec& spec, SweepParam p, const std::vector<double>& values, std::size_t repeats,
                  Runner&& runner) {
  if (values.empty()) throw InvalidArgument("sweep: no values");
  if (repeats == 0) throw InvalidArgument("sweep: repeats must be positive");
  SweepResult out{spec.display_label(), p, {}};
  const auto seeds = repeat_seeds(spec, repeats);
  for (double v : values) {
    const MethodSpec point = with_parameter(spec, p, v);
    std::map<std::string, std::vector<SweepRow>> by_unit;
    std::vector<std::string> unit_order;
    for (auto seed : seeds) {
      const RunResult r = runner(point, seed);
      for (const auto& u : r.report.units) {
        SweepRow row{"run", v, std::to_string(seed), u.name, r.report.accuracy, u.fairness, u.gamma,
                     static_cast<double>(r.artifacts.bias_positive), r.artifacts.attribute_recovery};
        if (!by_unit.count(u.name)) unit_order.push_back(u.name);
        by_unit[u.name].push_back(row);
        out.rows.push_back(std::move(row));
      }
    }
    for (const auto& name : unit_order) {
      const auto& rows = by_unit[name];
      auto stats = [&](auto field) -> std::pair<std::optional<double>, std::optional<double>> {
        std::vector<double> xs;
        for (const auto& r : rows)
          if (const auto& v2 = r.*field) xs.push_back(*v2);
        if (xs.empty()) return {std::nullopt, std::nullopt};
        double mean = 0.0;
        for (double x : xs) mean += x;
        mean /= static_cast<double>(xs.size());
        double var = 0.0;
        for (double x : xs) var += (x - mean) * (x - mean);
        var = xs.size() > 1 ? var / static_cast<double>(xs.size() - 1) : 0.0;
        return {mean, std::sqrt(var)};
      };
      const auto acc = stats(&SweepRow::accuracy);
      const auto f = stats(&SweepRow::fairness);
      const auto g = stats(&SweepRow::gamma);
      const auto bp = stats(&SweepRow::bias_positive);
      const auto rec = stats(&SweepRow::attribute_recovery);
      out.rows.push_back({"mean", v, "", name, acc.first, f.first, g.first, bp.first, rec.first});
      out.rows.push_back({"stddev", v, "", name, acc.second, f.second, g.second, bp.second, rec.second});
    }
  }
  return out;
}

inline constexpr const char* kSweepCsvHeader =
    "kind,method,parameter,value,seed,unit,accuracy,F,gamma,bias_positive,attribute_recovery";

inline void write_sweep_csv(const SweepResult& s, std::ostream& out) {
  out << kSweepCsvHeader << '\n';
  for (const auto& r : s.rows)
    out << r.kind << ',' << text::csv_escape(s.method) << ',' << sweep_param_name(s.parameter) << ','
        << text::format_exact(r.value) << ',' << r.seed << ',' << text::csv_escape(r.unit) << ','
        << format_metric(r.accuracy) << ',' << format_metric(r.fairness) << ',' << format_metric(r.gamma) << ','
        << format_metric(r.bias_positive) << ',' << format_metric(r.attribute_recovery) << '\n';
}

}  // namespace fairshot

#endif  // FAIRSHOT_HARNESS_HPP

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

#ifndef FAIRSHOT_CORPUS_HPP
#define FAIRSHOT_CORPUS_HPP

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <cctype>
#include <utility>
#include <vector>

#include "fairshot/embeddings.hpp"
#include "fairshot/error.hpp"
#include "fairshot/rng.hpp"
#include "fairshot/text.hpp"

namespace fairshot {

struct Attribute {
  std::string name;
  std::vector<std::string> values;
};

/// One value id per attribute.
using AttributeValues = std::vector<std::size_t>;

/**
 * Ordered list of protected attributes Z_1..Z_M with cardinalities p_i.
 *
 * Attribute-value combinations are numbered row-major over the ordered lists,
 * giving a bijection onto {0, ..., K-1} with K = p_1 * ... * p_M.
 */
class AttributeSchema {
 public:
  explicit AttributeSchema(std::vector<Attribute> attributes)
      : attributes_(std::move(attributes)) {
    if (attributes_.empty()) throw InvalidArgument("schema needs at least one attribute");
    combinations_ = 1;
    for (std::size_t i = 0; i < attributes_.size(); ++i) {
      const auto& a = attributes_[i];
      if (a.values.size() < 2)
        throw InvalidArgument("attribute '" + a.name + "' needs at least two values");
      for (std::size_t j = 0; j < i; ++j)
        if (attributes_[j].name == a.name)
          throw InvalidArgument("duplicate attribute '" + a.name + "'");
      for (std::size_t v = 0; v < a.values.size(); ++v)
        for (std::size_t w = 0; w < v; ++w)
          if (a.values[v] == a.values[w])
            throw InvalidArgument("duplicate value '" + a.values[v] + "' in attribute '" +
                                  a.name + "'");
      combinations_ *= a.values.size();
    }
  }

  /// Gender {male, female} x race {European, African-American}.
  static AttributeSchema eec() {
    return AttributeSchema({{"gender", {"male", "female"}},
                            {"race", {"European", "African-American"}}});
  }

  std::size_t size() const noexcept { return attributes_.size(); }
  std::size_t cardinality(std::size_t i) const { return attributes_.at(i).values.size(); }
  std::size_t combination_count() const noexcept { return combinations_; }
  const Attribute& attribute(std::size_t i) const { return attributes_.at(i); }
  const std::vector<Attribute>& attributes() const noexcept { return attributes_; }

  std::optional<std::size_t> index_of(std::string_view name) const {
    for (std::size_t i = 0; i < attributes_.size(); ++i)
      if (attributes_[i].name == name) return i;
    return std::nullopt;
  }

  std::optional<std::size_t> value_index(std::size_t attribute, std::string_view value) const {
    const auto& vals = attributes_.at(attribute).values;
    for (std::size_t v = 0; v < vals.size(); ++v)
      if (vals[v] == value) return v;
    return std::nullopt;
  }

  bool valid(const AttributeValues& z) const {
    if (z.size() != attributes_.size()) return false;
    for (std::size_t i = 0; i < z.size(); ++i)
      if (z[i] >= attributes_[i].values.size()) return false;
    return true;
  }

  std::size_t combo_index(const AttributeValues& z) const {
    if (!valid(z)) throw InvalidArgument("attribute values outside the schema");
    std::size_t idx = 0;
    for (std::size_t i = 0; i < z.size(); ++i) idx = idx * attributes_[i].values.size() + z[i];
    return idx;
  }

  AttributeValues combo_values(std::size_t index) const {
    if (index >= combinations_) throw InvalidArgument("combination index out of range");
    AttributeValues z(attributes_.size());
    for (std::size_t i = attributes_.size(); i-- > 0;) {
      z[i] = index % attributes_[i].values.size();
      index /= attributes_[i].values.size();
    }
    return z;
  }

  friend bool operator==(const AttributeSchema& a, const AttributeSchema& b) {
    if (a.attributes_.size() != b.attributes_.size()) return false;
    for (std::size_t i = 0; i < a.attributes_.size(); ++i)
      if (a.attributes_[i].name != b.attributes_[i].name ||
          a.attributes_[i].values != b.attributes_[i].values)
        return false;
    return true;
  }

 private:
  std::vector<Attribute> attributes_;
  std::size_t combinations_ = 0;
};

struct Instance {
  std::vector<std::string> tokens;
  Vector x;
  std::size_t y = 0;
  std::optional<AttributeValues> z;
};

struct Corpus {
  std::vector<std::string> label_names;
  AttributeSchema schema;
  std::vector<Instance> instances;

  std::size_t label_count() const noexcept { return label_names.size(); }
  std::size_t size() const noexcept { return instances.size(); }
  bool empty() const noexcept { return instances.empty(); }

  std::size_t dimension() const {
    return instances.empty() ? 0 : static_cast<std::size_t>(instances.front().x.size());
  }

  bool fully_annotated() const {
    return std::all_of(instances.begin(), instances.end(),
                       [](const Instance& in) { return in.z.has_value(); });
  }

  std::optional<std::size_t> label_index(std::string_view name) const {
    for (std::size_t a = 0; a < label_names.size(); ++a)
      if (label_names[a] == name) return a;
    return std::nullopt;
  }

  /// Throws if a label id, attribute vector or dimension is inconsistent.
  void validate() const {
    const std::size_t d = dimension();
    for (std::size_t n = 0; n < instances.size(); ++n) {
      const auto& in = instances[n];
      if (in.y >= label_names.size())
        throw InvalidArgument("instance " + std::to_string(n) + " has label id " +
                              std::to_string(in.y) + " >= " + std::to_string(label_names.size()));
      if (static_cast<std::size_t>(in.x.size()) != d)
        throw DimensionMismatch("instance " + std::to_string(n), d,
                                static_cast<std::size_t>(in.x.size()));
      if (in.z && !schema.valid(*in.z))
        throw InvalidArgument("instance " + std::to_string(n) + " has attribute values outside the schema");
    }
  }

  Corpus subset(std::span<const std::size_t> indices) const {
    Corpus out{label_names, schema, {}};
    out.instances.reserve(indices.size());
    for (auto i : indices) out.instances.push_back(instances.at(i));
    return out;
  }
};

struct CorpusOptions {
  Tokenizer tokenizer = Tokenizer::lower_strip;
  /// Fixed label order; when empty, ids follow first appearance in the file.
  std::vector<std::string> labels;
};

struct CorpusLoadStats {
  EncodeStats encode;
  std::size_t annotated = 0;
};

/**
 * Read a corpus CSV with columns `sentence`, `label` and one column per
 * schema attribute. Attribute cells are either all filled (annotated row) or
 * all empty (unannotated row).
 */
inline Corpus parse_corpus(std::istream& in, std::string_view source,
                           const EmbeddingTable& table, const AttributeSchema& schema,
                           const CorpusOptions& options = {},
                           CorpusLoadStats* stats = nullptr) {
  CorpusLoadStats local;
  CorpusLoadStats& st = stats ? *stats : local;
  st = {};
  text::CsvReader reader(in, std::string(source));
  auto header = reader.next();
  if (!header) throw ParseError(source, 1, "empty corpus file");

  auto column = [&](std::string_view name) -> std::size_t {
    for (std::size_t i = 0; i < header->fields.size(); ++i)
      if (text::trim(header->fields[i]) == name) return i;
    throw ParseError(source, header->line, "missing required column '" + std::string(name) + "'");
  };
  const std::size_t sentence_col = column("sentence");
  const std::size_t label_col = column("label");
  std::vector<std::size_t> attr_cols;
  for (const auto& a : schema.attributes()) attr_cols.push_back(column(a.name));

  Corpus corpus{options.labels, schema, {}};
  const bool fixed_labels = !options.labels.empty();
  std::size_t row = 0;
  while (auto rec = reader.next()) {
    if (rec->fields.size() == 1 && text::trim(rec->fields[0]).empty()) continue;
    ++row;
    auto where = [&](std::string_view col) {
      return "row " + std::to_string(row) + " column '" + std::string(col) + "': ";
    };
    if (rec->fields.size() != header->fields.size())
      throw ParseError(source, rec->line,
                       "row " + std::to_string(row) + " has " + std::to_string(rec->fields.size()) +
                           " fields, header has " + std::to_string(header->fields.size()));

    Instance inst;
    const std::string label = text::trim(rec->fields[label_col]);
    if (label.empty()) throw ParseError(source, rec->line, where("label") + "empty label");
    if (auto id = corpus.label_index(label)) {
      inst.y = *id;
    } else if (fixed_labels) {
      throw ParseError(source, rec->line, where("label") + "unknown label '" + label + "'");
    } else {
      inst.y = corpus.label_names.size();
      corpus.label_names.push_back(label);
    }

    AttributeValues z(schema.size());
    std::size_t filled = 0;
    for (std::size_t i = 0; i < schema.size(); ++i) {
      const std::string value = text::trim(rec->fields[attr_cols[i]]);
      if (value.empty()) continue;
      const auto v = schema.value_index(i, value);
      if (!v)
        throw ParseError(source, rec->line,
                         where(schema.attribute(i).name) + "unknown value '" + value + "'");
      z[i] = *v;
      ++filled;
    }
    if (filled == schema.size()) {
      inst.z = std::move(z);
      ++st.annotated;
    } else if (filled != 0) {
      throw ParseError(source, rec->line,
                       "row " + std::to_string(row) + ": partially annotated attributes");
    }

    inst.tokens = tokenize(rec->fields[sentence_col], options.tokenizer);
    inst.x = encode_sentence(table, inst.tokens, &st.encode);
    corpus.instances.push_back(std::move(inst));
  }
  if (corpus.empty()) throw ParseError(source, header->line, "empty corpus");
  if (st.encode.out_of_vocabulary > 0)
    warn(std::string(source) + ": " + std::to_string(st.encode.out_of_vocabulary) + " of " +
         std::to_string(st.encode.tokens) + " tokens not in the embedding table");
  return corpus;
}

inline Corpus load_corpus(const std::filesystem::path& path, const EmbeddingTable& table,
                          const AttributeSchema& schema, const CorpusOptions& options = {},
                          CorpusLoadStats* stats = nullptr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open corpus file " + path.string());
  return parse_corpus(in, path.string(), table, schema, options, stats);
}

inline void write_corpus(const Corpus& corpus, std::ostream& out) {
  out << "sentence,label";
  for (const auto& a : corpus.schema.attributes()) out << ',' << text::csv_escape(a.name);
  out << '\n';
  for (const auto& in : corpus.instances) {
    std::string sentence;
    for (std::size_t t = 0; t < in.tokens.size(); ++t) {
      if (t) sentence.push_back(' ');
      sentence += in.tokens[t];
    }
    out << text::csv_escape(sentence) << ',' << text::csv_escape(corpus.label_names.at(in.y));
    for (std::size_t i = 0; i < corpus.schema.size(); ++i) {
      out << ',';
      if (in.z) out << text::csv_escape(corpus.schema.attribute(i).values.at((*in.z)[i]));
    }
    out << '\n';
  }
}

/// Table mapping each instance's single token to its vector. Used to export
/// generated corpora, whose sentences are one synthetic token each.
inline EmbeddingTable embeddings_from_corpus(const Corpus& corpus) {
  if (corpus.empty()) throw InvalidArgument("cannot export embeddings of an empty corpus");
  EmbeddingTable table(corpus.dimension());
  for (const auto& in : corpus.instances) {
    if (in.tokens.size() != 1)
      throw InvalidArgument("embeddings_from_corpus needs single-token sentences");
    table.insert(in.tokens.front(), in.x);
  }
  return table;
}

struct SplitResult {
  Corpus train;
  Corpus test;
  std::vector<std::size_t> train_indices;
  std::vector<std::size_t> test_indices;
};

/// Stratified by primary label: each label keeps floor(n * (1 - fraction))
/// instances for test, the remainder for train. Original order is preserved
/// within each side.
inline SplitResult split(const Corpus& corpus, double train_fraction, std::uint64_t seed) {
  if (corpus.empty()) throw InvalidArgument("cannot split an empty corpus");
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw InvalidArgument("train fraction must lie in (0, 1)");
  std::vector<std::vector<std::size_t>> by_label(corpus.label_count());
  for (std::size_t n = 0; n < corpus.size(); ++n) by_label.at(corpus.instances[n].y).push_back(n);

  Rng rng = make_rng(seed);
  std::vector<char> is_test(corpus.size(), 0);
  for (std::size_t a = 0; a < by_label.size(); ++a) {
    auto& idx = by_label[a];
    if (idx.empty()) continue;
    const auto n_test = static_cast<std::size_t>(
        std::floor(static_cast<double>(idx.size()) * (1.0 - train_fraction) + 1e-9));
    if (n_test == 0 || n_test == idx.size())
      throw InvalidArgument("train fraction " + text::format_exact(train_fraction) +
                            " leaves an empty side for label '" + corpus.label_names[a] + "' (" +
                            std::to_string(idx.size()) + " instances)");
    std::shuffle(idx.begin(), idx.end(), rng);
    for (std::size_t k = 0; k < n_test; ++k) is_test[idx[k]] = 1;
  }
  SplitResult out{Corpus{corpus.label_names, corpus.schema, {}},
                  Corpus{corpus.label_names, corpus.schema, {}}, {}, {}};
  for (std::size_t n = 0; n < corpus.size(); ++n) {
    (is_test[n] ? out.test_indices : out.train_indices).push_back(n);
    (is_test[n] ? out.test : out.train).instances.push_back(corpus.instances[n]);
  }
  return out;
}

struct SeedSetResult {
  Corpus seed_set;
  Corpus rest;  // annotations erased
  std::vector<std::size_t> seed_indices;
  std::vector<std::size_t> rest_indices;
};

/**
 * Reveal annotations for ceil(alpha * n) training instances.
 *
 * The quota is allocated over (label, attribute combination) cells by largest
 * remainder (ties to the lower cell), then drawn at random within each cell.
 */
inline SeedSetResult sample_seed_set(const Corpus& train, double alpha, std::uint64_t seed) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw InvalidArgument("alpha must lie in (0, 1]");
  if (!train.fully_annotated())
    throw InvalidArgument("seed-set sampling needs a fully annotated training corpus");
  const std::size_t n = train.size();
  const auto target = static_cast<std::size_t>(std::ceil(alpha * static_cast<double>(n) - 1e-9));

  const std::size_t K = train.schema.combination_count();
  std::map<std::size_t, std::vector<std::size_t>> cells;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& in = train.instances[i];
    cells[in.y * K + train.schema.combo_index(*in.z)].push_back(i);
  }

  struct Quota {
    std::size_t cell;
    std::size_t take;
    double remainder;
  };
  std::vector<Quota> quotas;
  std::size_t assigned = 0;
  for (const auto& [cell, members] : cells) {
    const double exact = alpha * static_cast<double>(members.size());
    const auto base = static_cast<std::size_t>(std::floor(exact + 1e-9));
    quotas.push_back({cell, base, exact - static_cast<double>(base)});
    assigned += base;
  }
  std::vector<std::size_t> order(quotas.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return quotas[a].remainder > quotas[b].remainder;
  });
  for (std::size_t k = 0; assigned < target && k < order.size(); ++k) {
    auto& q = quotas[order[k]];
    if (q.take < cells[q.cell].size()) {
      ++q.take;
      ++assigned;
    }
  }

  Rng rng = make_rng(seed);
  std::vector<char> chosen(n, 0);
  for (const auto& q : quotas) {
    auto members = cells[q.cell];
    std::shuffle(members.begin(), members.end(), rng);
    for (std::size_t k = 0; k < q.take; ++k) chosen[members[k]] = 1;
  }

  SeedSetResult out{Corpus{train.label_names, train.schema, {}},
                    Corpus{train.label_names, train.schema, {}}, {}, {}};
  for (std::size_t i = 0; i < n; ++i) {
    if (chosen[i]) {
      out.seed_indices.push_back(i);
      out.seed_set.instances.push_back(train.instances[i]);
    } else {
      out.rest_indices.push_back(i);
      Instance hidden = train.instances[i];
      hidden.z.reset();
      out.rest.instances.push_back(std::move(hidden));
    }
  }
  return out;
}

/**
 * Parameters of the planted-cluster generator.
 *
 * Every (label, attribute combination) cell gets an isotropic Gaussian around
 * its own centre (label_separation/sqrt2) e_a + (separation/sqrt2) e_{c+j}, so
 * cells sharing a label sit `separation` apart and cells sharing a combination
 * sit `label_separation` apart. Requires dimension >= labels + K.
 */
struct SyntheticSpec {
  std::size_t labels = 4;
  AttributeSchema schema = AttributeSchema::eec();
  std::size_t per_cell = 50;
  double separation = 10.0;
  std::optional<double> label_separation;  // defaults to separation
  double sigma = 1.0;
  /// 0: uniform combinations within every biased label; 1: all of a biased
  /// label's instances fall in its designated combination (label id mod K).
  double bias = 0.0;
  std::vector<std::size_t> biased_labels = {0};
  std::size_t dimension = 10;
  std::vector<std::string> label_names;  // defaults to emotion names for c=4
  std::string token_prefix;              // lowercase alphanumeric; defaults to "s<seed>n"
};

inline std::vector<std::size_t> synthetic_cell_counts(const SyntheticSpec& spec, std::size_t label) {
  const std::size_t K = spec.schema.combination_count();
  std::vector<std::size_t> counts(K, spec.per_cell);
  if (std::find(spec.biased_labels.begin(), spec.biased_labels.end(), label) ==
      spec.biased_labels.end())
    return counts;
  const std::size_t total = spec.per_cell * K;
  const auto others = static_cast<std::size_t>(
      std::llround(static_cast<double>(total) * (1.0 - spec.bias) / static_cast<double>(K)));
  std::fill(counts.begin(), counts.end(), others);
  counts[label % K] = total - (K - 1) * others;
  return counts;
}

inline Corpus make_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
  const std::size_t c = spec.labels;
  const std::size_t K = spec.schema.combination_count();
  const double label_sep = spec.label_separation.value_or(spec.separation);
  if (c < 2) throw InvalidArgument("synthetic corpus needs at least two labels");
  if (spec.per_cell == 0) throw InvalidArgument("per_cell must be positive");
  if (!(spec.separation >= 0.0) || !(label_sep >= 0.0) || !(spec.sigma >= 0.0))
    throw InvalidArgument("separations and sigma must be non-negative");
  if (!(spec.bias >= 0.0 && spec.bias <= 1.0)) throw InvalidArgument("bias must lie in [0, 1]");
  if (spec.dimension < c + K)
    throw InvalidArgument("dimension " + std::to_string(spec.dimension) + " is below labels + K = " +
                          std::to_string(c + K));
  for (auto a : spec.biased_labels)
    if (a >= c) throw InvalidArgument("biased label id out of range");
  if (!spec.label_names.empty() && spec.label_names.size() != c)
    throw InvalidArgument("label_names must list one name per label");
  // tokens must survive either tokenizer unchanged
  for (char ch : spec.token_prefix) {
    const auto u = static_cast<unsigned char>(ch);
    if (!std::isdigit(u) && !(std::isalpha(u) && std::islower(u)))
      throw InvalidArgument("token_prefix '" + spec.token_prefix + "' must be lowercase alphanumeric");
  }

  std::vector<std::string> names = spec.label_names;
  if (names.empty()) {
    if (c == 4) {
      names = {"fear", "joy", "sadness", "anger"};
    } else {
      for (std::size_t a = 0; a < c; ++a) names.push_back("label" + std::to_string(a));
    }
  }
  const std::string prefix =
      spec.token_prefix.empty() ? "s" + std::to_string(seed) + "n" : spec.token_prefix;

  const auto d = static_cast<Eigen::Index>(spec.dimension);
  const double scale = 1.0 / std::sqrt(2.0);
  Rng rng = make_rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  Corpus corpus{names, spec.schema, {}};
  std::size_t serial = 0;
  for (std::size_t a = 0; a < c; ++a) {
    const auto counts = synthetic_cell_counts(spec, a);
    for (std::size_t j = 0; j < K; ++j) {
      Vector centre = Vector::Zero(d);
      centre[static_cast<Eigen::Index>(a)] = label_sep * scale;
      centre[static_cast<Eigen::Index>(c + j)] = spec.separation * scale;
      for (std::size_t k = 0; k < counts[j]; ++k) {
        Instance in;
        in.x = centre;
        for (Eigen::Index t = 0; t < d; ++t) in.x[t] += spec.sigma * noise(rng);
        in.y = a;
        in.z = spec.schema.combo_values(j);
        in.tokens = {prefix + std::to_string(serial++)};
        corpus.instances.push_back(std::move(in));
      }
    }
  }
  return corpus;
}

}  // namespace fairshot

#endif  // FAIRSHOT_CORPUS_HPP

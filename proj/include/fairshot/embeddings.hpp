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

#ifndef FAIRSHOT_EMBEDDINGS_HPP
#define FAIRSHOT_EMBEDDINGS_HPP

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "fairshot/error.hpp"
#include "fairshot/text.hpp"

namespace fairshot {

using Vector = Eigen::VectorXd;

/// Word -> dense vector map. The dimension is fixed at construction.
class EmbeddingTable {
 public:
  using Map = std::map<std::string, Vector, std::less<>>;

  explicit EmbeddingTable(std::size_t dimension) : dimension_(dimension) {
    if (dimension == 0) throw InvalidArgument("embedding dimension must be positive");
  }

  std::size_t dimension() const noexcept { return dimension_; }
  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }

  /// Returns true if an existing entry was replaced.
  bool insert(std::string token, Vector v) {
    if (static_cast<std::size_t>(v.size()) != dimension_)
      throw DimensionMismatch("embedding for '" + token + "'", dimension_,
                              static_cast<std::size_t>(v.size()));
    auto [it, inserted] = entries_.insert_or_assign(std::move(token), std::move(v));
    return !inserted;
  }

  const Vector* find(std::string_view token) const {
    auto it = entries_.find(token);
    return it == entries_.end() ? nullptr : &it->second;
  }

  bool contains(std::string_view token) const { return find(token) != nullptr; }

  const Map& entries() const noexcept { return entries_; }

 private:
  std::size_t dimension_;
  Map entries_;
};

struct EmbeddingLoadStats {
  std::size_t declared_count = 0;  // from the header, 0 when absent
  std::size_t rows = 0;
  std::size_t duplicates = 0;
  bool had_header = false;
};

namespace detail {

inline std::vector<std::string_view> fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    const std::size_t b = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r') ++i;
    if (i > b) out.push_back(line.substr(b, i - b));
  }
  return out;
}

}  // namespace detail

/// Parse the word2vec text format. The "<count> <dimension>" header line is
/// optional; without it the dimension is taken from the first row.
inline EmbeddingTable parse_embeddings(std::istream& in, std::string_view source,
                                       EmbeddingLoadStats* stats = nullptr) {
  EmbeddingLoadStats local;
  EmbeddingLoadStats& st = stats ? *stats : local;
  st = {};

  std::string line;
  std::size_t lineno = 0;
  std::vector<std::string_view> f;
  while (f.empty()) {
    if (!std::getline(in, line)) throw ParseError(source, lineno, "empty embedding file");
    ++lineno;
    f = detail::fields(line);
  }

  std::size_t dim = 0;
  const auto count = f.size() == 2 ? text::parse_size(f[0]) : std::nullopt;
  const auto hdim = f.size() == 2 ? text::parse_size(f[1]) : std::nullopt;
  std::string pending;  // first line when it is already a data row
  if (count && hdim) {
    if (*hdim == 0) throw ParseError(source, lineno, "malformed header: zero dimension");
    dim = *hdim;
    st.declared_count = *count;
    st.had_header = true;
  } else {
    if (f.size() < 2) throw ParseError(source, lineno, "malformed header");
    dim = f.size() - 1;
    pending = line;
  }

  EmbeddingTable table(dim);
  auto add_row = [&](std::string_view row, std::size_t at) {
    const auto parts = detail::fields(row);
    if (parts.empty()) return;
    if (parts.size() != dim + 1)
      throw ParseError(source, at,
                       "row for '" + std::string(parts[0]) + "' has " +
                           std::to_string(parts.size() - 1) + " values, expected " +
                           std::to_string(dim));
    Vector v(static_cast<Eigen::Index>(dim));
    for (std::size_t k = 0; k < dim; ++k) {
      const auto x = text::parse_double(parts[k + 1]);
      if (!x || !std::isfinite(*x))
        throw ParseError(source, at, "bad number '" + std::string(parts[k + 1]) + "'");
      v[static_cast<Eigen::Index>(k)] = *x;
    }
    ++st.rows;
    if (table.insert(std::string(parts[0]), std::move(v))) {
      ++st.duplicates;
      warn(std::string(source) + ":" + std::to_string(at) + ": duplicate token '" +
           std::string(parts[0]) + "', keeping the last vector");
    }
  };

  if (!pending.empty()) add_row(pending, lineno);
  while (std::getline(in, line)) {
    ++lineno;
    add_row(line, lineno);
  }
  if (table.empty()) throw ParseError(source, lineno, "no embedding rows");
  if (st.had_header && st.declared_count != st.rows)
    warn(std::string(source) + ": header declares " + std::to_string(st.declared_count) +
         " rows, found " + std::to_string(st.rows));
  return table;
}

inline EmbeddingTable load_embeddings(const std::filesystem::path& path,
                                      EmbeddingLoadStats* stats = nullptr) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open embeddings file " + path.string());
  return parse_embeddings(in, path.string(), stats);
}

/// Writes the header form; values use the shortest round-trip representation.
inline void write_embeddings(const EmbeddingTable& table, std::ostream& out) {
  out << table.size() << ' ' << table.dimension() << '\n';
  for (const auto& [token, v] : table.entries()) {
    out << token;
    for (Eigen::Index k = 0; k < v.size(); ++k) out << ' ' << text::format_exact(v[k]);
    out << '\n';
  }
}

enum class Tokenizer {
  lower_strip,  // lowercase, punctuation removed, split on whitespace
  whitespace,   // split on whitespace only
};

inline std::vector<std::string> tokenize(std::string_view sentence,
                                         Tokenizer mode = Tokenizer::lower_strip) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : sentence) {
    const auto uc = static_cast<unsigned char>(c);
    if (std::isspace(uc)) {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
      continue;
    }
    if (mode == Tokenizer::lower_strip) {
      if (std::ispunct(uc)) continue;
      cur.push_back(static_cast<char>(std::tolower(uc)));
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

struct EncodeStats {
  std::size_t tokens = 0;
  std::size_t out_of_vocabulary = 0;
};

/// Sum of the vectors of in-vocabulary tokens; unknown tokens are skipped and
/// an empty or fully unknown sentence encodes to the zero vector.
inline Vector encode_sentence(const EmbeddingTable& table,
                              std::span<const std::string> tokens,
                              EncodeStats* stats = nullptr) {
  Vector sum = Vector::Zero(static_cast<Eigen::Index>(table.dimension()));
  for (const auto& tok : tokens) {
    if (stats) ++stats->tokens;
    if (const Vector* v = table.find(tok)) {
      sum += *v;
    } else if (stats) {
      ++stats->out_of_vocabulary;
    }
  }
  return sum;
}

/// 1 - cos(u, v), in [0, 2]. Defined as 1 when either vector has zero norm.
inline double cosine_distance(const Vector& u, const Vector& v) {
  if (u.size() != v.size())
    throw DimensionMismatch("cosine_distance", static_cast<std::size_t>(u.size()),
                            static_cast<std::size_t>(v.size()));
  const double nu = u.norm();
  const double nv = v.norm();
  if (nu == 0.0 || nv == 0.0) return 1.0;
  const double cos = std::clamp(u.dot(v) / (nu * nv), -1.0, 1.0);
  return 1.0 - cos;
}

}  // namespace fairshot

#endif  // FAIRSHOT_EMBEDDINGS_HPP

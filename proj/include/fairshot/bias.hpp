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

#ifndef FAIRSHOT_BIAS_HPP
#define FAIRSHOT_BIAS_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "fairshot/corpus.hpp"
#include "fairshot/error.hpp"
#include "fairshot/partition.hpp"

namespace fairshot {

/// A (primary label, attribute value) pair: y = label and Z_attribute = value.
struct BiasUnit {
  std::size_t label = 0;
  std::size_t attribute = 0;
  std::size_t value = 0;

  friend bool operator==(const BiasUnit&, const BiasUnit&) = default;
};

struct FlaggedCluster {
  std::size_t label = 0;
  std::size_t cluster = 0;

  friend bool operator==(const FlaggedCluster&, const FlaggedCluster&) = default;
};

/**
 * Per-instance binary bias pseudo-labels over a training corpus.
 *
 * An instance is labelled 1 iff it belongs to a flagged cluster (partition
 * route) or holds the value of a flagged unit matching its own label
 * (annotation route).
 */
struct BiasLabeling {
  double epsilon = 0.0;
  std::vector<std::uint8_t> labels;  // indexed by corpus instance
  std::vector<FlaggedCluster> flagged_clusters;
  std::vector<BiasUnit> flagged_units;

  std::size_t positives() const {
    return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), std::uint8_t{1}));
  }
};

/// Fraction of the group holding value `unit.value` for attribute `unit.attribute`.
inline double posterior_fraction(const LabelGroup& group, const Corpus& corpus, const BiasUnit& unit) {
  if (group.members.empty()) throw InvalidArgument("posterior_fraction: empty label group");
  if (unit.attribute >= corpus.schema.size() || unit.value >= corpus.schema.cardinality(unit.attribute))
    throw InvalidArgument("posterior_fraction: bias unit outside the schema");
  std::size_t hits = 0;
  for (auto i : group.members) {
    const auto& in = corpus.instances.at(i);
    if (!in.z) throw InvalidArgument("posterior_fraction: instance " + std::to_string(i) + " is not annotated");
    if ((*in.z)[unit.attribute] == unit.value) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(group.members.size());
}

inline int bias_indicator_annotated(const LabelGroup& group, const Corpus& corpus, const BiasUnit& unit,
                                    double epsilon) {
  return posterior_fraction(group, corpus, unit) >= epsilon ? 1 : 0;
}

/// |size_j - floor(n/K)| / floor(n/K) for every cluster j.
inline std::vector<double> cluster_disparity(const PartitionAssignment& partition) {
  if (partition.K == 0) throw InvalidArgument("cluster_disparity: K must be positive");
  const std::size_t uniform = partition.total() / partition.K;
  if (uniform == 0)
    throw InvalidArgument("cluster_disparity: group of " + std::to_string(partition.total()) +
                          " instances is smaller than K=" + std::to_string(partition.K));
  std::vector<double> out(partition.K);
  for (std::size_t j = 0; j < partition.K; ++j) {
    const double shift = std::abs(static_cast<double>(partition.sizes[j]) - static_cast<double>(uniform));
    out[j] = shift / static_cast<double>(uniform);
  }
  return out;
}

/// Flag every cluster whose disparity reaches `epsilon`, over several label
/// groups of one corpus of `corpus_size` instances.
inline BiasLabeling bias_labels_from_partitions(std::span<const PartitionAssignment> partitions,
                                                double epsilon, std::size_t corpus_size) {
  BiasLabeling out;
  out.epsilon = epsilon;
  out.labels.assign(corpus_size, 0);
  for (const auto& p : partitions) {
    const auto disparity = cluster_disparity(p);
    for (std::size_t j = 0; j < p.K; ++j)
      if (disparity[j] >= epsilon) out.flagged_clusters.push_back({p.label, j});
    for (std::size_t k = 0; k < p.members.size(); ++k) {
      if (p.members[k] >= corpus_size) throw InvalidArgument("partition member outside the corpus");
      out.labels[p.members[k]] = disparity[p.clusters[k]] >= epsilon ? 1 : 0;
    }
  }
  return out;
}

inline BiasLabeling bias_labels_from_partition(const PartitionAssignment& partition, double epsilon,
                                               std::size_t corpus_size) {
  return bias_labels_from_partitions(std::span<const PartitionAssignment>(&partition, 1), epsilon,
                                     corpus_size);
}

/// Same, for a partition whose members index a corpus of exactly its own size.
inline BiasLabeling bias_labels_from_partition(const PartitionAssignment& partition, double epsilon) {
  std::size_t n = 0;
  for (auto m : partition.members) n = std::max(n, m + 1);
  return bias_labels_from_partition(partition, epsilon, n);
}

/// Annotation route: every (label, attribute, value) unit with posterior
/// fraction >= epsilon is flagged; an instance is 1 iff any of its own units is.
inline BiasLabeling bias_labels_from_annotations(const Corpus& corpus, double epsilon) {
  BiasLabeling out;
  out.epsilon = epsilon;
  out.labels.assign(corpus.size(), 0);
  const auto& schema = corpus.schema;
  for (const auto& group : group_by_label(corpus)) {
    std::vector<std::vector<char>> flagged(schema.size());
    for (std::size_t i = 0; i < schema.size(); ++i) {
      flagged[i].assign(schema.cardinality(i), 0);
      for (std::size_t v = 0; v < schema.cardinality(i); ++v) {
        const BiasUnit unit{group.label, i, v};
        if (bias_indicator_annotated(group, corpus, unit, epsilon)) {
          flagged[i][v] = 1;
          out.flagged_units.push_back(unit);
        }
      }
    }
    for (auto m : group.members) {
      const auto& z = *corpus.instances[m].z;
      for (std::size_t i = 0; i < schema.size(); ++i)
        if (flagged[i][z[i]]) out.labels[m] = 1;
    }
  }
  return out;
}

enum class BetaScope { per_label, global };

/// beta0 times the largest cluster disparity, per label (or the maximum over
/// all labels, applied to every label, for `global`).
inline std::map<std::size_t, double> dynamic_beta(std::span<const PartitionAssignment> partitions,
                                                  double beta0, BetaScope scope = BetaScope::per_label) {
  if (!(beta0 >= 0.0)) throw InvalidArgument("dynamic_beta: beta0 must be non-negative");
  std::map<std::size_t, double> out;
  double global = 0.0;
  for (const auto& p : partitions) {
    const auto disparity = cluster_disparity(p);
    const double worst = *std::max_element(disparity.begin(), disparity.end());
    out[p.label] = beta0 * worst;
    global = std::max(global, beta0 * worst);
  }
  if (scope == BetaScope::global)
    for (auto& [label, beta] : out) beta = global;
  return out;
}

}  // namespace fairshot

#endif  // FAIRSHOT_BIAS_HPP

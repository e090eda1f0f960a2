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

#ifndef FAIRSHOT_PARTITION_HPP
#define FAIRSHOT_PARTITION_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fairshot/corpus.hpp"
#include "fairshot/embeddings.hpp"
#include "fairshot/error.hpp"
#include "fairshot/rng.hpp"

namespace fairshot {

/// All corpus instances carrying primary label `label`.
struct LabelGroup {
  std::size_t label = 0;
  std::vector<std::size_t> members;  // corpus instance indices, ascending
};

/// Groups for every label that occurs in the corpus, in label-id order.
inline std::vector<LabelGroup> group_by_label(const Corpus& corpus) {
  std::vector<LabelGroup> all(corpus.label_count());
  for (std::size_t a = 0; a < all.size(); ++a) all[a].label = a;
  for (std::size_t n = 0; n < corpus.size(); ++n) all.at(corpus.instances[n].y).members.push_back(n);
  std::vector<LabelGroup> out;
  for (auto& g : all)
    if (!g.members.empty()) out.push_back(std::move(g));
  return out;
}

/**
 * Hard partition of one label group into K parts. `members[k]` is placed in
 * cluster `clusters[k]`; `sizes[j]` counts the members of cluster j.
 */
struct PartitionAssignment {
  std::size_t label = 0;
  std::size_t K = 0;
  std::vector<std::size_t> members;
  std::vector<std::size_t> clusters;
  std::vector<std::size_t> sizes;

  std::size_t total() const noexcept { return members.size(); }

  static PartitionAssignment from_clusters(std::size_t label, std::size_t K,
                                           std::vector<std::size_t> members,
                                           std::vector<std::size_t> clusters) {
    if (members.size() != clusters.size())
      throw InvalidArgument("partition: members and clusters differ in length");
    PartitionAssignment p{label, K, std::move(members), std::move(clusters),
                          std::vector<std::size_t>(K, 0)};
    for (auto j : p.clusters) {
      if (j >= K) throw InvalidArgument("partition: cluster id out of range");
      ++p.sizes[j];
    }
    return p;
  }
};

struct KMeansOptions {
  std::size_t max_iter = 100;
  double tol = 1e-6;
  std::size_t restarts = 10;  // independent seedings; the lowest final objective wins
};

struct KMeansResult {
  PartitionAssignment partition;  // members are 0..n-1 (input order)
  std::vector<Vector> centroids;
  std::vector<double> objective;  // within-cluster sum of squares per iteration
  std::size_t iterations = 0;
  bool converged = false;
};

namespace detail {

inline std::size_t nearest_centroid(const Vector& x, const std::vector<Vector>& centroids) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < centroids.size(); ++j) {
    const double d = (x - centroids[j]).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = j;
    }
  }
  return best;
}

inline double within_cluster_ss(std::span<const Vector> pts, const std::vector<std::size_t>& assign,
                                const std::vector<Vector>& centroids) {
  double s = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) s += (pts[i] - centroids[assign[i]]).squaredNorm();
  return s;
}

}  // namespace detail

/**
 * Lloyd's algorithm with Euclidean distance and D^2-weighted seeding.
 *
 * Stops when the assignment no longer changes, when the largest centroid
 * move drops below `tol`, or after `max_iter` iterations. A cluster that
 * becomes empty takes over the point farthest from its own centroid, so the
 * result always has exactly K non-empty parts.
 */
namespace detail {

inline KMeansResult kmeans_once(std::span<const Vector> pts, std::size_t K, std::uint64_t seed,
                                const KMeansOptions& options) {
  const std::size_t n = pts.size();
  if (K == 0) throw InvalidArgument("kmeans: K must be positive");
  if (n < K)
    throw InvalidArgument("kmeans: " + std::to_string(n) + " points cannot fill " +
                          std::to_string(K) + " clusters");
  const auto d = pts[0].size();
  for (const auto& p : pts)
    if (p.size() != d)
      throw DimensionMismatch("kmeans", static_cast<std::size_t>(d), static_cast<std::size_t>(p.size()));

  Rng rng = make_rng(seed);
  std::vector<Vector> centroids;
  centroids.reserve(K);
  std::vector<char> chosen(n, 0);
  {
    const std::size_t first = uniform_index(rng, n);
    chosen[first] = 1;
    centroids.push_back(pts[first]);
    std::vector<double> d2(n);
    for (std::size_t i = 0; i < n; ++i) d2[i] = (pts[i] - pts[first]).squaredNorm();
    while (centroids.size() < K) {
      double total = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        if (!chosen[i]) total += d2[i];
      std::size_t pick = n;
      if (total > 0.0) {
        const double r = uniform_real(rng, 0.0, total);
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          if (chosen[i] || d2[i] <= 0.0) continue;
          acc += d2[i];
          pick = i;
          if (acc > r) break;
        }
      } else {
        std::vector<std::size_t> free;
        for (std::size_t i = 0; i < n; ++i)
          if (!chosen[i]) free.push_back(i);
        pick = free[uniform_index(rng, free.size())];
      }
      chosen[pick] = 1;
      centroids.push_back(pts[pick]);
      for (std::size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], (pts[i] - pts[pick]).squaredNorm());
    }
  }

  KMeansResult res;
  std::vector<std::size_t> assign(n, K);
  std::vector<std::size_t> sizes(K, 0);
  for (std::size_t iter = 0; iter < options.max_iter; ++iter) {
    bool changed = false;
    std::fill(sizes.begin(), sizes.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t j = detail::nearest_centroid(pts[i], centroids);
      if (j != assign[i]) changed = true;
      assign[i] = j;
      ++sizes[j];
    }

    for (std::size_t e = 0; e < K; ++e) {
      if (sizes[e] != 0) continue;
      std::size_t far = n;
      double far_d = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (sizes[assign[i]] <= 1) continue;
        const double dd = (pts[i] - centroids[assign[i]]).squaredNorm();
        if (dd > far_d) {
          far_d = dd;
          far = i;
        }
      }
      --sizes[assign[far]];
      assign[far] = e;
      sizes[e] = 1;
      centroids[e] = pts[far];
      changed = true;
    }

    double movement = 0.0;
    for (std::size_t j = 0; j < K; ++j) {
      Vector mean = Vector::Zero(d);
      for (std::size_t i = 0; i < n; ++i)
        if (assign[i] == j) mean += pts[i];
      mean /= static_cast<double>(sizes[j]);
      movement = std::max(movement, (mean - centroids[j]).norm());
      centroids[j] = std::move(mean);
    }
    res.objective.push_back(detail::within_cluster_ss(pts, assign, centroids));
    res.iterations = iter + 1;
    if (!changed || movement < options.tol) {
      res.converged = true;
      break;
    }
  }

  std::vector<std::size_t> members(n);
  for (std::size_t i = 0; i < n; ++i) members[i] = i;
  res.partition = PartitionAssignment::from_clusters(0, K, std::move(members), std::move(assign));
  res.centroids = std::move(centroids);
  return res;
}

}  // namespace detail

/// Restart r > 0 seeds from derive_seed(seed, r); restarts = 1 is a single run.
inline KMeansResult kmeans(std::span<const Vector> pts, std::size_t K, std::uint64_t seed,
                           const KMeansOptions& options = {}) {
  if (options.restarts == 0 || options.max_iter == 0)
    throw InvalidArgument("kmeans: restarts and max_iter must be positive");
  KMeansResult best = detail::kmeans_once(pts, K, seed, options);
  for (std::size_t r = 1; r < options.restarts; ++r) {
    KMeansResult next = detail::kmeans_once(pts, K, derive_seed(seed, r), options);
    if (next.objective.back() < best.objective.back()) best = std::move(next);
  }
  return best;
}

/// K-means over the sentence vectors of one label group; members keep their
/// corpus indices.
inline PartitionAssignment kmeans_partition(const Corpus& corpus, const LabelGroup& group,
                                            std::size_t K, std::uint64_t seed,
                                            const KMeansOptions& options = {}) {
  std::vector<Vector> pts;
  pts.reserve(group.members.size());
  for (auto i : group.members) pts.push_back(corpus.instances.at(i).x);
  auto res = kmeans(pts, K, seed, options);
  return PartitionAssignment::from_clusters(group.label, K, group.members,
                                            std::move(res.partition.clusters));
}

enum class KnnScope { global, per_label };

/**
 * Assign each `rest` instance the per-attribute majority value of its k
 * cosine-nearest seeds (distance ties go to the lower seed index). A split
 * vote goes to the value held by the nearest neighbour among the tied ones.
 * With `per_label`, only seeds sharing the instance's label are candidates
 * (falling back to all seeds when the label has none).
 */
inline std::vector<AttributeValues> knn_propagate(const Corpus& seed_set, const Corpus& rest,
                                                  std::size_t k,
                                                  KnnScope scope = KnnScope::global) {
  if (seed_set.empty()) throw InvalidArgument("knn_propagate: empty seed set");
  if (!seed_set.fully_annotated()) throw InvalidArgument("knn_propagate: seed set is not annotated");
  if (k == 0) throw InvalidArgument("knn_propagate: k must be positive");
  const auto& schema = seed_set.schema;
  if (!rest.empty() && rest.dimension() != seed_set.dimension())
    throw DimensionMismatch("knn_propagate", seed_set.dimension(), rest.dimension());

  std::vector<std::size_t> all(seed_set.size());
  for (std::size_t s = 0; s < all.size(); ++s) all[s] = s;
  std::vector<std::vector<std::size_t>> by_label(seed_set.label_count());
  for (std::size_t s = 0; s < seed_set.size(); ++s) by_label.at(seed_set.instances[s].y).push_back(s);

  bool warned_clamp = false;
  bool warned_fallback = false;
  std::vector<AttributeValues> out;
  out.reserve(rest.size());
  std::vector<std::pair<double, std::size_t>> cand;
  for (const auto& q : rest.instances) {
    const std::vector<std::size_t>* pool = &all;
    if (scope == KnnScope::per_label) {
      if (q.y < by_label.size() && !by_label[q.y].empty()) {
        pool = &by_label[q.y];
      } else if (!warned_fallback) {
        warn("knn_propagate: no seeds for label '" + rest.label_names.at(q.y) +
             "', using all seeds");
        warned_fallback = true;
      }
    }
    std::size_t kk = k;
    if (kk > pool->size()) {
      if (!warned_clamp) {
        warn("knn_propagate: k=" + std::to_string(k) + " exceeds " + std::to_string(pool->size()) +
             " candidate seeds, clamping");
        warned_clamp = true;
      }
      kk = pool->size();
    }
    cand.clear();
    for (auto s : *pool) cand.emplace_back(cosine_distance(q.x, seed_set.instances[s].x), s);
    std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(kk), cand.end());

    AttributeValues z(schema.size());
    for (std::size_t i = 0; i < schema.size(); ++i) {
      std::vector<std::size_t> votes(schema.cardinality(i), 0);
      for (std::size_t r = 0; r < kk; ++r) ++votes[(*seed_set.instances[cand[r].second].z)[i]];
      const std::size_t top = *std::max_element(votes.begin(), votes.end());
      for (std::size_t r = 0; r < kk; ++r) {
        const std::size_t v = (*seed_set.instances[cand[r].second].z)[i];
        if (votes[v] == top) {
          z[i] = v;
          break;
        }
      }
    }
    out.push_back(std::move(z));
  }
  return out;
}

/// One multinomial linear model per attribute: softmax(W_i x + b_i).
struct AttributeClassifier {
  std::vector<Eigen::MatrixXd> weights;  // p_i x d
  std::vector<Vector> biases;            // p_i

  std::size_t dimension() const {
    return weights.empty() ? 0 : static_cast<std::size_t>(weights.front().cols());
  }

  Vector probabilities(std::size_t attribute, const Vector& x) const {
    Vector z = weights.at(attribute) * x + biases.at(attribute);
    z.array() -= z.maxCoeff();
    z = z.array().exp();
    return z / z.sum();
  }
};

struct ClassifierOptions {
  std::size_t epochs = 200;
  double learning_rate = 0.01;
  std::size_t batch_size = 32;
  std::uint64_t seed = 1;
};

/// Mini-batch gradient descent on cross-entropy, zero-initialised; batches
/// are reshuffled every epoch from `options.seed`.
inline AttributeClassifier train_attribute_classifier(const Corpus& seed_set,
                                                      const ClassifierOptions& options = {}) {
  if (seed_set.empty()) throw InvalidArgument("attribute classifier: empty seed set");
  if (!seed_set.fully_annotated()) throw InvalidArgument("attribute classifier: seed set is not annotated");
  if (options.batch_size == 0 || options.epochs == 0 || !(options.learning_rate > 0.0))
    throw InvalidArgument("attribute classifier: invalid optimiser settings");
  const auto& schema = seed_set.schema;
  const auto d = static_cast<Eigen::Index>(seed_set.dimension());
  const std::size_t n = seed_set.size();

  for (std::size_t i = 0; i < schema.size(); ++i) {
    std::vector<char> seen(schema.cardinality(i), 0);
    std::size_t distinct = 0;
    for (const auto& in : seed_set.instances)
      if (!seen[(*in.z)[i]]++) ++distinct;
    if (distinct < 2)
      throw InvalidArgument("attribute classifier: degenerate training set, attribute '" +
                            schema.attribute(i).name + "' has a single observed value");
  }

  AttributeClassifier clf;
  Rng rng = make_rng(options.seed);
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < schema.size(); ++i) {
    const auto p = static_cast<Eigen::Index>(schema.cardinality(i));
    Eigen::MatrixXd W = Eigen::MatrixXd::Zero(p, d);
    Vector b = Vector::Zero(p);
    for (std::size_t e = 0; e < options.epochs; ++e) {
      for (std::size_t k = 0; k < n; ++k) order[k] = k;
      std::shuffle(order.begin(), order.end(), rng);
      for (std::size_t start = 0; start < n; start += options.batch_size) {
        const std::size_t stop = std::min(n, start + options.batch_size);
        Eigen::MatrixXd gW = Eigen::MatrixXd::Zero(p, d);
        Vector gb = Vector::Zero(p);
        for (std::size_t k = start; k < stop; ++k) {
          const auto& in = seed_set.instances[order[k]];
          Vector z = W * in.x + b;
          z.array() -= z.maxCoeff();
          z = z.array().exp();
          z /= z.sum();
          z[static_cast<Eigen::Index>((*in.z)[i])] -= 1.0;
          gW.noalias() += z * in.x.transpose();
          gb += z;
        }
        const double scale = options.learning_rate / static_cast<double>(stop - start);
        W -= scale * gW;
        b -= scale * gb;
      }
    }
    clf.weights.push_back(std::move(W));
    clf.biases.push_back(std::move(b));
  }
  return clf;
}

/// Argmax class per attribute; ties go to the lowest value id.
inline std::vector<AttributeValues> infer_attributes(const AttributeClassifier& clf,
                                                     const Corpus& rest) {
  std::vector<AttributeValues> out;
  out.reserve(rest.size());
  for (const auto& in : rest.instances) {
    if (static_cast<std::size_t>(in.x.size()) != clf.dimension())
      throw DimensionMismatch("infer_attributes", clf.dimension(), static_cast<std::size_t>(in.x.size()));
    AttributeValues z(clf.weights.size());
    for (std::size_t i = 0; i < clf.weights.size(); ++i) {
      const Vector logits = clf.weights[i] * in.x + clf.biases[i];
      Eigen::Index best = 0;
      for (Eigen::Index v = 1; v < logits.size(); ++v)
        if (logits[v] > logits[best]) best = v;
      z[i] = static_cast<std::size_t>(best);
    }
    out.push_back(std::move(z));
  }
  return out;
}

/// Attribute values per corpus instance; empty where unknown.
using AttributeAssignments = std::vector<std::optional<AttributeValues>>;

/// Cluster id of each member = combo_index of its attribute combination.
inline PartitionAssignment attributes_to_partition(const LabelGroup& group,
                                                   const AttributeAssignments& attrs,
                                                   const AttributeSchema& schema) {
  std::vector<std::size_t> clusters;
  clusters.reserve(group.members.size());
  for (auto i : group.members) {
    if (i >= attrs.size() || !attrs[i])
      throw InvalidArgument("attributes_to_partition: instance " + std::to_string(i) +
                            " has no attribute assignment");
    clusters.push_back(schema.combo_index(*attrs[i]));
  }
  return PartitionAssignment::from_clusters(group.label, schema.combination_count(), group.members,
                                            std::move(clusters));
}

}  // namespace fairshot

#endif  // FAIRSHOT_PARTITION_HPP

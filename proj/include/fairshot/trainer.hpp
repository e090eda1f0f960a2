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

#ifndef FAIRSHOT_TRAINER_HPP
#define FAIRSHOT_TRAINER_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fairshot/corpus.hpp"
#include "fairshot/error.hpp"
#include "fairshot/rng.hpp"
#include "fairshot/text.hpp"

namespace fairshot {

/**
 * Two-head linear model.
 *
 * Both heads read the representation h = W x, or h = x when the model has no
 * shared projection. The primary head gives softmax(P h + p) over c labels;
 * the bias head gives sigmoid(B . h + b0).
 */
struct MultiTaskModel {
  Eigen::MatrixXd projection;       // k x d, empty when absent
  Eigen::MatrixXd primary_weights;  // c x k
  Vector primary_bias;              // c
  Vector bias_weights;              // k
  double bias_offset = 0.0;

  std::size_t labels() const { return static_cast<std::size_t>(primary_weights.rows()); }
  std::size_t hidden_dim() const { return static_cast<std::size_t>(primary_weights.cols()); }
  bool has_projection() const { return projection.size() != 0; }
  std::size_t input_dim() const {
    return has_projection() ? static_cast<std::size_t>(projection.cols()) : hidden_dim();
  }

  bool finite() const {
    return projection.allFinite() && primary_weights.allFinite() && primary_bias.allFinite() &&
           bias_weights.allFinite() && std::isfinite(bias_offset);
  }

  MultiTaskModel zeros_like() const {
    MultiTaskModel z;
    z.projection = Eigen::MatrixXd::Zero(projection.rows(), projection.cols());
    z.primary_weights = Eigen::MatrixXd::Zero(primary_weights.rows(), primary_weights.cols());
    z.primary_bias = Vector::Zero(primary_bias.size());
    z.bias_weights = Vector::Zero(bias_weights.size());
    return z;
  }
};

enum class BiasObjective {
  /// L = CE_p - lambda CE(b); trained as a minimax in which the bias head
  /// descends its own cross-entropy while the rest of the model descends L.
  subtract,
  /// L = CE_p + lambda CE(1 - b); every parameter descends L.
  invert,
};

enum class L2Form { squared, plain };

struct TrainConfig {
  double beta = 1e-3;
  std::map<std::size_t, double> beta_per_label;  // overrides `beta` when non-empty
  double lambda = 1.0;
  double learning_rate = 0.05;
  std::size_t epochs = 300;
  std::size_t batch_size = 32;
  std::uint64_t seed = 1;
  bool bias_head_enabled = true;
  BiasObjective objective = BiasObjective::subtract;
  L2Form l2_form = L2Form::squared;
  std::optional<std::size_t> hidden_dim;  // unset: input dimension; 0: no projection

  double beta_for(std::size_t label) const {
    if (beta_per_label.empty()) return beta;
    auto it = beta_per_label.find(label);
    return it == beta_per_label.end() ? 0.0 : it->second;
  }

  void validate() const {
    if (!(learning_rate > 0.0) || epochs == 0 || batch_size == 0)
      throw InvalidArgument("train config: learning rate, epochs and batch size must be positive");
    if (!(beta >= 0.0) || !(lambda >= 0.0)) throw InvalidArgument("train config: beta and lambda must be >= 0");
    for (const auto& [label, b] : beta_per_label)
      if (!(b >= 0.0)) throw InvalidArgument("train config: per-label beta must be >= 0");
  }
};

/// Weights uniform in +-1/sqrt(fan_in), biases zero. Draw order: projection,
/// primary head, bias head.
inline MultiTaskModel init_model(std::size_t c, std::size_t d, std::uint64_t seed,
                                 std::optional<std::size_t> hidden_dim = std::nullopt) {
  if (c < 2 || d < 1) throw InvalidArgument("init_model: need c >= 2 and d >= 1");
  const std::size_t k = hidden_dim.value_or(d);
  const std::size_t width = k == 0 ? d : k;
  Rng rng = make_rng(seed);
  auto fill = [&](Eigen::MatrixXd& m, std::size_t fan_in) {
    const double r = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = uniform_real(rng, -r, r);
  };
  MultiTaskModel m;
  if (k != 0) {
    m.projection.resize(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(d));
    fill(m.projection, d);
  }
  m.primary_weights.resize(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(width));
  fill(m.primary_weights, width);
  m.primary_bias = Vector::Zero(static_cast<Eigen::Index>(c));
  Eigen::MatrixXd bw(static_cast<Eigen::Index>(width), 1);
  fill(bw, width);
  m.bias_weights = bw.col(0);
  m.bias_offset = 0.0;
  return m;
}

namespace detail {

inline constexpr double kLogFloor = -27.631021115928547;  // log(1e-12)

inline double softplus(double u) { return std::max(u, 0.0) + std::log1p(std::exp(-std::abs(u))); }

inline double sigmoid(double s) {
  if (s >= 0.0) return 1.0 / (1.0 + std::exp(-s));
  const double e = std::exp(s);
  return e / (1.0 + e);
}

inline void check_input(const MultiTaskModel& model, const Vector& x) {
  if (static_cast<std::size_t>(x.size()) != model.input_dim())
    throw DimensionMismatch("model input", model.input_dim(), static_cast<std::size_t>(x.size()));
  if (!x.allFinite()) throw InvalidArgument("model input contains non-finite values");
}

inline Eigen::MatrixXd features(const MultiTaskModel& model, const Eigen::MatrixXd& X) {
  return model.has_projection() ? Eigen::MatrixXd(model.projection * X) : X;
}

}  // namespace detail

inline Vector primary_logits(const MultiTaskModel& model, const Vector& x) {
  detail::check_input(model, x);
  if (model.has_projection()) return model.primary_weights * (model.projection * x) + model.primary_bias;
  return model.primary_weights * x + model.primary_bias;
}

/// Softmax over the primary logits (max-shifted).
inline Vector forward_primary(const MultiTaskModel& model, const Vector& x) {
  Vector z = primary_logits(model, x);
  z.array() -= z.maxCoeff();
  z = z.array().exp();
  return z / z.sum();
}

inline double forward_bias(const MultiTaskModel& model, const Vector& x) {
  detail::check_input(model, x);
  const double s = model.has_projection() ? model.bias_weights.dot(model.projection * x) + model.bias_offset
                                          : model.bias_weights.dot(x) + model.bias_offset;
  return detail::sigmoid(s);
}

/// Mean loss components over a batch. `bias` is the bias head's
/// cross-entropy against the pseudo-labels themselves, whatever the objective.
struct LossTerms {
  double primary = 0.0;
  double bias = 0.0;
  double regularization = 0.0;
  double total = 0.0;
  std::size_t clamped = 0;  // log arguments floored at 1e-12
};

/**
 * Mean loss and its gradient with respect to every parameter over the
 * columns of X (d x m).
 *
 * Per instance: -log p_a + lambda * s * CE_b(t) + beta_a * R(P), where
 * (s, t) = (-1, b) for subtract and (+1, 1-b) for invert, and R is ||P||_F^2
 * or ||P||_F. Logs are floored at log(1e-12), with zero gradient when floored.
 */
inline MultiTaskModel batch_loss_gradient(const MultiTaskModel& model, const Eigen::MatrixXd& X,
                                          std::span<const std::size_t> labels,
                                          std::span<const std::uint8_t> bias_labels,
                                          const TrainConfig& config, LossTerms* terms = nullptr) {
  const auto m = X.cols();
  const auto c = static_cast<Eigen::Index>(model.labels());
  if (static_cast<std::size_t>(X.rows()) != model.input_dim())
    throw DimensionMismatch("model input", model.input_dim(), static_cast<std::size_t>(X.rows()));
  if (static_cast<std::size_t>(m) != labels.size() || m == 0)
    throw InvalidArgument("batch_loss_gradient: labels do not match the batch");
  const bool use_bias = config.bias_head_enabled;
  if (use_bias && bias_labels.size() != labels.size())
    throw InvalidArgument("batch_loss_gradient: bias labels do not match the batch");
  const double inv_m = 1.0 / static_cast<double>(m);

  const Eigen::MatrixXd H = detail::features(model, X);
  Eigen::MatrixXd Z = model.primary_weights * H;
  Z.colwise() += model.primary_bias;

  LossTerms t;
  Eigen::MatrixXd Gz(c, m);
  double beta_sum = 0.0;
  for (Eigen::Index i = 0; i < m; ++i) {
    const auto a = labels[static_cast<std::size_t>(i)];
    if (a >= model.labels()) throw InvalidArgument("label id " + std::to_string(a) + " >= label count");
    beta_sum += config.beta_for(a);
    auto z = Z.col(i);
    const double mx = z.maxCoeff();
    const double lse = mx + std::log((z.array() - mx).exp().sum());
    double logp = z[static_cast<Eigen::Index>(a)] - lse;
    auto g = Gz.col(i);
    if (logp < detail::kLogFloor) {
      logp = detail::kLogFloor;
      ++t.clamped;
      g.setZero();
    } else {
      g = (z.array() - lse).exp();
      g[static_cast<Eigen::Index>(a)] -= 1.0;
    }
    t.primary -= logp;
  }
  Gz *= inv_m;
  t.primary *= inv_m;
  const double beta_mean = beta_sum * inv_m;

  MultiTaskModel grad = model.zeros_like();
  grad.primary_weights.noalias() = Gz * H.transpose();
  grad.primary_bias = Gz.rowwise().sum();

  const double pnorm = model.primary_weights.norm();
  if (config.l2_form == L2Form::squared) {
    t.regularization = beta_mean * pnorm * pnorm;
    grad.primary_weights += 2.0 * beta_mean * model.primary_weights;
  } else {
    t.regularization = beta_mean * pnorm;
    if (pnorm > 0.0) grad.primary_weights += (beta_mean / pnorm) * model.primary_weights;
  }

  Eigen::MatrixXd dH = model.primary_weights.transpose() * Gz;
  double signed_bias = 0.0;
  if (use_bias) {
    const bool invert = config.objective == BiasObjective::invert;
    const double coef = config.lambda * (invert ? 1.0 : -1.0);
    Eigen::RowVectorXd Gs(m);
    for (Eigen::Index i = 0; i < m; ++i) {
      const double s = model.bias_weights.dot(H.col(i)) + model.bias_offset;
      const double b = bias_labels[static_cast<std::size_t>(i)] ? 1.0 : 0.0;
      const double q = detail::sigmoid(s);
      const double log_q = std::max(-detail::softplus(-s), detail::kLogFloor);
      const double log_1q = std::max(-detail::softplus(s), detail::kLogFloor);
      t.bias -= b > 0.5 ? log_q : log_1q;

      const double target = invert ? 1.0 - b : b;
      const bool floored = target > 0.5 ? -detail::softplus(-s) < detail::kLogFloor
                                        : -detail::softplus(s) < detail::kLogFloor;
      const double ce_target = target > 0.5 ? -log_q : -log_1q;
      signed_bias += coef * ce_target;
      if (floored) {
        ++t.clamped;
        Gs[i] = 0.0;
      } else {
        Gs[i] = coef * (q - target) * inv_m;
      }
    }
    t.bias *= inv_m;
    signed_bias *= inv_m;
    grad.bias_weights = H * Gs.transpose();
    grad.bias_offset = Gs.sum();
    dH.noalias() += model.bias_weights * Gs;
  }
  if (model.has_projection()) grad.projection.noalias() = dH * X.transpose();

  t.total = t.primary + signed_bias + t.regularization;
  if (terms) *terms = t;
  return grad;
}

inline LossTerms loss_terms(const MultiTaskModel& model, const Vector& x, std::size_t a, int b,
                            const TrainConfig& config) {
  detail::check_input(model, x);
  const std::size_t labels[1] = {a};
  const std::uint8_t biases[1] = {static_cast<std::uint8_t>(b ? 1 : 0)};
  LossTerms t;
  batch_loss_gradient(model, x, labels, biases, config, &t);
  return t;
}

/// Per-instance loss; see batch_loss_gradient for the exact form.
inline double loss(const MultiTaskModel& model, const Vector& x, std::size_t a, int b,
                   const TrainConfig& config) {
  return loss_terms(model, x, a, b, config).total;
}

inline MultiTaskModel loss_gradient(const MultiTaskModel& model, const Vector& x, std::size_t a, int b,
                                    const TrainConfig& config) {
  detail::check_input(model, x);
  const std::size_t labels[1] = {a};
  const std::uint8_t biases[1] = {static_cast<std::uint8_t>(b ? 1 : 0)};
  return batch_loss_gradient(model, x, labels, biases, config);
}

struct EpochLoss {
  std::size_t epoch = 0;
  double primary_loss = 0.0;
  double bias_loss = 0.0;
  double total = 0.0;
};

struct TrainResult {
  MultiTaskModel model;
  std::vector<EpochLoss> trace;  // means accumulated over each epoch's batches
  std::size_t clamped = 0;
};

/**
 * Mini-batch gradient descent over `epochs` reshuffled passes.
 *
 * Initialisation draws from stream 0 of `config.seed`, shuffling from stream
 * 1, so runs are bitwise reproducible. Under the subtract objective the bias
 * head moves against the gradient sign used for the rest of the model.
 */
inline TrainResult train(const Corpus& corpus, std::span<const std::uint8_t> bias_labels,
                         const TrainConfig& config) {
  config.validate();
  if (corpus.empty()) throw InvalidArgument("train: empty corpus");
  corpus.validate();
  const std::size_t n = corpus.size();
  if (config.bias_head_enabled && bias_labels.size() != n)
    throw InvalidArgument("train: bias labels cover " + std::to_string(bias_labels.size()) + " of " +
                          std::to_string(n) + " instances");

  TrainResult res;
  res.model = init_model(corpus.label_count(), corpus.dimension(), config.seed, config.hidden_dim);
  auto& model = res.model;
  Rng rng = make_rng(config.seed, 1);
  const bool adversary = config.bias_head_enabled && config.objective == BiasObjective::subtract;

  std::vector<std::size_t> order(n);
  const auto d = static_cast<Eigen::Index>(corpus.dimension());
  Eigen::MatrixXd X;
  std::vector<std::size_t> labels;
  std::vector<std::uint8_t> biases;
  for (std::size_t e = 0; e < config.epochs; ++e) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    EpochLoss ep{e + 1, 0.0, 0.0, 0.0};
    for (std::size_t start = 0; start < n; start += config.batch_size) {
      const std::size_t stop = std::min(n, start + config.batch_size);
      const auto m = static_cast<Eigen::Index>(stop - start);
      X.resize(d, m);
      labels.clear();
      biases.clear();
      for (std::size_t k = start; k < stop; ++k) {
        const auto& in = corpus.instances[order[k]];
        X.col(static_cast<Eigen::Index>(k - start)) = in.x;
        labels.push_back(in.y);
        if (config.bias_head_enabled) biases.push_back(bias_labels[order[k]]);
      }
      LossTerms t;
      const MultiTaskModel g = batch_loss_gradient(model, X, labels, biases, config, &t);
      const double w = static_cast<double>(m) / static_cast<double>(n);
      ep.primary_loss += w * t.primary;
      ep.bias_loss += w * t.bias;
      ep.total += w * t.total;
      res.clamped += t.clamped;

      const double lr = config.learning_rate;
      if (model.has_projection()) model.projection -= lr * g.projection;
      model.primary_weights -= lr * g.primary_weights;
      model.primary_bias -= lr * g.primary_bias;
      const double head_lr = adversary ? -lr : lr;
      model.bias_weights -= head_lr * g.bias_weights;
      model.bias_offset -= head_lr * g.bias_offset;
    }
    res.trace.push_back(ep);
    if (!model.finite()) throw Error("training diverged at epoch " + std::to_string(e + 1));
  }
  return res;
}

inline std::size_t predict_one(const MultiTaskModel& model, const Vector& x) {
  const Vector z = primary_logits(model, x);
  Eigen::Index best = 0;
  for (Eigen::Index j = 1; j < z.size(); ++j)
    if (z[j] > z[best]) best = j;
  return static_cast<std::size_t>(best);
}

/// Argmax label per instance, ties to the lowest id.
inline std::vector<std::size_t> predict(const MultiTaskModel& model, const Corpus& corpus) {
  std::vector<std::size_t> out;
  out.reserve(corpus.size());
  for (const auto& in : corpus.instances) out.push_back(predict_one(model, in.x));
  return out;
}

inline void write_loss_trace(const std::vector<EpochLoss>& trace, std::ostream& out) {
  out << "epoch,primary_loss,bias_loss,total\n";
  for (const auto& e : trace)
    out << e.epoch << ',' << text::format_exact(e.primary_loss) << ',' << text::format_exact(e.bias_loss)
        << ',' << text::format_exact(e.total) << '\n';
}

// Checkpoint format, version 1 (plain text):
//   fairshot-model 1
//   labels <c> input <d> hidden <k>      (hidden 0 = no projection)
//   projection / primary_weights / primary_bias / bias_weights / bias_offset
//   sections, each followed by its rows of space-separated values.

inline void write_model(const MultiTaskModel& model, std::ostream& out) {
  auto rows = [&](const char* name, const Eigen::MatrixXd& m) {
    out << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) out << (j ? " " : "") << text::format_exact(m(i, j));
      out << '\n';
    }
  };
  out << "fairshot-model 1\n";
  out << "labels " << model.labels() << " input " << model.input_dim() << " hidden "
      << (model.has_projection() ? model.hidden_dim() : 0) << '\n';
  rows("projection", model.projection);
  rows("primary_weights", model.primary_weights);
  rows("primary_bias", model.primary_bias.transpose());
  rows("bias_weights", model.bias_weights.transpose());
  out << "bias_offset " << text::format_exact(model.bias_offset) << '\n';
}

inline MultiTaskModel read_model(std::istream& in) {
  std::string word;
  int version = 0;
  if (!(in >> word >> version) || word != "fairshot-model") throw Error("not a fairshot model checkpoint");
  if (version != 1) throw Error("unsupported checkpoint version " + std::to_string(version));
  std::size_t c = 0, d = 0, k = 0;
  std::string w1, w2, w3;
  if (!(in >> w1 >> c >> w2 >> d >> w3 >> k) || w1 != "labels" || w2 != "input" || w3 != "hidden")
    throw Error("malformed checkpoint header");
  auto section = [&](const char* name, Eigen::Index rows, Eigen::Index cols) {
    std::string tag;
    Eigen::Index r = 0, cc = 0;
    if (!(in >> tag >> r >> cc) || tag != name || r != rows || cc != cols)
      throw Error(std::string("malformed checkpoint section ") + name);
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j) {
        std::string tok;
        in >> tok;
        const auto v = text::parse_double(tok);
        if (!v) throw Error(std::string("bad value in checkpoint section ") + name);
        m(i, j) = *v;
      }
    return m;
  };
  const auto C = static_cast<Eigen::Index>(c);
  const auto D = static_cast<Eigen::Index>(d);
  const auto Kh = static_cast<Eigen::Index>(k == 0 ? d : k);
  MultiTaskModel m;
  m.projection = section("projection", k == 0 ? 0 : Kh, k == 0 ? 0 : D);
  m.primary_weights = section("primary_weights", C, Kh);
  m.primary_bias = section("primary_bias", 1, C).row(0).transpose();
  m.bias_weights = section("bias_weights", 1, Kh).row(0).transpose();
  std::string tag, tok;
  if (!(in >> tag >> tok) || tag != "bias_offset") throw Error("malformed checkpoint: bias_offset");
  const auto off = text::parse_double(tok);
  if (!off) throw Error("malformed checkpoint: bias_offset");
  m.bias_offset = *off;
  if (!m.finite()) throw Error("checkpoint contains non-finite parameters");
  return m;
}

}  // namespace fairshot

#endif  // FAIRSHOT_TRAINER_HPP

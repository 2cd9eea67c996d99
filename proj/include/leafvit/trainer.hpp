#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "leafvit/cnn.hpp"
#include "leafvit/errors.hpp"
#include "leafvit/rng.hpp"

namespace leafvit {

struct TrainConfig {
  double learning_rate = 0.001;
  std::size_t batch_size = 32;
  std::size_t max_epochs = 50;
  std::size_t patience = 25;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps_adam = 1e-8;
  std::uint64_t seed = 0;
  double train_frac = 0.8;
  double val_frac = 0.1;
  double test_frac = 0.1;

  void validate() const {
    if (!(train_frac > 0.0 && val_frac > 0.0 && test_frac > 0.0))
      throw UsageError("split fractions must all be positive");
    if (std::abs(train_frac + val_frac + test_frac - 1.0) > 1e-9)
      throw UsageError("split fractions must sum to 1");
    if (patience > max_epochs)
      throw UsageError("patience must not exceed max_epochs");
    if (batch_size == 0 || max_epochs == 0)
      throw UsageError("batch_size and max_epochs must be >= 1");
    if (!(learning_rate > 0.0)) throw UsageError("learning rate must be > 0");
  }
};

// First/second moment accumulators, one pair per parameter tensor.
struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::uint64_t t = 0;

  static AdamState like(const std::vector<std::span<double>>& params) {
    AdamState s;
    s.m.reserve(params.size());
    s.v.reserve(params.size());
    for (const auto& p : params) {
      s.m.emplace_back(p.size(), 0.0);
      s.v.emplace_back(p.size(), 0.0);
    }
    return s;
  }
};

// One bias-corrected Adam update over all parameter tensors.
inline void adam_step(std::vector<std::span<double>> params,
                      std::vector<std::span<const double>> grads,
                      AdamState& state, const TrainConfig& cfg) {
  if (params.size() != grads.size() || params.size() != state.m.size())
    throw ShapeError("adam_step: tensor count mismatch");
  state.t += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i];
    auto g = grads[i];
    auto& m = state.m[i];
    auto& v = state.v[i];
    if (p.size() != g.size() || p.size() != m.size())
      throw ShapeError("adam_step: tensor " + std::to_string(i) +
                       " size mismatch");
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j];
      v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
      const double m_hat = m[j] / bc1;
      const double v_hat = v[j] / bc2;
      p[j] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.eps_adam);
    }
  }
}

inline double cross_entropy(const ClassProbabilities& probs, std::uint32_t label) {
  if (label >= probs.length())
    throw DataError("cross_entropy: label " + std::to_string(label) +
                    " out of range for " + std::to_string(probs.length()) +
                    " classes");
  return -std::log(std::max(probs[label], 1e-12));
}

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
};

// Seeded per-class split: shuffle each class's indices, take
// floor(n * train_frac) for training, floor(n * val_frac) for validation,
// the remainder for test. The three sets partition the input.
inline SplitIndices stratified_split(std::span<const std::uint32_t> labels,
                                     double train_frac, double val_frac,
                                     double test_frac, std::uint64_t seed) {
  if (!(train_frac > 0.0 && val_frac > 0.0 && test_frac > 0.0))
    throw UsageError("stratified_split: fractions must all be positive");
  if (std::abs(train_frac + val_frac + test_frac - 1.0) > 1e-9)
    throw UsageError("stratified_split: fractions must sum to 1");
  if (labels.empty()) throw DataError("stratified_split: no samples");

  std::uint32_t num_classes = 0;
  for (std::uint32_t l : labels) num_classes = std::max(num_classes, l + 1);

  std::vector<std::vector<std::size_t>> per_class(num_classes);
  for (std::size_t i = 0; i < labels.size(); ++i)
    per_class[labels[i]].push_back(i);

  Prng rng = derive_stream(seed, "split");
  SplitIndices out;
  for (std::uint32_t c = 0; c < num_classes; ++c) {
    auto& idx = per_class[c];
    if (idx.size() < 3)
      throw DataError("stratified_split: class " + std::to_string(c) + " has " +
                      std::to_string(idx.size()) + " samples, need >= 3");
    fisher_yates(idx, rng);
    const auto n = static_cast<double>(idx.size());
    const auto n_train = static_cast<std::size_t>(std::floor(n * train_frac));
    const auto n_val = static_cast<std::size_t>(std::floor(n * val_frac));
    for (std::size_t i = 0; i < idx.size(); ++i) {
      if (i < n_train)
        out.train.push_back(idx[i]);
      else if (i < n_train + n_val)
        out.val.push_back(idx[i]);
      else
        out.test.push_back(idx[i]);
    }
  }
  return out;
}

struct EpochRecord {
  double train_loss = 0.0;
  double train_acc = 0.0;
  double val_loss = 0.0;
  double val_acc = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;  // 1-based
};

struct TrainResult {
  CNNWeights weights;  // checkpoint with the lowest validation loss
  TrainHistory history;
};

inline std::string history_to_csv(const TrainHistory& h) {
  std::ostringstream out;
  out << "epoch,train_loss,train_acc,val_loss,val_acc\n";
  out.precision(9);
  for (std::size_t i = 0; i < h.epochs.size(); ++i) {
    const EpochRecord& r = h.epochs[i];
    out << (i + 1) << ',' << r.train_loss << ',' << r.train_acc << ','
        << r.val_loss << ',' << r.val_acc << '\n';
  }
  return out.str();
}

namespace detail {
inline std::pair<double, double> eval_metrics(std::span<const Sample> samples,
                                              const ArchitectureSpec& spec,
                                              const CNNWeights& w) {
  Matrix probs = forward_probs_batch(samples, spec, w);
  double loss = 0.0;
  std::size_t correct = 0;
  for (std::size_t r = 0; r < probs.rows(); ++r) {
    auto row = probs.row(r);
    loss += -std::log(std::max(row[samples[r].label], 1e-12));
    std::size_t best = 0;
    for (std::size_t k = 1; k < row.size(); ++k)
      if (row[k] > row[best]) best = k;
    if (best == samples[r].label) ++correct;
  }
  const auto n = static_cast<double>(samples.size());
  return {loss / n, static_cast<double>(correct) / n};
}
}  // namespace detail

// Minibatch Adam over the stratified training split with early stopping on
// validation loss (strict improvement resets the patience counter) and
// best-weights checkpointing. Returns the checkpointed weights, not the
// final ones.
inline TrainResult train(std::span<const Sample> dataset,
                         const ArchitectureSpec& arch, const TrainConfig& cfg) {
  cfg.validate();
  arch.validate();
  if (dataset.empty()) throw DataError("train: empty dataset");

  const std::size_t feature_len = dataset[0].features.values.length();
  for (const Sample& s : dataset)
    if (s.features.values.length() != feature_len)
      throw ShapeError("train: inconsistent feature lengths " +
                       std::to_string(feature_len) + " vs " +
                       std::to_string(s.features.values.length()));

  std::vector<std::uint32_t> labels(dataset.size());
  for (std::size_t i = 0; i < dataset.size(); ++i) labels[i] = dataset[i].label;
  SplitIndices split = stratified_split(labels, cfg.train_frac, cfg.val_frac,
                                        cfg.test_frac, cfg.seed);
  if (split.train.empty() || split.val.empty())
    throw DataError("train: empty train or validation split");

  std::vector<Sample> val_set;
  val_set.reserve(split.val.size());
  for (std::size_t i : split.val) val_set.push_back(dataset[i]);

  CNNWeights weights = init_cnn_weights(arch, feature_len, cfg.seed);
  AdamState adam = AdamState::like(weights.tensors());

  Prng shuffle_rng = derive_stream(cfg.seed, "train.shuffle");
  Prng dropout_seeds = derive_stream(cfg.seed, "train.dropout");

  TrainResult result;
  result.weights = weights;
  double best_val_loss = std::numeric_limits<double>::infinity();
  std::size_t epochs_since_improve = 0;

  std::vector<std::size_t> order = split.train;
  std::vector<Sample> batch;
  batch.reserve(cfg.batch_size);
  TrainWorkspace workspace;

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::copy(split.train.begin(), split.train.end(), order.begin());
    fisher_yates(order, shuffle_rng);

    double epoch_loss = 0.0;
    std::size_t epoch_correct = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(start + cfg.batch_size, order.size());
      batch.clear();
      for (std::size_t i = start; i < end; ++i) batch.push_back(dataset[order[i]]);

      const std::uint64_t mask_seed = dropout_seeds.next_u64();
      const StepStats step =
          backward_step(batch, arch, weights, mask_seed, workspace);
      epoch_loss += step.mean_loss * static_cast<double>(batch.size());
      epoch_correct += step.correct;

      std::vector<std::span<const double>> grad_views;
      for (auto g : workspace.grads.tensors()) grad_views.push_back(g);
      adam_step(weights.tensors(), grad_views, adam, cfg);
    }

    EpochRecord rec;
    rec.train_loss = epoch_loss / static_cast<double>(order.size());
    rec.train_acc =
        static_cast<double>(epoch_correct) / static_cast<double>(order.size());
    auto [val_loss, val_acc] = detail::eval_metrics(val_set, arch, weights);
    rec.val_loss = val_loss;
    rec.val_acc = val_acc;
    result.history.epochs.push_back(rec);

    if (val_loss < best_val_loss) {
      best_val_loss = val_loss;
      result.weights = weights;
      result.history.best_epoch = epoch;
      epochs_since_improve = 0;
    } else {
      ++epochs_since_improve;
      if (epochs_since_improve >= cfg.patience) break;
    }
  }
  return result;
}

}  // namespace leafvit

// Copyright 2026 The exitwise Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef EXITWISE_TRAINING_HPP
#define EXITWISE_TRAINING_HPP

// Optimizers, the minibatch training loop with validation-based early
// stopping, and the two-phase composite procedure: joint training of all
// exits, then per-expert retrain / freeze / threshold selection with exited
// frames dropping out of later experts' training sets.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <numeric>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "exitwise/autodiff.hpp"
#include "exitwise/dataset.hpp"
#include "exitwise/exit_policy.hpp"
#include "exitwise/models.hpp"
#include "exitwise/rng.hpp"

namespace exitwise {

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

enum class OptimizerKind { kAdam, kSgd };

inline const char* optimizer_name(OptimizerKind k) {
  return k == OptimizerKind::kAdam ? "adam" : "sgd";
}

inline OptimizerKind optimizer_from_name(const std::string& name) {
  if (name == "adam") return OptimizerKind::kAdam;
  if (name == "sgd") return OptimizerKind::kSgd;
  throw std::invalid_argument("unknown optimizer: " + name);
}

struct TrainConfig {
  int epochs_per_step = 40;
  int batch_size = 64;
  double learning_rate = 1e-3;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  int early_stop_patience = 5;
  std::uint64_t seed = 0;
  double retrain_subset_fraction = 1.0;
  // Exit-criterion selection targets used during phase 2.
  double acc_target = 0.95;
  double exit_target = 0.25;
  // First sample of the model input window within the frame.
  int window_offset = 0;
  // Phase 2 starts each expert from its joint-phase weights by default;
  // setting this reinitializes the expert before its retrain step.
  bool reinit_experts = false;
};

inline void validate_train_config(const TrainConfig& cfg) {
  if (cfg.epochs_per_step <= 0) throw std::invalid_argument("train config: epochs_per_step must be positive");
  if (cfg.batch_size <= 0) throw std::invalid_argument("train config: batch_size must be positive");
  if (cfg.learning_rate < 0.0) throw std::invalid_argument("train config: learning_rate must be nonnegative");
  if (cfg.early_stop_patience <= 0) throw std::invalid_argument("train config: early_stop_patience must be positive");
  if (!(cfg.retrain_subset_fraction > 0.0 && cfg.retrain_subset_fraction <= 1.0)) {
    throw std::invalid_argument("train config: retrain_subset_fraction must be in (0, 1]");
  }
  if (!(cfg.acc_target > 0.0 && cfg.acc_target <= 1.0)) {
    throw std::invalid_argument("train config: acc_target must be in (0, 1]");
  }
  if (!(cfg.exit_target > 0.0 && cfg.exit_target <= 1.0)) {
    throw std::invalid_argument("train config: exit_target must be in (0, 1]");
  }
  if (cfg.window_offset < 0) throw std::invalid_argument("train config: window_offset must be nonnegative");
}

inline nlohmann::json train_config_to_json(const TrainConfig& cfg) {
  return {{"epochs_per_step", cfg.epochs_per_step},
          {"batch_size", cfg.batch_size},
          {"learning_rate", cfg.learning_rate},
          {"optimizer", optimizer_name(cfg.optimizer)},
          {"early_stop_patience", cfg.early_stop_patience},
          {"seed", cfg.seed},
          {"retrain_subset_fraction", cfg.retrain_subset_fraction},
          {"acc_target", cfg.acc_target},
          {"exit_target", cfg.exit_target},
          {"window_offset", cfg.window_offset},
          {"reinit_experts", cfg.reinit_experts}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig cfg;
  cfg.epochs_per_step = j.value("epochs_per_step", cfg.epochs_per_step);
  cfg.batch_size = j.value("batch_size", cfg.batch_size);
  cfg.learning_rate = j.value("learning_rate", cfg.learning_rate);
  if (j.contains("optimizer")) cfg.optimizer = optimizer_from_name(j.at("optimizer").get<std::string>());
  cfg.early_stop_patience = j.value("early_stop_patience", cfg.early_stop_patience);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.retrain_subset_fraction = j.value("retrain_subset_fraction", cfg.retrain_subset_fraction);
  cfg.acc_target = j.value("acc_target", cfg.acc_target);
  cfg.exit_target = j.value("exit_target", cfg.exit_target);
  cfg.window_offset = j.value("window_offset", cfg.window_offset);
  cfg.reinit_experts = j.value("reinit_experts", cfg.reinit_experts);
  validate_train_config(cfg);
  return cfg;
}

// ---------------------------------------------------------------------------
// Optimizers
// ---------------------------------------------------------------------------

template <typename T = float>
class Optimizer {
 public:
  Optimizer(OptimizerKind kind, double learning_rate, std::vector<Variable<T>*> params)
      : kind_(kind), lr_(learning_rate), params_(std::move(params)) {
    for (Variable<T>* p : params_) {
      if (p->frozen) throw std::logic_error("optimizer: frozen parameter in trainable set");
    }
    if (kind_ == OptimizerKind::kAdam) {
      m_.reserve(params_.size());
      v_.reserve(params_.size());
      for (Variable<T>* p : params_) {
        m_.emplace_back(p->value.data.size(), T(0));
        v_.emplace_back(p->value.data.size(), T(0));
      }
    }
  }

  // Applies one update using grad * grad_scale (the minibatch mean).
  void step(double grad_scale) {
    ++t_;
    if (kind_ == OptimizerKind::kSgd) {
      for (Variable<T>* p : params_) {
        for (std::size_t i = 0; i < p->value.data.size(); ++i) {
          p->value.data[i] -= static_cast<T>(lr_ * grad_scale * static_cast<double>(p->grad.data[i]));
        }
      }
      return;
    }
    const double bc1 = 1.0 - std::pow(kBeta1, t_);
    const double bc2 = 1.0 - std::pow(kBeta2, t_);
    for (std::size_t k = 0; k < params_.size(); ++k) {
      Variable<T>* p = params_[k];
      std::vector<T>& m = m_[k];
      std::vector<T>& v = v_[k];
      for (std::size_t i = 0; i < p->value.data.size(); ++i) {
        const double g = static_cast<double>(p->grad.data[i]) * grad_scale;
        const double mi = kBeta1 * static_cast<double>(m[i]) + (1.0 - kBeta1) * g;
        const double vi = kBeta2 * static_cast<double>(v[i]) + (1.0 - kBeta2) * g * g;
        m[i] = static_cast<T>(mi);
        v[i] = static_cast<T>(vi);
        p->value.data[i] -=
            static_cast<T>(lr_ * (mi / bc1) / (std::sqrt(vi / bc2) + kEpsilon));
      }
    }
  }

  void zero_grad() {
    for (Variable<T>* p : params_) p->zero_grad();
  }

  const std::vector<Variable<T>*>& params() const { return params_; }

  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEpsilon = 1e-7;

 private:
  OptimizerKind kind_;
  double lr_;
  std::vector<Variable<T>*> params_;
  std::vector<std::vector<T>> m_, v_;
  int t_ = 0;
};

// ---------------------------------------------------------------------------
// Objectives
// ---------------------------------------------------------------------------

// A per-frame loss builder. The training loop records it on a gradient tape;
// evaluation records it on a value-only tape and reads the outputs.
template <typename T = float>
class TrainObjective {
 public:
  struct Built {
    typename Tape<T>::Id loss;
    typename Tape<T>::Id logits;  // logits used for the accuracy metric
  };

  virtual ~TrainObjective() = default;
  virtual Built build(Tape<T>& tape, const IQFrame& frame) const = 0;
};

template <typename T = float>
class BaselineObjective : public TrainObjective<T> {
 public:
  BaselineObjective(const BaselineModel<T>& model, int window_offset)
      : model_(model), offset_(window_offset) {}

  typename TrainObjective<T>::Built build(Tape<T>& tape, const IQFrame& frame) const override {
    auto x = tape.input(iq_window<T>(frame.iq, offset_, model_.spec().input_len));
    auto logits = model_.forward_logits(tape, x);
    auto sx = tape.softmax_cross_entropy(logits, static_cast<int>(frame.label));
    return {sx.loss, logits};
  }

 private:
  const BaselineModel<T>& model_;
  int offset_;
};

// Sum of the per-exit cross-entropies; every exit is evaluated, no gating.
template <typename T = float>
class JointObjective : public TrainObjective<T> {
 public:
  JointObjective(const CompositeModel<T>& model, int window_offset)
      : model_(model), offset_(window_offset) {}

  typename TrainObjective<T>::Built build(Tape<T>& tape, const IQFrame& frame) const override {
    std::array<typename Tape<T>::Id, kNumExperts> segments;
    for (int e = 0; e < kNumExperts; ++e) {
      segments[static_cast<std::size_t>(e)] = tape.input(iq_window<T>(
          frame.iq, offset_ + model_.segment_begin(e), model_.segment_len(e)));
    }
    const auto fwd = model_.forward_all(tape, segments);
    std::vector<typename Tape<T>::Id> losses;
    for (int e = 0; e < kNumExperts; ++e) {
      losses.push_back(tape.softmax_cross_entropy(fwd.logits[static_cast<std::size_t>(e)],
                                                  static_cast<int>(frame.label))
                           .loss);
    }
    return {tape.add_scalars(losses), fwd.logits[kNumExperts - 1]};
  }

 private:
  const CompositeModel<T>& model_;
  int offset_;
};

// Cross-entropy of one expert's exit. Upstream experts run forward only;
// when they are frozen no gradient crosses the concat boundary.
template <typename T = float>
class ExpertObjective : public TrainObjective<T> {
 public:
  ExpertObjective(const CompositeModel<T>& model, int expert, int window_offset)
      : model_(model), expert_(expert), offset_(window_offset) {}

  typename TrainObjective<T>::Built build(Tape<T>& tape, const IQFrame& frame) const override {
    std::vector<typename Tape<T>::Id> features;
    for (int e = 0; e <= expert_; ++e) {
      auto seg = tape.input(iq_window<T>(frame.iq, offset_ + model_.segment_begin(e),
                                         model_.segment_len(e)));
      features.push_back(model_.expert_features(tape, seg, e));
    }
    auto logits = model_.expert_logits(
        tape, expert_, std::span<const typename Tape<T>::Id>(features.data(), features.size()));
    auto sx = tape.softmax_cross_entropy(logits, static_cast<int>(frame.label));
    return {sx.loss, logits};
  }

 private:
  const CompositeModel<T>& model_;
  int expert_;
  int offset_;
};

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

struct TrainHistory {
  std::vector<double> train_loss;
  std::vector<double> train_accuracy;
  std::vector<double> val_loss;
  std::vector<double> val_accuracy;
  int best_epoch = -1;     // epoch whose parameters were kept
  int stopped_epoch = -1;  // last epoch executed

  int epochs_run() const { return static_cast<int>(train_loss.size()); }
};

inline void write_history_csv(std::ostream& out, const TrainHistory& hist) {
  out << "epoch,train_loss,train_accuracy,val_loss,val_accuracy\n";
  for (int e = 0; e < hist.epochs_run(); ++e) {
    out << e << ',' << hist.train_loss[static_cast<std::size_t>(e)] << ','
        << hist.train_accuracy[static_cast<std::size_t>(e)] << ','
        << hist.val_loss[static_cast<std::size_t>(e)] << ','
        << hist.val_accuracy[static_cast<std::size_t>(e)] << '\n';
  }
}

namespace detail {

// Seed-path tags for the independent random streams of a training run.
inline constexpr std::uint64_t kInitTag = 20;
inline constexpr std::uint64_t kBaselineTag = 21;
inline constexpr std::uint64_t kJointTag = 22;
inline constexpr std::uint64_t kExpertTagBase = 23;   // 23, 24, 25
inline constexpr std::uint64_t kSubsetTagBase = 26;   // 26, 27, 28
inline constexpr std::uint64_t kReinitTagBase = 29;   // 29, 30, 31

template <typename T>
std::vector<T> snapshot_values(const std::vector<Variable<T>*>& params) {
  std::vector<T> out;
  for (const Variable<T>* p : params) {
    out.insert(out.end(), p->value.data.begin(), p->value.data.end());
  }
  return out;
}

template <typename T>
void restore_values(const std::vector<Variable<T>*>& params, const std::vector<T>& saved) {
  std::size_t at = 0;
  for (Variable<T>* p : params) {
    std::copy_n(saved.begin() + static_cast<std::ptrdiff_t>(at), p->value.data.size(),
                p->value.data.begin());
    at += p->value.data.size();
  }
}

}  // namespace detail

// Minibatch descent with per-epoch validation, early stopping after
// early_stop_patience epochs without a validation-loss improvement, and
// restoration of the best-validation parameters. Deterministic given
// cfg.seed and stage_tag: the shuffle stream is derived from both.
template <typename T = float>
TrainHistory train_model(const TrainObjective<T>& objective,
                         const std::vector<Variable<T>*>& trainable,
                         std::span<const IQFrame* const> train_frames,
                         std::span<const IQFrame* const> val_frames,
                         const TrainConfig& cfg, std::uint64_t stage_tag) {
  validate_train_config(cfg);
  if (train_frames.empty() || val_frames.empty()) {
    throw std::invalid_argument("train_model: empty split");
  }
  if (trainable.empty()) throw std::invalid_argument("train_model: no trainable parameters");

  Optimizer<T> opt(cfg.optimizer, cfg.learning_rate, trainable);
  Rng shuffle_rng(derive_seed(cfg.seed, {stage_tag}));
  std::vector<std::size_t> order(train_frames.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainHistory hist;
  double best_val = std::numeric_limits<double>::infinity();
  std::vector<T> best_values = detail::snapshot_values(trainable);
  int epochs_since_best = 0;

  for (int epoch = 0; epoch < cfg.epochs_per_step; ++epoch) {
    shuffle_rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      opt.zero_grad();
      for (std::size_t i = start; i < end; ++i) {
        const IQFrame& frame = *train_frames[order[i]];
        Tape<T> tape;
        const auto built = objective.build(tape, frame);
        loss_sum += static_cast<double>(tape.value(built.loss).data[0]);
        const Tensor<T>& logits = tape.value(built.logits);
        if (argmax_lowest(std::span<const T>(logits.data)) == static_cast<int>(frame.label)) {
          ++correct;
        }
        tape.backward(built.loss);
      }
      opt.step(1.0 / static_cast<double>(end - start));
    }
    hist.train_loss.push_back(loss_sum / static_cast<double>(order.size()));
    hist.train_accuracy.push_back(static_cast<double>(correct) / static_cast<double>(order.size()));

    double val_loss_sum = 0.0;
    std::size_t val_correct = 0;
    for (const IQFrame* frame : val_frames) {
      Tape<T> tape(false);
      const auto built = objective.build(tape, *frame);
      val_loss_sum += static_cast<double>(tape.value(built.loss).data[0]);
      const Tensor<T>& logits = tape.value(built.logits);
      if (argmax_lowest(std::span<const T>(logits.data)) == static_cast<int>(frame->label)) {
        ++val_correct;
      }
    }
    const double val_loss = val_loss_sum / static_cast<double>(val_frames.size());
    hist.val_loss.push_back(val_loss);
    hist.val_accuracy.push_back(static_cast<double>(val_correct) /
                                static_cast<double>(val_frames.size()));
    hist.stopped_epoch = epoch;

    if (val_loss < best_val) {
      best_val = val_loss;
      best_values = detail::snapshot_values(trainable);
      hist.best_epoch = epoch;
      epochs_since_best = 0;
    } else {
      ++epochs_since_best;
      if (epochs_since_best >= cfg.early_stop_patience) break;
    }
  }

  // No epoch improved on infinity only if no epoch ran; epochs >= 1 is
  // enforced, so best_epoch is always set by the first epoch.
  detail::restore_values(trainable, best_values);
  return hist;
}

// ---------------------------------------------------------------------------
// Entry points
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<const IQFrame*> split_frames(const DatasetBundle& data, Split split) {
  std::vector<const IQFrame*> out;
  for (int idx : data.indices(split)) {
    out.push_back(&data.frames[static_cast<std::size_t>(idx)]);
  }
  return out;
}

}  // namespace detail

template <typename T = float>
TrainHistory train_baseline(const BaselineModel<T>& model, ParamStore<T>& store,
                            const DatasetBundle& data, const TrainConfig& cfg) {
  const auto train_frames = detail::split_frames(data, Split::kTrain);
  const auto val_frames = detail::split_frames(data, Split::kVal);
  BaselineObjective<T> objective(model, cfg.window_offset);
  std::vector<Variable<T>*> trainable;
  for (const auto& p : store.all()) {
    if (!p->frozen) trainable.push_back(p.get());
  }
  return train_model<T>(objective, trainable,
                        std::span<const IQFrame* const>(train_frames),
                        std::span<const IQFrame* const>(val_frames), cfg,
                        detail::kBaselineTag);
}

struct TwoPhaseResult {
  TrainHistory joint_history;
  std::array<TrainHistory, kNumExperts> expert_histories;
  std::vector<ExitCriterion> criteria;  // exits 0 and 1
  // Phase-2 bookkeeping over the training split, parallel to
  // DatasetBundle::indices(kTrain): the exit each frame was assigned to
  // during threshold selection (2 = reached the final expert).
  std::vector<int> train_exit_assignment;
  std::array<std::size_t, kNumExperts> partition_sizes{0, 0, 0};
};

// Phase 1: all parameters trained on the summed exit loss. Phase 2, per
// expert e in order: retrain expert e's own parameters on the frames still
// in play, freeze them, and (for exits 0 and 1) pick the entropy threshold
// on those same frames, dropping the frames that exit from every later
// step. The final expert takes whatever remains and gets no criterion.
template <typename T = float>
TwoPhaseResult two_phase_train(CompositeModel<T>& model, ParamStore<T>& store,
                               const DatasetBundle& data, const TrainConfig& cfg,
                               std::ostream* log = nullptr) {
  validate_train_config(cfg);
  const auto train_frames = detail::split_frames(data, Split::kTrain);
  const auto val_frames = detail::split_frames(data, Split::kVal);
  if (train_frames.empty() || val_frames.empty()) {
    throw std::invalid_argument("two_phase_train: empty split");
  }

  TwoPhaseResult result;
  result.train_exit_assignment.assign(train_frames.size(), kNumExperts - 1);

  // Phase 1: joint.
  {
    JointObjective<T> objective(model, cfg.window_offset);
    std::vector<Variable<T>*> trainable;
    for (const auto& p : store.all()) {
      if (!p->frozen) trainable.push_back(p.get());
    }
    result.joint_history = train_model<T>(
        objective, trainable, std::span<const IQFrame* const>(train_frames),
        std::span<const IQFrame* const>(val_frames), cfg, detail::kJointTag);
  }

  // Phase 2. remaining_* index into train_frames; val shrinks through the
  // same gates so each expert validates on the distribution it will see.
  std::vector<std::size_t> remaining(train_frames.size());
  std::iota(remaining.begin(), remaining.end(), std::size_t{0});
  std::vector<const IQFrame*> expert_val = val_frames;
  std::vector<std::vector<T>> frozen_snapshots;

  for (int e = 0; e < kNumExperts; ++e) {
    if (remaining.empty()) {
      throw std::runtime_error(
          "two_phase_train: no training frames left before expert " + std::to_string(e) +
          "; exit thresholds too permissive");
    }
    if (expert_val.empty()) {
      throw std::runtime_error(
          "two_phase_train: no validation frames left before expert " + std::to_string(e) +
          "; exit thresholds too permissive");
    }

    const std::string prefix = CompositeModel<T>::expert_prefix(e) + "/";
    if (cfg.reinit_experts) {
      Rng reinit_rng(derive_seed(cfg.seed, {detail::kReinitTagBase + static_cast<std::uint64_t>(e)}));
      for (Variable<T>* p : store.with_prefix(prefix)) {
        Tensor<T>& t = p->value;
        if (t.rank() == 3) {
          glorot_uniform_fill(t, t.dim(0) * t.dim(1), t.dim(0) * t.dim(2), reinit_rng);
        } else if (t.rank() == 2) {
          glorot_uniform_fill(t, t.dim(0), t.dim(1), reinit_rng);
        } else {
          t.fill(T(0));
        }
      }
    }

    // Optional subsampling of this expert's training pool.
    std::vector<std::size_t> pool = remaining;
    if (cfg.retrain_subset_fraction < 1.0) {
      Rng subset_rng(derive_seed(cfg.seed, {detail::kSubsetTagBase + static_cast<std::uint64_t>(e)}));
      subset_rng.shuffle(pool);
      const std::size_t keep = std::max<std::size_t>(
          1, static_cast<std::size_t>(std::floor(cfg.retrain_subset_fraction *
                                                 static_cast<double>(pool.size()))));
      pool.resize(keep);
      std::sort(pool.begin(), pool.end());
    }
    std::vector<const IQFrame*> pool_frames;
    for (std::size_t idx : pool) pool_frames.push_back(train_frames[idx]);

    ExpertObjective<T> objective(model, e, cfg.window_offset);
    result.expert_histories[static_cast<std::size_t>(e)] = train_model<T>(
        objective, store.with_prefix(prefix),
        std::span<const IQFrame* const>(pool_frames),
        std::span<const IQFrame* const>(expert_val), cfg,
        detail::kExpertTagBase + static_cast<std::uint64_t>(e));

    store.set_frozen(prefix, true);
    frozen_snapshots.push_back(store.snapshot(prefix));
    // Everything frozen so far must stay bit-identical from here on.
    for (int j = 0; j < e; ++j) {
      if (store.snapshot(CompositeModel<T>::expert_prefix(j) + "/") !=
          frozen_snapshots[static_cast<std::size_t>(j)]) {
        throw std::logic_error("two_phase_train: frozen expert " + std::to_string(j) +
                               " changed during step " + std::to_string(e));
      }
    }

    if (e == kNumExperts - 1) {
      result.partition_sizes[static_cast<std::size_t>(e)] = remaining.size();
      break;  // no criterion for the last expert
    }

    // Threshold selection over every not-yet-exited training frame.
    std::vector<double> entropies;
    std::vector<bool> correct;
    entropies.reserve(remaining.size());
    for (std::size_t idx : remaining) {
      CompositeFrameEvaluator<T> ev(model, train_frames[idx]->iq, cfg.window_offset);
      const SoftDecision& sd = ev.exit_decision(e);
      entropies.push_back(sd.entropy);
      correct.push_back(sd.pred == static_cast<int>(train_frames[idx]->label));
    }
    const ThresholdCurve curve =
        sweep_threshold_curve(std::span<const double>(entropies), correct);
    const ExitCriterion criterion =
        select_exit_threshold(curve, cfg.acc_target, cfg.exit_target, log);
    result.criteria.push_back(criterion);

    const FramePartition part = partition_frames(std::span<const double>(entropies), criterion);
    result.partition_sizes[static_cast<std::size_t>(e)] = part.exiting.size();
    for (std::size_t k : part.exiting) {
      result.train_exit_assignment[remaining[k]] = e;
    }
    std::vector<std::size_t> next;
    next.reserve(part.remaining.size());
    for (std::size_t k : part.remaining) next.push_back(remaining[k]);
    remaining = std::move(next);

    // The validation pool passes through the same gate.
    std::vector<const IQFrame*> next_val;
    for (const IQFrame* frame : expert_val) {
      CompositeFrameEvaluator<T> ev(model, frame->iq, cfg.window_offset);
      if (!exits_at(ev.exit_decision(e).entropy, criterion.h_th)) next_val.push_back(frame);
    }
    expert_val = std::move(next_val);

    if (log != nullptr) {
      *log << "two_phase_train: exit " << e << " h_th=" << criterion.h_th << " exits "
           << part.exiting.size() << "/" << entropies.size() << " training frames\n";
    }
  }

  return result;
}

}  // namespace exitwise

#endif  // EXITWISE_TRAINING_HPP

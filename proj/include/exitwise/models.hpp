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

#ifndef EXITWISE_MODELS_HPP
#define EXITWISE_MODELS_HPP

// Model builders: the single-exit residual baseline and the three-expert
// width-split composite with feature pass-through, plus parameter storage,
// counting, and checkpoint I/O. A model is an immutable wiring over
// parameters owned by a ParamStore; forward passes are recorded on a Tape.

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "exitwise/autodiff.hpp"
#include "exitwise/exit_policy.hpp"
#include "exitwise/rng.hpp"
#include "exitwise/tensor.hpp"

namespace exitwise {

static_assert(std::endian::native == std::endian::little,
              "checkpoint blobs are little-endian");

// ---------------------------------------------------------------------------
// Specs
// ---------------------------------------------------------------------------

struct ResidualStackConfig {
  int filters = 32;
  int kernel = 3;
  int units_per_stack = 2;
  int pool = 2;
};

struct ModelSpec {
  int input_len = 512;
  int input_channels = 2;
  int num_stacks = 4;
  ResidualStackConfig stack_cfg;
  std::vector<int> decision_widths{128, 128};
  int num_classes = 6;
  // 0 for the baseline; for expert e, the total flattened feature length
  // passed through from experts 0..e-1.
  int extra_feature_dim = 0;
};

// Total pooling factor across the stacks.
inline int total_pool(const ModelSpec& spec) {
  int p = 1;
  for (int s = 0; s < spec.num_stacks; ++s) p *= spec.stack_cfg.pool;
  return p;
}

inline int feature_output_len(const ModelSpec& spec) {
  return spec.input_len / total_pool(spec);
}

// Flattened feature length after the stacks.
inline int feature_dim(const ModelSpec& spec) {
  return feature_output_len(spec) * spec.stack_cfg.filters;
}

inline void validate_model_spec(const ModelSpec& spec) {
  if (spec.input_len <= 0) throw std::invalid_argument("model spec: input_len must be positive");
  if (spec.input_channels <= 0) throw std::invalid_argument("model spec: input_channels must be positive");
  if (spec.num_stacks <= 0) throw std::invalid_argument("model spec: num_stacks must be positive");
  const ResidualStackConfig& s = spec.stack_cfg;
  if (s.filters <= 0 || s.units_per_stack <= 0) {
    throw std::invalid_argument("model spec: stack filters/units must be positive");
  }
  if (s.kernel <= 0 || s.kernel % 2 == 0) throw std::invalid_argument("model spec: kernel must be odd");
  if (s.pool < 2) throw std::invalid_argument("model spec: pool must be at least 2");
  if (spec.input_len % total_pool(spec) != 0) {
    throw std::invalid_argument("model spec: input_len must be divisible by pool^num_stacks");
  }
  if (spec.num_classes < 2) throw std::invalid_argument("model spec: need at least 2 classes");
  for (int w : spec.decision_widths) {
    if (w <= 0) throw std::invalid_argument("model spec: decision widths must be positive");
  }
  if (spec.extra_feature_dim < 0) throw std::invalid_argument("model spec: extra_feature_dim negative");
}

constexpr int kNumExperts = 3;

struct CompositeSpec {
  std::array<int, kNumExperts> segment_lens{32, 160, 320};
  int model_input_len = 512;
  int input_channels = 2;
  int num_stacks = 4;
  ResidualStackConfig stack_cfg;
  std::vector<int> decision_widths{128, 128};
  int num_classes = 6;

  int segment_begin(int e) const {
    int at = 0;
    for (int i = 0; i < e; ++i) at += segment_lens[static_cast<std::size_t>(i)];
    return at;
  }

  // Spec for expert e: its own segment as input, upstream flattened features
  // appended before the decision layers.
  ModelSpec expert_spec(int e) const {
    ModelSpec spec;
    spec.input_len = segment_lens[static_cast<std::size_t>(e)];
    spec.input_channels = input_channels;
    spec.num_stacks = num_stacks;
    spec.stack_cfg = stack_cfg;
    spec.decision_widths = decision_widths;
    spec.num_classes = num_classes;
    spec.extra_feature_dim = 0;
    for (int i = 0; i < e; ++i) {
      ModelSpec up = spec;
      up.input_len = segment_lens[static_cast<std::size_t>(i)];
      spec.extra_feature_dim += feature_dim(up);
    }
    return spec;
  }

  // The baseline this composite is compared against: same wiring over the
  // whole input window.
  ModelSpec baseline_spec() const {
    ModelSpec spec;
    spec.input_len = model_input_len;
    spec.input_channels = input_channels;
    spec.num_stacks = num_stacks;
    spec.stack_cfg = stack_cfg;
    spec.decision_widths = decision_widths;
    spec.num_classes = num_classes;
    return spec;
  }
};

inline void validate_composite_spec(const CompositeSpec& cspec) {
  int sum = 0;
  for (int e = 0; e < kNumExperts; ++e) {
    validate_model_spec(cspec.expert_spec(e));
    sum += cspec.segment_lens[static_cast<std::size_t>(e)];
  }
  if (sum != cspec.model_input_len) {
    throw std::invalid_argument("composite spec: segment lengths must sum to model_input_len");
  }
}

// ---------------------------------------------------------------------------
// Spec JSON
// ---------------------------------------------------------------------------

inline nlohmann::json stack_config_to_json(const ResidualStackConfig& s) {
  return {{"filters", s.filters},
          {"kernel", s.kernel},
          {"units_per_stack", s.units_per_stack},
          {"pool", s.pool}};
}

inline ResidualStackConfig stack_config_from_json(const nlohmann::json& j) {
  ResidualStackConfig s;
  s.filters = j.value("filters", s.filters);
  s.kernel = j.value("kernel", s.kernel);
  s.units_per_stack = j.value("units_per_stack", s.units_per_stack);
  s.pool = j.value("pool", s.pool);
  return s;
}

inline nlohmann::json model_spec_to_json(const ModelSpec& spec) {
  return {{"input_len", spec.input_len},
          {"input_channels", spec.input_channels},
          {"num_stacks", spec.num_stacks},
          {"stack", stack_config_to_json(spec.stack_cfg)},
          {"decision_widths", spec.decision_widths},
          {"num_classes", spec.num_classes},
          {"extra_feature_dim", spec.extra_feature_dim}};
}

inline ModelSpec model_spec_from_json(const nlohmann::json& j) {
  ModelSpec spec;
  spec.input_len = j.value("input_len", spec.input_len);
  spec.input_channels = j.value("input_channels", spec.input_channels);
  spec.num_stacks = j.value("num_stacks", spec.num_stacks);
  if (j.contains("stack")) spec.stack_cfg = stack_config_from_json(j.at("stack"));
  if (j.contains("decision_widths")) {
    spec.decision_widths = j.at("decision_widths").get<std::vector<int>>();
  }
  spec.num_classes = j.value("num_classes", spec.num_classes);
  spec.extra_feature_dim = j.value("extra_feature_dim", spec.extra_feature_dim);
  return spec;
}

inline nlohmann::json composite_spec_to_json(const CompositeSpec& c) {
  return {{"segment_lens", c.segment_lens},
          {"model_input_len", c.model_input_len},
          {"input_channels", c.input_channels},
          {"num_stacks", c.num_stacks},
          {"stack", stack_config_to_json(c.stack_cfg)},
          {"decision_widths", c.decision_widths},
          {"num_classes", c.num_classes}};
}

inline CompositeSpec composite_spec_from_json(const nlohmann::json& j) {
  CompositeSpec c;
  if (j.contains("segment_lens")) {
    auto v = j.at("segment_lens").get<std::vector<int>>();
    if (v.size() != kNumExperts) {
      throw std::invalid_argument("composite spec: segment_lens must have 3 entries");
    }
    std::copy(v.begin(), v.end(), c.segment_lens.begin());
  }
  c.model_input_len = j.value("model_input_len", c.model_input_len);
  c.input_channels = j.value("input_channels", c.input_channels);
  c.num_stacks = j.value("num_stacks", c.num_stacks);
  if (j.contains("stack")) c.stack_cfg = stack_config_from_json(j.at("stack"));
  if (j.contains("decision_widths")) {
    c.decision_widths = j.at("decision_widths").get<std::vector<int>>();
  }
  c.num_classes = j.value("num_classes", c.num_classes);
  return c;
}

// ---------------------------------------------------------------------------
// Parameter storage
// ---------------------------------------------------------------------------

template <typename T = float>
class ParamStore {
 public:
  Variable<T>* create(const std::string& name, std::vector<int> shape) {
    if (index_.count(name) != 0) {
      throw std::invalid_argument("param store: duplicate name " + name);
    }
    params_.push_back(std::make_unique<Variable<T>>(name, Tensor<T>::zeros(std::move(shape))));
    index_[name] = params_.size() - 1;
    return params_.back().get();
  }

  Variable<T>* find(const std::string& name) {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : params_[it->second].get();
  }

  const std::vector<std::unique_ptr<Variable<T>>>& all() const { return params_; }

  std::vector<Variable<T>*> with_prefix(const std::string& prefix) {
    std::vector<Variable<T>*> out;
    for (auto& p : params_) {
      if (p->name.rfind(prefix, 0) == 0) out.push_back(p.get());
    }
    return out;
  }

  void set_frozen(const std::string& prefix, bool frozen) {
    for (auto& p : params_) {
      if (p->name.rfind(prefix, 0) == 0) p->frozen = frozen;
    }
  }

  void zero_grad() {
    for (auto& p : params_) p->zero_grad();
  }

  std::int64_t count_params(const std::string& prefix = "") const {
    std::int64_t n = 0;
    for (const auto& p : params_) {
      if (p->name.rfind(prefix, 0) == 0) n += p->value.size();
    }
    return n;
  }

  // Raw copy of every value under the prefix, in creation order. Used for
  // freeze auditing: frozen groups must be bit-identical across later steps.
  std::vector<T> snapshot(const std::string& prefix = "") const {
    std::vector<T> out;
    for (const auto& p : params_) {
      if (p->name.rfind(prefix, 0) == 0) {
        out.insert(out.end(), p->value.data.begin(), p->value.data.end());
      }
    }
    return out;
  }

 private:
  std::vector<std::unique_ptr<Variable<T>>> params_;
  std::map<std::string, std::size_t> index_;
};

template <typename T>
void glorot_uniform_fill(Tensor<T>& t, int fan_in, int fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / (static_cast<double>(fan_in) + fan_out));
  for (auto& v : t.data) v = static_cast<T>((rng.uniform() * 2.0 - 1.0) * limit);
}

// ---------------------------------------------------------------------------
// Layer parameter bundles
// ---------------------------------------------------------------------------

template <typename T = float>
struct Conv1dParams {
  Variable<T>* w = nullptr;  // [K, Cin, Cout]
  Variable<T>* b = nullptr;  // [Cout]
};

template <typename T = float>
struct DenseParams {
  Variable<T>* w = nullptr;  // [Din, Dout]
  Variable<T>* b = nullptr;  // [Dout]
};

namespace detail {

template <typename T>
Conv1dParams<T> make_conv(ParamStore<T>& store, const std::string& prefix, int K,
                          int c_in, int c_out, Rng* init) {
  Conv1dParams<T> p;
  p.w = store.create(prefix + "/w", {K, c_in, c_out});
  p.b = store.create(prefix + "/b", {c_out});
  if (init != nullptr) glorot_uniform_fill(p.w->value, K * c_in, K * c_out, *init);
  return p;
}

template <typename T>
DenseParams<T> make_dense(ParamStore<T>& store, const std::string& prefix, int d_in,
                          int d_out, Rng* init) {
  DenseParams<T> p;
  p.w = store.create(prefix + "/w", {d_in, d_out});
  p.b = store.create(prefix + "/b", {d_out});
  if (init != nullptr) glorot_uniform_fill(p.w->value, d_in, d_out, *init);
  return p;
}

}  // namespace detail

// Conv(linear) -> units_per_stack x [Conv(ReLU) -> Conv(linear) -> add skip
// -> ReLU] -> MaxPool(pool).
template <typename T = float>
struct ResidualStack {
  Conv1dParams<T> entry;
  std::vector<std::array<Conv1dParams<T>, 2>> units;
  int pool = 2;

  static ResidualStack build(ParamStore<T>& store, const std::string& prefix,
                             const ResidualStackConfig& cfg, int in_channels, Rng* init) {
    ResidualStack s;
    s.pool = cfg.pool;
    s.entry = detail::make_conv(store, prefix + "/entry", cfg.kernel, in_channels,
                                cfg.filters, init);
    for (int u = 0; u < cfg.units_per_stack; ++u) {
      const std::string up = prefix + "/unit" + std::to_string(u);
      s.units.push_back({detail::make_conv(store, up + "/conv0", cfg.kernel, cfg.filters,
                                           cfg.filters, init),
                         detail::make_conv(store, up + "/conv1", cfg.kernel, cfg.filters,
                                           cfg.filters, init)});
    }
    return s;
  }

  typename Tape<T>::Id forward(Tape<T>& tape, typename Tape<T>::Id x) const {
    auto h = tape.conv1d(x, entry.w, entry.b);
    for (const auto& unit : units) {
      auto u = tape.relu(tape.conv1d(h, unit[0].w, unit[0].b));
      u = tape.conv1d(u, unit[1].w, unit[1].b);
      h = tape.relu(tape.add(u, h));
    }
    return tape.maxpool(h, pool);
  }
};

template <typename T = float>
struct FeatureExtractor {
  std::vector<ResidualStack<T>> stacks;

  static FeatureExtractor build(ParamStore<T>& store, const std::string& prefix,
                                const ModelSpec& spec, Rng* init) {
    FeatureExtractor fx;
    int channels = spec.input_channels;
    for (int s = 0; s < spec.num_stacks; ++s) {
      fx.stacks.push_back(ResidualStack<T>::build(
          store, prefix + "/stack" + std::to_string(s), spec.stack_cfg, channels, init));
      channels = spec.stack_cfg.filters;
    }
    return fx;
  }

  // [L, Cin] -> flattened [L / pool^stacks * filters] feature vector.
  typename Tape<T>::Id forward(Tape<T>& tape, typename Tape<T>::Id x) const {
    auto h = x;
    for (const auto& stack : stacks) h = stack.forward(tape, h);
    return tape.flatten(h);
  }
};

template <typename T = float>
struct DecisionHead {
  std::vector<DenseParams<T>> hidden;  // ReLU after each
  DenseParams<T> out;                  // linear logits

  static DecisionHead build(ParamStore<T>& store, const std::string& prefix, int in_dim,
                            const std::vector<int>& widths, int classes, Rng* init) {
    DecisionHead head;
    int d = in_dim;
    for (std::size_t i = 0; i < widths.size(); ++i) {
      head.hidden.push_back(
          detail::make_dense(store, prefix + "/dense" + std::to_string(i), d,
                             widths[i], init));
      d = widths[i];
    }
    head.out = detail::make_dense(store, prefix + "/out", d, classes, init);
    return head;
  }

  typename Tape<T>::Id forward(Tape<T>& tape, typename Tape<T>::Id features) const {
    auto h = features;
    for (const auto& layer : hidden) h = tape.relu(tape.dense(h, layer.w, layer.b));
    return tape.dense(h, out.w, out.b);
  }
};

// ---------------------------------------------------------------------------
// Input windowing
// ---------------------------------------------------------------------------

// Extracts [len, 2] rows (I, Q) from an interleaved I/Q buffer, starting at
// sample `offset`. The model consumes the window starting at the frame head
// unless configured otherwise.
template <typename T = float>
Tensor<T> iq_window(std::span<const float> iq, int offset, int len) {
  if (offset < 0 || len <= 0 ||
      static_cast<std::size_t>(2 * (offset + len)) > iq.size()) {
    throw std::out_of_range("iq_window: window outside frame");
  }
  Tensor<T> out = Tensor<T>::zeros({len, 2});
  for (int l = 0; l < len; ++l) {
    out.data[static_cast<std::size_t>(2 * l)] = static_cast<T>(iq[static_cast<std::size_t>(2 * (offset + l))]);
    out.data[static_cast<std::size_t>(2 * l) + 1] = static_cast<T>(iq[static_cast<std::size_t>(2 * (offset + l)) + 1]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Models
// ---------------------------------------------------------------------------

template <typename T = float>
class BaselineModel {
 public:
  // init == nullptr leaves parameters zeroed (checkpoint loader fills them).
  BaselineModel(const ModelSpec& spec, ParamStore<T>& store, Rng* init)
      : spec_(spec) {
    validate_model_spec(spec);
    if (spec.extra_feature_dim != 0) {
      throw std::invalid_argument("baseline: extra_feature_dim must be 0");
    }
    fx_ = FeatureExtractor<T>::build(store, "fx", spec, init);
    head_ = DecisionHead<T>::build(store, "head", feature_dim(spec),
                                   spec.decision_widths, spec.num_classes, init);
  }

  // input [input_len, channels] -> logits [num_classes]
  typename Tape<T>::Id forward_logits(Tape<T>& tape, typename Tape<T>::Id input) const {
    return head_.forward(tape, fx_.forward(tape, input));
  }

  const ModelSpec& spec() const { return spec_; }

 private:
  ModelSpec spec_;
  FeatureExtractor<T> fx_;
  DecisionHead<T> head_;
};

template <typename T = float>
class CompositeModel {
 public:
  using Id = typename Tape<T>::Id;

  CompositeModel(const CompositeSpec& cspec, ParamStore<T>& store, Rng* init)
      : cspec_(cspec) {
    validate_composite_spec(cspec);
    for (int e = 0; e < kNumExperts; ++e) {
      const ModelSpec spec = cspec.expert_spec(e);
      const std::string prefix = expert_prefix(e);
      experts_[static_cast<std::size_t>(e)] = Expert{
          spec,
          FeatureExtractor<T>::build(store, prefix + "/fx", spec, init),
          DecisionHead<T>::build(store, prefix + "/head",
                                 feature_dim(spec) + spec.extra_feature_dim,
                                 spec.decision_widths, spec.num_classes, init)};
    }
  }

  static std::string expert_prefix(int e) { return "expert" + std::to_string(e); }

  const CompositeSpec& cspec() const { return cspec_; }
  const ModelSpec& expert_spec(int e) const { return experts_[static_cast<std::size_t>(e)].spec; }
  int segment_begin(int e) const { return cspec_.segment_begin(e); }
  int segment_len(int e) const { return cspec_.segment_lens[static_cast<std::size_t>(e)]; }

  // Flattened features of expert e over its own segment [seg_len, channels].
  Id expert_features(Tape<T>& tape, Id segment, int e) const {
    return experts_[static_cast<std::size_t>(e)].fx.forward(tape, segment);
  }

  // Logits of expert e. features[0..e] are the flattened features of experts
  // 0..e in order; upstream features come first in the concatenation.
  Id expert_logits(Tape<T>& tape, int e, std::span<const Id> features) const {
    if (static_cast<int>(features.size()) != e + 1) {
      throw std::invalid_argument("expert_logits: need features for experts 0..e");
    }
    Id in = features[0];
    if (e > 0) in = tape.concat(std::vector<Id>(features.begin(), features.end()));
    return experts_[static_cast<std::size_t>(e)].head.forward(tape, in);
  }

  struct ForwardAll {
    std::array<Id, kNumExperts> features;
    std::array<Id, kNumExperts> logits;
  };

  // Joint-mode forward: every exit evaluated, no gating.
  ForwardAll forward_all(Tape<T>& tape, const std::array<Id, kNumExperts>& segments) const {
    ForwardAll out;
    std::vector<Id> feats;
    for (int e = 0; e < kNumExperts; ++e) {
      out.features[static_cast<std::size_t>(e)] =
          expert_features(tape, segments[static_cast<std::size_t>(e)], e);
      feats.push_back(out.features[static_cast<std::size_t>(e)]);
      out.logits[static_cast<std::size_t>(e)] =
          expert_logits(tape, e, std::span<const Id>(feats.data(), feats.size()));
    }
    return out;
  }

 private:
  struct Expert {
    ModelSpec spec;
    FeatureExtractor<T> fx;
    DecisionHead<T> head;
  };

  CompositeSpec cspec_;
  std::array<Expert, kNumExperts> experts_;
};

// ---------------------------------------------------------------------------
// Frame evaluation
// ---------------------------------------------------------------------------

// Per-exit soft decision. Probabilities and entropy are computed in double
// from the model's logits so gating comparisons are stable.
struct SoftDecision {
  std::vector<double> probs;
  double entropy = 0.0;
  int pred = 0;
};

// Evaluates one frame's exits lazily, caching expert features so exit e
// reuses the work of exits 0..e-1. Both the phase-2 threshold pass and the
// inference gate go through this class; sharing the code path is what makes
// their entropies bit-identical.
template <typename T = float>
class CompositeFrameEvaluator {
 public:
  CompositeFrameEvaluator(const CompositeModel<T>& model, std::span<const float> iq,
                          int window_offset)
      : model_(model), iq_(iq), offset_(window_offset), tape_(false) {}

  const SoftDecision& exit_decision(int e) {
    if (e < 0 || e >= kNumExperts) throw std::invalid_argument("exit_decision: bad exit index");
    for (int i = 0; i <= e; ++i) ensure_features(i);
    SoftDecision& sd = decisions_[static_cast<std::size_t>(e)];
    if (!sd.probs.empty()) return sd;
    const auto logits_id = model_.expert_logits(
        tape_, e, std::span<const typename Tape<T>::Id>(features_.data(),
                                                        static_cast<std::size_t>(e) + 1));
    const Tensor<T>& logits = tape_.value(logits_id);
    std::vector<double> z(logits.data.begin(), logits.data.end());
    sd.probs.resize(z.size());
    softmax_forward(z.data(), static_cast<int>(z.size()), sd.probs.data());
    sd.entropy = entropy_bits(sd.probs);
    sd.pred = argmax_lowest(std::span<const double>(sd.probs));
    return sd;
  }

  // Forward FLOPs actually executed across the exits evaluated so far.
  std::int64_t flops_spent() const { return tape_.flops(); }

 private:
  void ensure_features(int e) {
    if (static_cast<int>(features_.size()) > e) return;
    const int begin = offset_ + model_.segment_begin(e);
    auto seg = tape_.input(iq_window<T>(iq_, begin, model_.segment_len(e)));
    features_.push_back(model_.expert_features(tape_, seg, e));
  }

  const CompositeModel<T>& model_;
  std::span<const float> iq_;
  int offset_;
  Tape<T> tape_;
  std::vector<typename Tape<T>::Id> features_;
  std::array<SoftDecision, kNumExperts> decisions_;
};

// ---------------------------------------------------------------------------
// Checkpoints: JSON header (names, shapes, offsets, frozen flags) followed by
// a raw little-endian f32 blob. load(save(m)) is bit-exact.
// ---------------------------------------------------------------------------

inline constexpr char kCheckpointMagic[9] = "EXWCKPT1";
inline constexpr int kCheckpointFormatVersion = 1;

inline nlohmann::json exit_criterion_to_json(const ExitCriterion& c) {
  return {{"h_acc", c.h_acc},
          {"h_exits", c.h_exits},
          {"h_th", c.h_th},
          {"acc_target", c.acc_target},
          {"exit_target", c.exit_target}};
}

inline ExitCriterion exit_criterion_from_json(const nlohmann::json& j) {
  ExitCriterion c;
  c.h_acc = j.at("h_acc").get<double>();
  c.h_exits = j.at("h_exits").get<double>();
  c.h_th = j.at("h_th").get<double>();
  c.acc_target = j.value("acc_target", c.acc_target);
  c.exit_target = j.value("exit_target", c.exit_target);
  return c;
}

namespace detail {

inline void write_checkpoint_file(const std::string& path, const nlohmann::json& model_json,
                                  const std::string& kind, const ParamStore<float>& store,
                                  const std::vector<ExitCriterion>& criteria,
                                  const nlohmann::json& metadata) {
  nlohmann::json header;
  header["format_version"] = kCheckpointFormatVersion;
  header["kind"] = kind;
  header["model"] = model_json;
  header["metadata"] = metadata;
  if (!criteria.empty()) {
    nlohmann::json arr = nlohmann::json::array();
    for (const ExitCriterion& c : criteria) arr.push_back(exit_criterion_to_json(c));
    header["exit_criteria"] = arr;
  }
  nlohmann::json params = nlohmann::json::array();
  std::int64_t offset = 0;
  for (const auto& p : store.all()) {
    params.push_back({{"name", p->name},
                      {"shape", p->value.shape},
                      {"offset", offset},
                      {"frozen", p->frozen}});
    offset += p->value.size();
  }
  header["params"] = params;

  const std::string header_str = header.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
  out.write(kCheckpointMagic, 8);
  const std::uint32_t header_len = static_cast<std::uint32_t>(header_str.size());
  out.write(reinterpret_cast<const char*>(&header_len), sizeof(header_len));
  out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
  for (const auto& p : store.all()) {
    out.write(reinterpret_cast<const char*>(p->value.data.data()),
              static_cast<std::streamsize>(p->value.data.size() * sizeof(float)));
  }
  if (!out) throw std::runtime_error("checkpoint: write failed for " + path);
}

}  // namespace detail

inline void save_checkpoint(const BaselineModel<float>& model, const ParamStore<float>& store,
                            const std::string& path,
                            const nlohmann::json& metadata = nlohmann::json::object()) {
  detail::write_checkpoint_file(path, model_spec_to_json(model.spec()), "baseline", store,
                                {}, metadata);
}

inline void save_checkpoint(const CompositeModel<float>& model, const ParamStore<float>& store,
                            const std::string& path,
                            const std::vector<ExitCriterion>& criteria = {},
                            const nlohmann::json& metadata = nlohmann::json::object()) {
  detail::write_checkpoint_file(path, composite_spec_to_json(model.cspec()), "composite",
                                store, criteria, metadata);
}

struct LoadedCheckpoint {
  std::string kind;  // "baseline" or "composite"
  nlohmann::json metadata;
  std::vector<ExitCriterion> criteria;  // composite only; may be empty pre-selection
  std::shared_ptr<ParamStore<float>> store;
  std::shared_ptr<BaselineModel<float>> baseline;    // set when kind == "baseline"
  std::shared_ptr<CompositeModel<float>> composite;  // set when kind == "composite"
};

inline LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::string(magic, 8) != std::string(kCheckpointMagic, 8)) {
    throw std::runtime_error("checkpoint: bad magic in " + path);
  }
  std::uint32_t header_len = 0;
  in.read(reinterpret_cast<char*>(&header_len), sizeof(header_len));
  if (!in) throw std::runtime_error("checkpoint: truncated header length");
  std::string header_str(header_len, '\0');
  in.read(header_str.data(), header_len);
  if (!in) throw std::runtime_error("checkpoint: truncated header");
  const nlohmann::json header = nlohmann::json::parse(header_str);

  if (header.at("format_version").get<int>() != kCheckpointFormatVersion) {
    throw std::runtime_error("checkpoint: unsupported format version");
  }

  LoadedCheckpoint lc;
  lc.kind = header.at("kind").get<std::string>();
  lc.metadata = header.value("metadata", nlohmann::json::object());
  if (header.contains("exit_criteria")) {
    for (const auto& j : header.at("exit_criteria")) {
      lc.criteria.push_back(exit_criterion_from_json(j));
    }
  }
  lc.store = std::make_shared<ParamStore<float>>();
  if (lc.kind == "baseline") {
    lc.baseline = std::make_shared<BaselineModel<float>>(
        model_spec_from_json(header.at("model")), *lc.store, nullptr);
  } else if (lc.kind == "composite") {
    lc.composite = std::make_shared<CompositeModel<float>>(
        composite_spec_from_json(header.at("model")), *lc.store, nullptr);
  } else {
    throw std::runtime_error("checkpoint: unknown model kind " + lc.kind);
  }

  const auto& params = header.at("params");
  if (params.size() != lc.store->all().size()) {
    throw std::runtime_error("checkpoint: parameter count mismatch");
  }
  std::int64_t total = 0;
  for (const auto& j : params) total += [&j]() {
    std::int64_t n = 1;
    for (int d : j.at("shape").get<std::vector<int>>()) n *= d;
    return n;
  }();

  std::vector<float> blob(static_cast<std::size_t>(total));
  in.read(reinterpret_cast<char*>(blob.data()),
          static_cast<std::streamsize>(blob.size() * sizeof(float)));
  if (!in || in.gcount() != static_cast<std::streamsize>(blob.size() * sizeof(float))) {
    throw std::runtime_error("checkpoint: blob truncated");
  }
  in.peek();
  if (!in.eof()) throw std::runtime_error("checkpoint: trailing bytes after blob");

  for (const auto& j : params) {
    const std::string name = j.at("name").get<std::string>();
    Variable<float>* var = lc.store->find(name);
    if (var == nullptr) throw std::runtime_error("checkpoint: unknown parameter " + name);
    const auto shape = j.at("shape").get<std::vector<int>>();
    if (shape != var->value.shape) {
      throw std::runtime_error("checkpoint: shape mismatch for " + name);
    }
    const std::int64_t offset = j.at("offset").get<std::int64_t>();
    if (offset < 0 || offset + var->value.size() > total) {
      throw std::runtime_error("checkpoint: offset out of range for " + name);
    }
    std::copy_n(blob.begin() + offset, var->value.size(), var->value.data.begin());
    var->frozen = j.value("frozen", false);
  }
  return lc;
}

}  // namespace exitwise

#endif  // EXITWISE_MODELS_HPP

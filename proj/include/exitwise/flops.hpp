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

#ifndef EXITWISE_FLOPS_HPP
#define EXITWISE_FLOPS_HPP

// Analytic FLOP accounting. Convention: 1 FLOP per multiply-accumulate plus
// one FLOP per bias add; ReLU, pooling, softmax and concatenation count 0
// (they are below 0.1% of any total here). All counts are exact integers
// derived from the specs alone; the inference runtime's dynamic meter must
// agree with these numbers exactly.

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "exitwise/models.hpp"

namespace exitwise {

inline constexpr const char* kFlopConvention =
    "1 FLOP per multiply-accumulate plus bias adds; relu/pool/softmax/concat free";

inline std::int64_t conv1d_flops(int kernel, int c_in, int c_out, int l_out) {
  const std::int64_t macs = static_cast<std::int64_t>(kernel) * c_in * c_out * l_out;
  const std::int64_t bias = static_cast<std::int64_t>(c_out) * l_out;
  return macs + bias;
}

inline std::int64_t dense_flops(int d_in, int d_out) {
  return static_cast<std::int64_t>(d_in) * d_out + d_out;
}

struct LayerFlopEntry {
  std::string name;
  std::int64_t flops = 0;
};

struct FlopReport {
  std::vector<LayerFlopEntry> layers;
  std::int64_t feature_flops = 0;   // residual stacks
  std::int64_t decision_flops = 0;  // dense head
  std::int64_t total = 0;           // sum of the two, exactly
  std::string convention = kFlopConvention;
};

// FLOPs of the residual stacks alone (same-padded convs keep the length; the
// pool halves it between stacks).
inline void append_feature_flops(const ModelSpec& spec, const std::string& prefix,
                                 FlopReport& report) {
  int length = spec.input_len;
  int channels = spec.input_channels;
  const ResidualStackConfig& cfg = spec.stack_cfg;
  for (int s = 0; s < spec.num_stacks; ++s) {
    const std::string sp = prefix + "stack" + std::to_string(s);
    const std::int64_t entry = conv1d_flops(cfg.kernel, channels, cfg.filters, length);
    report.layers.push_back({sp + "/entry", entry});
    report.feature_flops += entry;
    for (int u = 0; u < cfg.units_per_stack; ++u) {
      for (int c = 0; c < 2; ++c) {
        const std::int64_t f = conv1d_flops(cfg.kernel, cfg.filters, cfg.filters, length);
        report.layers.push_back(
            {sp + "/unit" + std::to_string(u) + "/conv" + std::to_string(c), f});
        report.feature_flops += f;
      }
    }
    length /= cfg.pool;
    channels = cfg.filters;
  }
}

inline void append_decision_flops(const ModelSpec& spec, const std::string& prefix,
                                  FlopReport& report) {
  int d = feature_dim(spec) + spec.extra_feature_dim;
  for (std::size_t i = 0; i < spec.decision_widths.size(); ++i) {
    const std::int64_t f = dense_flops(d, spec.decision_widths[i]);
    report.layers.push_back({prefix + "dense" + std::to_string(i), f});
    report.decision_flops += f;
    d = spec.decision_widths[i];
  }
  const std::int64_t f = dense_flops(d, spec.num_classes);
  report.layers.push_back({prefix + "out", f});
  report.decision_flops += f;
}

// Per-layer FLOPs for one single-exit model (the baseline, or one expert
// including its pass-through-widened decision layers).
inline FlopReport model_flop_report(const ModelSpec& spec) {
  validate_model_spec(spec);
  FlopReport report;
  append_feature_flops(spec, "fx/", report);
  append_decision_flops(spec, "head/", report);
  report.total = report.feature_flops + report.decision_flops;
  return report;
}

inline std::int64_t feature_extraction_flops(const ModelSpec& spec) {
  FlopReport report;
  append_feature_flops(spec, "", report);
  return report.feature_flops;
}

struct CompositeFlopReport {
  std::array<FlopReport, kNumExperts> expert_reports;
  // Cost of running exit e alone (expert e's stacks + its decision layers).
  std::array<std::int64_t, kNumExperts> per_exit;
  // Total cost when a frame leaves at exit e: sum of per_exit[0..e].
  std::array<std::int64_t, kNumExperts> cumulative;
  std::string convention = kFlopConvention;
};

inline CompositeFlopReport composite_flop_report(const CompositeSpec& cspec) {
  validate_composite_spec(cspec);
  CompositeFlopReport report;
  std::int64_t acc = 0;
  for (int e = 0; e < kNumExperts; ++e) {
    report.expert_reports[static_cast<std::size_t>(e)] = model_flop_report(cspec.expert_spec(e));
    report.per_exit[static_cast<std::size_t>(e)] =
        report.expert_reports[static_cast<std::size_t>(e)].total;
    acc += report.per_exit[static_cast<std::size_t>(e)];
    report.cumulative[static_cast<std::size_t>(e)] = acc;
  }
  return report;
}

// Total FLOPs spent on a frame that exits at exit_index.
inline std::int64_t cumulative_exit_flops(const CompositeSpec& cspec, int exit_index) {
  if (exit_index < 0 || exit_index >= kNumExperts) {
    throw std::invalid_argument("cumulative_exit_flops: exit index out of range");
  }
  return composite_flop_report(cspec).cumulative[static_cast<std::size_t>(exit_index)];
}

// Expected per-frame load given the cost of each exit path and the fraction
// of frames taking it.
inline double average_load(std::span<const double> exit_flops,
                           std::span<const double> exit_fractions) {
  if (exit_flops.size() != exit_fractions.size() || exit_flops.empty()) {
    throw std::invalid_argument("average_load: array length mismatch");
  }
  double sum = 0.0;
  for (double p : exit_fractions) {
    if (p < 0.0) throw std::invalid_argument("average_load: negative fraction");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw std::invalid_argument("average_load: fractions must sum to 1");
  }
  double load = 0.0;
  for (std::size_t i = 0; i < exit_flops.size(); ++i) {
    load += exit_fractions[i] * exit_flops[i];
  }
  return load;
}

}  // namespace exitwise

#endif  // EXITWISE_FLOPS_HPP

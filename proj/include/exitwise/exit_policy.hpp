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

#ifndef EXITWISE_EXIT_POLICY_HPP
#define EXITWISE_EXIT_POLICY_HPP

// Entropy-based exit gating: entropy of a soft decision in bits, the
// accuracy/exit-fraction threshold curve, data-driven criterion selection,
// and frame partitioning. All math here runs in double regardless of the
// model's scalar type; thresholds must compare identically during training
// partition and inference gating.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace exitwise {

// Shannon entropy in bits with 0*log2(0) := 0. The input must be a
// probability vector: components in [0,1], sum within 1e-6 of 1.
inline double entropy_bits(std::span<const double> probs) {
  if (probs.size() < 2) throw std::invalid_argument("entropy_bits: need at least 2 classes");
  double sum = 0.0;
  for (double p : probs) {
    if (!(p >= -1e-9 && p <= 1.0 + 1e-9)) {
      throw std::invalid_argument("entropy_bits: component outside [0, 1]");
    }
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-6) {
    throw std::invalid_argument("entropy_bits: probabilities must sum to 1");
  }
  double h = 0.0;
  for (double p : probs) {
    if (p > 0.0) h -= p * std::log2(p);
  }
  return h;
}

struct ThresholdPoint {
  double threshold = 0.0;         // candidate entropy value
  double exiting_fraction = 0.0;  // |{entropy <= threshold}| / n
  double exiting_accuracy = 0.0;  // accuracy over that exiting subset
};

// Candidate thresholds are the sorted unique entropies of the frames that
// reach this exit. Fractions are non-decreasing by construction.
struct ThresholdCurve {
  std::vector<ThresholdPoint> points;
  std::size_t total_frames = 0;
};

struct ExitCriterion {
  double h_acc = 0.0;
  double h_exits = 0.0;
  double h_th = 0.0;
  double acc_target = 0.95;
  double exit_target = 0.25;
};

inline ThresholdCurve sweep_threshold_curve(std::span<const double> entropies,
                                            const std::vector<bool>& correct) {
  if (entropies.empty()) throw std::invalid_argument("sweep_threshold_curve: empty input");
  if (entropies.size() != correct.size()) {
    throw std::invalid_argument("sweep_threshold_curve: array length mismatch");
  }
  const std::size_t n = entropies.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return entropies[a] < entropies[b];
  });
  ThresholdCurve curve;
  curve.total_frames = n;
  std::size_t exited = 0;
  std::size_t exited_correct = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t idx = order[i];
    ++exited;
    if (correct[idx]) ++exited_correct;
    // Duplicate entropies collapse onto one candidate: emit only at the last
    // index with this value, so the point covers the whole tied group.
    if (i + 1 < n && entropies[order[i + 1]] == entropies[idx]) continue;
    ThresholdPoint pt;
    pt.threshold = entropies[idx];
    pt.exiting_fraction = static_cast<double>(exited) / static_cast<double>(n);
    pt.exiting_accuracy = static_cast<double>(exited_correct) / static_cast<double>(exited);
    curve.points.push_back(pt);
  }
  return curve;
}

// h_acc: the LARGEST candidate whose exiting-subset accuracy meets acc_target
// (the curve need not be monotone). No such candidate disables the exit
// (h_acc = 0). h_exits: the smallest candidate whose exiting fraction meets
// exit_target; the last candidate always has fraction 1, so the fallback to
// the maximum candidate can only trigger on a malformed curve. h_th is the
// exact mean of the two.
inline ExitCriterion select_exit_threshold(const ThresholdCurve& curve,
                                           double acc_target = 0.95,
                                           double exit_target = 0.25,
                                           std::ostream* log = nullptr) {
  if (curve.points.empty()) throw std::invalid_argument("select_exit_threshold: empty curve");
  ExitCriterion crit;
  crit.acc_target = acc_target;
  crit.exit_target = exit_target;

  bool found_acc = false;
  for (const ThresholdPoint& pt : curve.points) {
    if (pt.exiting_accuracy >= acc_target) {
      crit.h_acc = pt.threshold;
      found_acc = true;
    }
  }
  if (!found_acc) {
    crit.h_acc = 0.0;
    if (log != nullptr) {
      *log << "exit-policy: no threshold reaches accuracy target " << acc_target
           << "; h_acc set to 0\n";
    }
  }

  bool found_exit = false;
  for (const ThresholdPoint& pt : curve.points) {
    if (pt.exiting_fraction >= exit_target) {
      crit.h_exits = pt.threshold;
      found_exit = true;
      break;
    }
  }
  if (!found_exit) {
    crit.h_exits = curve.points.back().threshold;
    if (log != nullptr) {
      *log << "exit-policy: no threshold reaches exit target " << exit_target
           << "; h_exits set to the maximum candidate\n";
    }
  }

  crit.h_th = (crit.h_acc + crit.h_exits) / 2.0;
  return crit;
}

// A frame exits when its entropy is <= the threshold. The same comparison
// gates inference; keeping them identical is what makes the phase-2
// partition reproducible at inference time.
inline bool exits_at(double entropy, double h_th) { return entropy <= h_th; }

struct FramePartition {
  std::vector<std::size_t> exiting;    // indices with entropy <= h_th
  std::vector<std::size_t> remaining;  // complement, original order kept
};

inline FramePartition partition_frames(std::span<const double> entropies,
                                       const ExitCriterion& criterion) {
  FramePartition part;
  for (std::size_t i = 0; i < entropies.size(); ++i) {
    if (exits_at(entropies[i], criterion.h_th)) {
      part.exiting.push_back(i);
    } else {
      part.remaining.push_back(i);
    }
  }
  return part;
}

}  // namespace exitwise

#endif  // EXITWISE_EXIT_POLICY_HPP

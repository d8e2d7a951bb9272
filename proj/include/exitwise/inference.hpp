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

#ifndef EXITWISE_INFERENCE_HPP
#define EXITWISE_INFERENCE_HPP

// Early-exit inference: evaluate expert 0 on its segment, exit if the soft
// decision's entropy clears the threshold, otherwise delegate to the next
// expert with the features gathered so far. The last expert always answers.
// Layers past the taken exit never run, and a dynamic FLOP meter records
// exactly what did.

#include <cstdint>
#include <iomanip>
#include <istream>
#include <ostream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "exitwise/dataset.hpp"
#include "exitwise/exit_policy.hpp"
#include "exitwise/models.hpp"

namespace exitwise {

struct ExitRecord {
  std::int64_t frame_id = 0;
  int label = 0;
  int pred = 0;  // argmax of the exiting soft decision, ties to lowest index
  int exit_index = 0;
  std::vector<double> entropy_trail;  // one entry per evaluated exit
  std::int64_t flops_spent = 0;       // dynamic meter, equals the analytic count
  double snr_db = 0.0;
};

// Entropy-gated classification of one frame. criteria[0] and criteria[1]
// gate exits 0 and 1; the final expert classifies unconditionally.
template <typename T = float>
ExitRecord classify_frame(const CompositeModel<T>& model,
                          std::span<const ExitCriterion> criteria, const IQFrame& frame,
                          std::int64_t frame_id, int window_offset = 0) {
  if (criteria.size() < static_cast<std::size_t>(kNumExperts - 1)) {
    throw std::invalid_argument("classify_frame: need criteria for every gated exit");
  }
  ExitRecord rec;
  rec.frame_id = frame_id;
  rec.label = static_cast<int>(frame.label);
  rec.snr_db = frame.snr_db;

  CompositeFrameEvaluator<T> ev(model, frame.iq, window_offset);
  for (int e = 0; e < kNumExperts; ++e) {
    const SoftDecision& sd = ev.exit_decision(e);
    rec.entropy_trail.push_back(sd.entropy);
    const bool take = (e == kNumExperts - 1) ||
                      exits_at(sd.entropy, criteria[static_cast<std::size_t>(e)].h_th);
    if (take) {
      rec.exit_index = e;
      rec.pred = sd.pred;
      break;
    }
  }
  rec.flops_spent = ev.flops_spent();
  return rec;
}

// One record per frame of the split, frame ids = dataset indices.
template <typename T = float>
std::vector<ExitRecord> evaluate_dataset(const CompositeModel<T>& model,
                                         std::span<const ExitCriterion> criteria,
                                         const DatasetBundle& data, Split split,
                                         int window_offset = 0) {
  std::vector<ExitRecord> records;
  for (int idx : data.indices(split)) {
    records.push_back(classify_frame(model, criteria,
                                     data.frames[static_cast<std::size_t>(idx)], idx,
                                     window_offset));
  }
  return records;
}

// Baseline counterpart: single unconditional exit, same record schema so the
// evaluation code treats both models uniformly.
template <typename T = float>
std::vector<ExitRecord> evaluate_baseline(const BaselineModel<T>& model,
                                          const DatasetBundle& data, Split split,
                                          int window_offset = 0) {
  std::vector<ExitRecord> records;
  for (int idx : data.indices(split)) {
    const IQFrame& frame = data.frames[static_cast<std::size_t>(idx)];
    Tape<T> tape(false);
    auto x = tape.input(iq_window<T>(frame.iq, window_offset, model.spec().input_len));
    const auto logits_id = model.forward_logits(tape, x);
    const Tensor<T>& logits = tape.value(logits_id);
    std::vector<double> z(logits.data.begin(), logits.data.end());
    std::vector<double> probs(z.size());
    softmax_forward(z.data(), static_cast<int>(z.size()), probs.data());

    ExitRecord rec;
    rec.frame_id = idx;
    rec.label = static_cast<int>(frame.label);
    rec.pred = argmax_lowest(std::span<const double>(probs));
    rec.exit_index = 0;
    rec.entropy_trail.push_back(entropy_bits(probs));
    rec.flops_spent = tape.flops();
    rec.snr_db = frame.snr_db;
    records.push_back(std::move(rec));
  }
  return records;
}

// ---------------------------------------------------------------------------
// Record CSV I/O
// ---------------------------------------------------------------------------

inline constexpr const char* kRecordCsvHeader =
    "frame_id,label,pred,exit,entropy0,entropy1,entropy2,flops,snr_db";

namespace detail {

inline std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

}  // namespace detail

// Entropy columns for exits that never ran stay blank.
inline void write_records_csv(std::ostream& out, std::span<const ExitRecord> records) {
  out << kRecordCsvHeader << '\n';
  for (const ExitRecord& r : records) {
    out << r.frame_id << ',' << r.label << ',' << r.pred << ',' << r.exit_index;
    for (int e = 0; e < kNumExperts; ++e) {
      out << ',';
      if (e < static_cast<int>(r.entropy_trail.size())) {
        out << detail::format_double(r.entropy_trail[static_cast<std::size_t>(e)]);
      }
    }
    out << ',' << r.flops_spent << ',' << detail::format_double(r.snr_db) << '\n';
  }
}

inline std::vector<ExitRecord> read_records_csv(std::istream& in) {
  std::vector<ExitRecord> records;
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("records csv: empty stream");
  if (line != kRecordCsvHeader) throw std::runtime_error("records csv: unexpected header");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    // A trailing empty cell is not produced by the writer; the last column
    // (snr_db) is always present.
    if (cells.size() != 9) throw std::runtime_error("records csv: bad column count");
    ExitRecord r;
    r.frame_id = std::stoll(cells[0]);
    r.label = std::stoi(cells[1]);
    r.pred = std::stoi(cells[2]);
    r.exit_index = std::stoi(cells[3]);
    for (int e = 0; e < kNumExperts; ++e) {
      const std::string& s = cells[static_cast<std::size_t>(4 + e)];
      if (!s.empty()) r.entropy_trail.push_back(std::stod(s));
    }
    if (static_cast<int>(r.entropy_trail.size()) != r.exit_index + 1) {
      throw std::runtime_error("records csv: entropy trail inconsistent with exit");
    }
    r.flops_spent = std::stoll(cells[7]);
    r.snr_db = std::stod(cells[8]);
    records.push_back(std::move(r));
  }
  return records;
}

}  // namespace exitwise

#endif  // EXITWISE_INFERENCE_HPP

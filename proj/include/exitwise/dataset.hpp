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

#ifndef EXITWISE_DATASET_HPP
#define EXITWISE_DATASET_HPP

// Labeled IQ-frame dataset: synthesis from the modulation/channel chain,
// deterministic per-frame seeding, split bookkeeping, and a bit-exact
// directory format (manifest.json + frames.bin, little-endian f32).

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "exitwise/modulation.hpp"
#include "exitwise/rng.hpp"
#include "exitwise/signal.hpp"

namespace exitwise {

enum class Split : int { kTrain = 0, kVal = 1, kTest = 2 };

inline std::string split_name(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "?";
}

inline Split split_from_name(const std::string& s) {
  if (s == "train") return Split::kTrain;
  if (s == "val") return Split::kVal;
  if (s == "test") return Split::kTest;
  throw std::invalid_argument("unknown split: " + s);
}

struct DatasetConfig {
  std::vector<ModulationId> modulations;
  std::vector<double> snr_grid_db;
  int frames_per_pair = 1024;
  int frame_len = 1024;
  int sps = 8;
  double rrc_rolloff = 0.35;
  int rrc_span_symbols = 8;
  std::uint64_t master_seed = 1;
  // Per (modulation, SNR) pair; must sum to frames_per_pair.
  int train_per_pair = 768;
  int val_per_pair = 128;
  int test_per_pair = 128;
  FadingMode fading_mode = FadingMode::kRayleighBlock;
  bool noise_disabled = false;

  int pair_count() const {
    return static_cast<int>(modulations.size() * snr_grid_db.size());
  }
  int total_frames() const { return pair_count() * frames_per_pair; }

  void validate() const {
    if (modulations.empty()) throw std::invalid_argument("dataset: no modulations");
    if (snr_grid_db.empty()) throw std::invalid_argument("dataset: empty SNR grid");
    for (double s : snr_grid_db) {
      if (!std::isfinite(s)) throw std::invalid_argument("dataset: non-finite SNR");
    }
    if (frames_per_pair <= 0) throw std::invalid_argument("dataset: frames_per_pair <= 0");
    if (frame_len <= 0) throw std::invalid_argument("dataset: frame_len <= 0");
    if (frame_len % 16 != 0) {
      throw std::invalid_argument("dataset: frame_len must be divisible by 16");
    }
    if (frame_len % sps != 0) {
      throw std::invalid_argument("dataset: frame_len must be divisible by sps");
    }
    if (sps < 2) throw std::invalid_argument("dataset: sps must be >= 2");
    if (!(rrc_rolloff > 0.0 && rrc_rolloff < 1.0)) {
      throw std::invalid_argument("dataset: rrc_rolloff must be in (0,1)");
    }
    if (rrc_span_symbols < 4) throw std::invalid_argument("dataset: rrc_span_symbols < 4");
    if (train_per_pair < 0 || val_per_pair < 0 || test_per_pair < 0 ||
        train_per_pair + val_per_pair + test_per_pair != frames_per_pair) {
      throw std::invalid_argument("dataset: split counts must sum to frames_per_pair");
    }
  }
};

// One labeled frame. Samples are stored interleaved I,Q as 32-bit floats,
// 2*frame_len values total.
struct IQFrame {
  std::vector<float> iq;
  ModulationId label;
  double snr_db;
  std::uint64_t frame_seed;

  int length() const { return static_cast<int>(iq.size() / 2); }
};

struct DatasetBundle {
  DatasetConfig config;
  std::vector<IQFrame> frames;
  std::vector<Split> split_assignment;

  std::vector<int> indices(Split s) const {
    std::vector<int> out;
    for (std::size_t i = 0; i < split_assignment.size(); ++i) {
      if (split_assignment[i] == s) out.push_back(static_cast<int>(i));
    }
    return out;
  }
};

namespace detail {

// Seed-path tags. Keeping them distinct guarantees independent streams.
inline constexpr std::uint64_t kBitsTag = 11;
inline constexpr std::uint64_t kChannelTag = 12;
inline constexpr std::uint64_t kSplitTag = 13;

inline std::uint64_t frame_seed(std::uint64_t master, int mod_idx, int snr_idx,
                                int frame_idx) {
  return derive_seed(master, {static_cast<std::uint64_t>(mod_idx),
                              static_cast<std::uint64_t>(snr_idx),
                              static_cast<std::uint64_t>(frame_idx)});
}

}  // namespace detail

// Synthesizes a single labeled frame from its seed. Pure function of
// (config fields, scheme, snr, seed), which is what makes generation
// order-independent and parallel-safe.
inline IQFrame synthesize_frame(const DatasetConfig& cfg, ModulationId label,
                                double snr_db, std::uint64_t seed) {
  const ModulationScheme& scheme = modulation(label);
  const int symbols = cfg.frame_len / cfg.sps;
  std::vector<std::uint8_t> bits(
      static_cast<std::size_t>(symbols * scheme.bits_per_symbol));
  Rng bit_rng(derive_seed(seed, {detail::kBitsTag}));
  for (auto& b : bits) b = static_cast<std::uint8_t>(bit_rng.bit());

  const auto syms = modulate(bits, scheme);
  const auto baseband =
      synthesize_baseband(syms, cfg.sps, cfg.rrc_rolloff, cfg.rrc_span_symbols);

  ChannelConfig ch;
  ch.snr_db = snr_db;
  ch.fading_mode = cfg.fading_mode;
  ch.noise_disabled = cfg.noise_disabled;
  const auto received =
      apply_channel(baseband, ch, derive_seed(seed, {detail::kChannelTag}));

  IQFrame frame;
  frame.label = label;
  frame.snr_db = snr_db;
  frame.frame_seed = seed;
  frame.iq.resize(received.size() * 2);
  for (std::size_t i = 0; i < received.size(); ++i) {
    frame.iq[2 * i] = static_cast<float>(received[i].real());
    frame.iq[2 * i + 1] = static_cast<float>(received[i].imag());
  }
  for (float v : frame.iq) {
    if (!std::isfinite(v)) throw std::runtime_error("synthesize_frame: non-finite sample");
  }
  return frame;
}

// Generates frames_per_pair frames for every (modulation, SNR) pair with
// per-frame seeds derived from the master seed, then assigns splits per pair
// with the exact configured cardinalities.
inline DatasetBundle generate_dataset(const DatasetConfig& cfg) {
  cfg.validate();
  DatasetBundle bundle;
  bundle.config = cfg;
  bundle.frames.reserve(static_cast<std::size_t>(cfg.total_frames()));
  bundle.split_assignment.reserve(static_cast<std::size_t>(cfg.total_frames()));
  for (int mi = 0; mi < static_cast<int>(cfg.modulations.size()); ++mi) {
    for (int si = 0; si < static_cast<int>(cfg.snr_grid_db.size()); ++si) {
      // Random split assignment, exact counts per pair.
      std::vector<Split> pair_split;
      pair_split.reserve(static_cast<std::size_t>(cfg.frames_per_pair));
      for (int f = 0; f < cfg.frames_per_pair; ++f) {
        pair_split.push_back(f < cfg.train_per_pair ? Split::kTrain
                             : f < cfg.train_per_pair + cfg.val_per_pair
                                 ? Split::kVal
                                 : Split::kTest);
      }
      Rng split_rng(derive_seed(cfg.master_seed,
                                {detail::kSplitTag, static_cast<std::uint64_t>(mi),
                                 static_cast<std::uint64_t>(si)}));
      split_rng.shuffle(pair_split);

      for (int f = 0; f < cfg.frames_per_pair; ++f) {
        const std::uint64_t seed = detail::frame_seed(cfg.master_seed, mi, si, f);
        bundle.frames.push_back(synthesize_frame(
            cfg, cfg.modulations[static_cast<std::size_t>(mi)],
            cfg.snr_grid_db[static_cast<std::size_t>(si)], seed));
        bundle.split_assignment.push_back(pair_split[static_cast<std::size_t>(f)]);
      }
    }
  }
  return bundle;
}

// --- JSON (de)serialization of the config -----------------------------------

inline nlohmann::json dataset_config_to_json(const DatasetConfig& cfg) {
  nlohmann::json j;
  std::vector<std::string> mods;
  for (ModulationId m : cfg.modulations) mods.push_back(modulation(m).name);
  j["modulations"] = mods;
  j["snr_grid_db"] = cfg.snr_grid_db;
  j["frames_per_pair"] = cfg.frames_per_pair;
  j["frame_len"] = cfg.frame_len;
  j["sps"] = cfg.sps;
  j["rrc_rolloff"] = cfg.rrc_rolloff;
  j["rrc_span_symbols"] = cfg.rrc_span_symbols;
  j["master_seed"] = cfg.master_seed;
  j["split_counts"] = {cfg.train_per_pair, cfg.val_per_pair, cfg.test_per_pair};
  j["fading_mode"] = fading_mode_name(cfg.fading_mode);
  j["noise_disabled"] = cfg.noise_disabled;
  return j;
}

inline DatasetConfig dataset_config_from_json(const nlohmann::json& j) {
  DatasetConfig cfg;
  cfg.modulations.clear();
  for (const auto& name : j.at("modulations")) {
    cfg.modulations.push_back(modulation_from_name(name.get<std::string>()));
  }
  cfg.snr_grid_db = j.at("snr_grid_db").get<std::vector<double>>();
  cfg.frames_per_pair = j.at("frames_per_pair").get<int>();
  cfg.frame_len = j.at("frame_len").get<int>();
  cfg.sps = j.at("sps").get<int>();
  cfg.rrc_rolloff = j.at("rrc_rolloff").get<double>();
  cfg.rrc_span_symbols = j.at("rrc_span_symbols").get<int>();
  cfg.master_seed = j.at("master_seed").get<std::uint64_t>();
  const auto& sc = j.at("split_counts");
  cfg.train_per_pair = sc.at(0).get<int>();
  cfg.val_per_pair = sc.at(1).get<int>();
  cfg.test_per_pair = sc.at(2).get<int>();
  cfg.fading_mode = fading_mode_from_name(j.value("fading_mode", "rayleigh_block"));
  cfg.noise_disabled = j.value("noise_disabled", false);
  return cfg;
}

// --- On-disk format ----------------------------------------------------------
//
// <dir>/manifest.json   format_version, config, per-frame label/snr/seed/split
// <dir>/frames.bin      frame-major, interleaved I,Q, little-endian f32

inline constexpr int kDatasetFormatVersion = 1;

inline void persist_dataset(const DatasetBundle& bundle,
                            const std::filesystem::path& dir) {
  static_assert(std::endian::native == std::endian::little,
                "dataset format is little-endian");
  std::filesystem::create_directories(dir);

  nlohmann::json manifest;
  manifest["format_version"] = kDatasetFormatVersion;
  manifest["config"] = dataset_config_to_json(bundle.config);
  std::vector<int> labels;
  std::vector<double> snrs;
  std::vector<std::uint64_t> seeds;
  std::vector<std::string> splits;
  labels.reserve(bundle.frames.size());
  for (std::size_t i = 0; i < bundle.frames.size(); ++i) {
    labels.push_back(static_cast<int>(bundle.frames[i].label));
    snrs.push_back(bundle.frames[i].snr_db);
    seeds.push_back(bundle.frames[i].frame_seed);
    splits.push_back(split_name(bundle.split_assignment[i]));
  }
  manifest["frames"] = {{"label", labels},
                        {"snr_db", snrs},
                        {"seed", seeds},
                        {"split", splits}};

  {
    std::ofstream mf(dir / "manifest.json");
    if (!mf) throw std::runtime_error("persist_dataset: cannot write manifest.json");
    mf << manifest.dump(2) << '\n';
  }
  {
    std::ofstream bf(dir / "frames.bin", std::ios::binary);
    if (!bf) throw std::runtime_error("persist_dataset: cannot write frames.bin");
    for (const auto& frame : bundle.frames) {
      bf.write(reinterpret_cast<const char*>(frame.iq.data()),
               static_cast<std::streamsize>(frame.iq.size() * sizeof(float)));
    }
    if (!bf) throw std::runtime_error("persist_dataset: write failure on frames.bin");
  }
}

inline DatasetBundle load_dataset(const std::filesystem::path& dir) {
  static_assert(std::endian::native == std::endian::little,
                "dataset format is little-endian");
  std::ifstream mf(dir / "manifest.json");
  if (!mf) {
    throw std::runtime_error("load_dataset: cannot open " +
                             (dir / "manifest.json").string());
  }
  nlohmann::json manifest = nlohmann::json::parse(mf);
  const int version = manifest.at("format_version").get<int>();
  if (version != kDatasetFormatVersion) {
    throw std::runtime_error("load_dataset: unknown format version " +
                             std::to_string(version));
  }
  DatasetBundle bundle;
  bundle.config = dataset_config_from_json(manifest.at("config"));
  const auto& fj = manifest.at("frames");
  const auto labels = fj.at("label").get<std::vector<int>>();
  const auto snrs = fj.at("snr_db").get<std::vector<double>>();
  const auto seeds = fj.at("seed").get<std::vector<std::uint64_t>>();
  const auto splits = fj.at("split").get<std::vector<std::string>>();
  const std::size_t n = labels.size();
  if (snrs.size() != n || seeds.size() != n || splits.size() != n) {
    throw std::runtime_error("load_dataset: inconsistent manifest arrays");
  }

  std::ifstream bf(dir / "frames.bin", std::ios::binary | std::ios::ate);
  if (!bf) {
    throw std::runtime_error("load_dataset: cannot open " +
                             (dir / "frames.bin").string());
  }
  const std::uint64_t file_size = static_cast<std::uint64_t>(bf.tellg());
  const std::uint64_t frame_bytes =
      static_cast<std::uint64_t>(bundle.config.frame_len) * 2 * sizeof(float);
  if (file_size != frame_bytes * n) {
    throw std::runtime_error(
        "load_dataset: frames.bin length mismatch: expected " +
        std::to_string(frame_bytes * n) + " bytes, found " +
        std::to_string(file_size));
  }
  bf.seekg(0);
  bundle.frames.resize(n);
  bundle.split_assignment.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    IQFrame& frame = bundle.frames[i];
    frame.label = static_cast<ModulationId>(labels[i]);
    frame.snr_db = snrs[i];
    frame.frame_seed = seeds[i];
    frame.iq.resize(static_cast<std::size_t>(bundle.config.frame_len) * 2);
    bf.read(reinterpret_cast<char*>(frame.iq.data()),
            static_cast<std::streamsize>(frame_bytes));
    if (!bf) throw std::runtime_error("load_dataset: truncated frames.bin");
    bundle.split_assignment[i] = split_from_name(splits[i]);
  }
  return bundle;
}

}  // namespace exitwise

#endif  // EXITWISE_DATASET_HPP

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

#ifndef EXITWISE_SIGNAL_HPP
#define EXITWISE_SIGNAL_HPP

// Baseband waveform synthesis (root-raised-cosine pulse shaping) and the
// flat-fading + AWGN channel.

#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "exitwise/rng.hpp"

namespace exitwise {

// Root-raised-cosine taps sampled at sps per symbol over span_symbols symbols,
// normalized to unit energy (sum of squared taps = 1). Tap count is
// span_symbols * sps + 1, centered.
inline std::vector<double> rrc_taps(int sps, double rolloff, int span_symbols) {
  if (sps < 2) throw std::invalid_argument("rrc_taps: sps must be >= 2");
  if (span_symbols < 4) throw std::invalid_argument("rrc_taps: span must be >= 4");
  if (!(rolloff > 0.0 && rolloff < 1.0)) {
    throw std::invalid_argument("rrc_taps: rolloff must be in (0,1)");
  }
  const double beta = rolloff;
  const int half = span_symbols * sps / 2;
  std::vector<double> h(static_cast<std::size_t>(span_symbols * sps + 1));
  for (int n = -half; n <= half; ++n) {
    const double t = static_cast<double>(n) / sps;
    double v = 0.0;
    const double singular = 1.0 / (4.0 * beta);
    if (n == 0) {
      v = 1.0 - beta + 4.0 * beta / std::numbers::pi;
    } else if (std::abs(std::abs(t) - singular) < 1e-9) {
      const double a = std::numbers::pi / (4.0 * beta);
      v = beta / std::sqrt(2.0) *
          ((1.0 + 2.0 / std::numbers::pi) * std::sin(a) +
           (1.0 - 2.0 / std::numbers::pi) * std::cos(a));
    } else {
      const double pt = std::numbers::pi * t;
      const double num = std::sin(pt * (1.0 - beta)) +
                         4.0 * beta * t * std::cos(pt * (1.0 + beta));
      const double den = pt * (1.0 - (4.0 * beta * t) * (4.0 * beta * t));
      v = num / den;
    }
    h[static_cast<std::size_t>(n + half)] = v;
  }
  double energy = 0.0;
  for (double v : h) energy += v * v;
  const double inv = 1.0 / std::sqrt(energy);
  for (double& v : h) v *= inv;
  return h;
}

// Upsamples symbols by sps, applies the RRC filter, trims the group delay so
// that symbol k's pulse center lands at sample k*sps, and rescales the result
// to unit average power. Output length is exactly symbols.size() * sps.
inline std::vector<std::complex<double>> synthesize_baseband(
    std::span<const std::complex<double>> symbols, int sps, double rolloff,
    int span_symbols) {
  const std::vector<double> taps = rrc_taps(sps, rolloff, span_symbols);
  const int delay = span_symbols * sps / 2;
  const std::size_t out_len = symbols.size() * static_cast<std::size_t>(sps);
  std::vector<std::complex<double>> out(out_len, {0.0, 0.0});
  // Sparse convolution: the upsampled sequence is nonzero only at multiples
  // of sps, so iterate symbols directly.
  for (std::size_t s = 0; s < symbols.size(); ++s) {
    const std::complex<double> sym = symbols[s];
    const std::int64_t base = static_cast<std::int64_t>(s) * sps - delay;
    for (std::size_t k = 0; k < taps.size(); ++k) {
      const std::int64_t idx = base + static_cast<std::int64_t>(k);
      if (idx < 0 || idx >= static_cast<std::int64_t>(out_len)) continue;
      out[static_cast<std::size_t>(idx)] += sym * taps[k];
    }
  }
  double power = 0.0;
  for (const auto& v : out) power += std::norm(v);
  power /= static_cast<double>(out_len);
  if (power > 0.0) {
    const double inv = 1.0 / std::sqrt(power);
    for (auto& v : out) v *= inv;
  }
  return out;
}

enum class FadingMode : int {
  kNone = 0,
  kFixedGain = 1,
  kRayleighBlock = 2,
};

inline std::string fading_mode_name(FadingMode m) {
  switch (m) {
    case FadingMode::kNone: return "none";
    case FadingMode::kFixedGain: return "fixed_gain";
    case FadingMode::kRayleighBlock: return "rayleigh_block";
  }
  return "?";
}

inline FadingMode fading_mode_from_name(const std::string& s) {
  if (s == "none") return FadingMode::kNone;
  if (s == "fixed_gain") return FadingMode::kFixedGain;
  if (s == "rayleigh_block") return FadingMode::kRayleighBlock;
  throw std::invalid_argument("unknown fading mode: " + s);
}

struct ChannelConfig {
  double snr_db = 0.0;
  FadingMode fading_mode = FadingMode::kRayleighBlock;
  // Zero noise is requested through this flag, not an infinite snr_db.
  bool noise_disabled = false;
  std::complex<double> fixed_gain{1.0, 0.0};
};

// r[n] = h * s[n] + v[n] with one gain draw per call and complex white
// Gaussian noise of per-sample variance |h|^2 * 10^(-snr_db/10), so the
// realized SNR matches snr_db for a unit-power input.
inline std::vector<std::complex<double>> apply_channel(
    std::span<const std::complex<double>> signal, const ChannelConfig& cfg,
    std::uint64_t rng_seed) {
  if (!std::isfinite(cfg.snr_db)) {
    throw std::invalid_argument("apply_channel: snr_db must be finite");
  }
  Rng rng(rng_seed);
  std::complex<double> h{1.0, 0.0};
  switch (cfg.fading_mode) {
    case FadingMode::kNone:
      break;
    case FadingMode::kFixedGain:
      h = cfg.fixed_gain;
      break;
    case FadingMode::kRayleighBlock: {
      // E[|h|^2] = 1.
      const double re = rng.normal();
      const double im = rng.normal();
      h = std::complex<double>(re, im) / std::sqrt(2.0);
      break;
    }
  }
  std::vector<std::complex<double>> out(signal.size());
  if (cfg.fading_mode == FadingMode::kNone) {
    // h is exactly one; copy instead of multiplying to keep the identity
    // case bit-exact (complex multiply by (1,0) can flip signed zeros).
    for (std::size_t i = 0; i < signal.size(); ++i) out[i] = signal[i];
  } else {
    for (std::size_t i = 0; i < signal.size(); ++i) out[i] = h * signal[i];
  }
  if (!cfg.noise_disabled) {
    const double noise_var = std::norm(h) * std::pow(10.0, -cfg.snr_db / 10.0);
    const double comp_std = std::sqrt(noise_var / 2.0);
    for (auto& v : out) {
      v += std::complex<double>(comp_std * rng.normal(), comp_std * rng.normal());
    }
  }
  return out;
}

}  // namespace exitwise

#endif  // EXITWISE_SIGNAL_HPP

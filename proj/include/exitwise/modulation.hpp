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

#ifndef EXITWISE_MODULATION_HPP
#define EXITWISE_MODULATION_HPP

// Digital modulation schemes and bit-to-symbol mapping. All constellations
// are Gray coded and normalized to unit average power.

#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace exitwise {

enum class ModulationId : int {
  kBpsk = 0,
  kQpsk = 1,
  kPsk8 = 2,
  kPam4 = 3,
  kQam16 = 4,
  kQam64 = 5,
};

inline constexpr int kNumModulations = 6;

struct ModulationScheme {
  ModulationId id;
  std::string name;
  int bits_per_symbol;
  // Indexed by the bit group read MSB-first, e.g. bits {1,0} -> index 2.
  std::vector<std::complex<double>> constellation;
};

inline std::uint32_t gray_to_binary(std::uint32_t g) {
  std::uint32_t b = g;
  for (std::uint32_t shift = 1; shift < 32; shift <<= 1) b ^= b >> shift;
  return b;
}

namespace detail {

// Gray-mapped PAM levels {..,-3,-1,+1,+3,..} scaled so mean(level^2) = 1
// happens at the caller's chosen normalization.
inline double pam_level(std::uint32_t gray_index, int levels) {
  const std::uint32_t k = gray_to_binary(gray_index);
  return 2.0 * static_cast<double>(k) - static_cast<double>(levels - 1);
}

inline std::vector<std::complex<double>> make_constellation(ModulationId id) {
  using cd = std::complex<double>;
  std::vector<cd> pts;
  switch (id) {
    case ModulationId::kBpsk:
      // Bit 0 maps to +1.
      pts = {cd(1.0, 0.0), cd(-1.0, 0.0)};
      break;
    case ModulationId::kQpsk: {
      const double a = 1.0 / std::sqrt(2.0);
      pts.resize(4);
      for (std::uint32_t g = 0; g < 4; ++g) {
        const double i = (g & 2U) ? -a : a;
        const double q = (g & 1U) ? -a : a;
        pts[g] = cd(i, q);
      }
      break;
    }
    case ModulationId::kPsk8: {
      pts.resize(8);
      for (std::uint32_t g = 0; g < 8; ++g) {
        const double phase =
            2.0 * std::numbers::pi * static_cast<double>(gray_to_binary(g)) / 8.0;
        pts[g] = cd(std::cos(phase), std::sin(phase));
      }
      break;
    }
    case ModulationId::kPam4: {
      const double scale = std::sqrt(5.0);  // mean level^2 over {+-1,+-3}
      pts.resize(4);
      for (std::uint32_t g = 0; g < 4; ++g) {
        pts[g] = cd(pam_level(g, 4) / scale, 0.0);
      }
      break;
    }
    case ModulationId::kQam16: {
      const double scale = std::sqrt(10.0);
      pts.resize(16);
      for (std::uint32_t g = 0; g < 16; ++g) {
        const double i = pam_level(g >> 2, 4);
        const double q = pam_level(g & 3U, 4);
        pts[g] = cd(i / scale, q / scale);
      }
      break;
    }
    case ModulationId::kQam64: {
      const double scale = std::sqrt(42.0);
      pts.resize(64);
      for (std::uint32_t g = 0; g < 64; ++g) {
        const double i = pam_level(g >> 3, 8);
        const double q = pam_level(g & 7U, 8);
        pts[g] = cd(i / scale, q / scale);
      }
      break;
    }
  }
  return pts;
}

}  // namespace detail

inline const std::vector<ModulationScheme>& all_modulations() {
  static const std::vector<ModulationScheme> schemes = [] {
    std::vector<ModulationScheme> v;
    const struct {
      ModulationId id;
      const char* name;
      int bps;
    } defs[] = {
        {ModulationId::kBpsk, "BPSK", 1},   {ModulationId::kQpsk, "QPSK", 2},
        {ModulationId::kPsk8, "PSK8", 3},   {ModulationId::kPam4, "PAM4", 2},
        {ModulationId::kQam16, "QAM16", 4}, {ModulationId::kQam64, "QAM64", 6},
    };
    for (const auto& d : defs) {
      v.push_back({d.id, d.name, d.bps, detail::make_constellation(d.id)});
    }
    return v;
  }();
  return schemes;
}

inline const ModulationScheme& modulation(ModulationId id) {
  return all_modulations()[static_cast<std::size_t>(id)];
}

inline ModulationId modulation_from_name(const std::string& name) {
  for (const auto& s : all_modulations()) {
    if (s.name == name) return s.id;
  }
  throw std::invalid_argument("unknown modulation scheme: " + name);
}

// Maps a bit sequence onto constellation symbols, bits_per_symbol at a time,
// MSB first within each group.
inline std::vector<std::complex<double>> modulate(std::span<const std::uint8_t> bits,
                                                  const ModulationScheme& scheme) {
  const std::size_t bps = static_cast<std::size_t>(scheme.bits_per_symbol);
  if (bits.size() % bps != 0) {
    throw std::invalid_argument("bit count " + std::to_string(bits.size()) +
                                " not divisible by bits_per_symbol " +
                                std::to_string(bps));
  }
  std::vector<std::complex<double>> symbols;
  symbols.reserve(bits.size() / bps);
  for (std::size_t i = 0; i < bits.size(); i += bps) {
    std::uint32_t group = 0;
    for (std::size_t b = 0; b < bps; ++b) {
      group = (group << 1) | (bits[i + b] & 1U);
    }
    symbols.push_back(scheme.constellation[group]);
  }
  return symbols;
}

}  // namespace exitwise

#endif  // EXITWISE_MODULATION_HPP

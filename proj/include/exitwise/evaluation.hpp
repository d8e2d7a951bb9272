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

#ifndef EXITWISE_EVALUATION_HPP
#define EXITWISE_EVALUATION_HPP

// Metrics over exit records (accuracy by SNR, exit distributions, FLOP
// reduction), rank correlation, Monte-Carlo aggregation across independent
// runs, and report emission as CSV / JSON / plot-ready series.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "exitwise/flops.hpp"
#include "exitwise/inference.hpp"
#include "exitwise/modulation.hpp"
#include "exitwise/training.hpp"

namespace exitwise {

// ---------------------------------------------------------------------------
// Metrics tables
// ---------------------------------------------------------------------------

struct MetricsRow {
  std::string key;
  double snr_db = std::numeric_limits<double>::quiet_NaN();  // per-SNR rows only
  double frames = 0.0;  // count; fractional after Monte-Carlo averaging
  double accuracy = 0.0;
  std::array<double, kNumExperts> exit_fractions{};    // sum to 1 per row
  std::array<double, kNumExperts> exit_correct{};      // exited here and correct
  std::array<double, kNumExperts> exit_incorrect{};    // exited here and wrong
  double mean_flops = 0.0;
  double flop_reduction = 0.0;  // vs an analytic baseline total, when given
};

struct MetricsTable {
  std::vector<MetricsRow> rows;

  const MetricsRow* find(const std::string& key) const {
    for (const MetricsRow& r : rows) {
      if (r.key == key) return &r;
    }
    return nullptr;
  }
};

// SNR aggregation ranges. Half-open [lo, hi) except when closed_hi, which
// applies to the full range and to the top range so the grid maximum lands
// in a bin.
struct SnrRange {
  double lo, hi;
  bool closed_hi;
  const char* label;
};

inline constexpr std::array<SnrRange, 4> kSnrRanges{{{-20.0, 20.0, true, "range:[-20,20]"},
                                                     {-20.0, -7.0, false, "range:[-20,-7)"},
                                                     {-7.0, 7.0, false, "range:[-7,7)"},
                                                     {7.0, 20.0, true, "range:[7,20]"}}};

inline bool snr_in_range(double snr, const SnrRange& r) {
  return snr >= r.lo && (snr < r.hi || (r.closed_hi && snr <= r.hi));
}

namespace detail {

struct GroupStats {
  double snr_db = std::numeric_limits<double>::quiet_NaN();
  std::size_t frames = 0;
  std::size_t correct = 0;
  std::array<std::size_t, kNumExperts> exits{};
  std::array<std::size_t, kNumExperts> exits_correct{};
  std::int64_t flops = 0;

  void add(const ExitRecord& r) {
    ++frames;
    const bool ok = r.pred == r.label;
    if (ok) ++correct;
    ++exits[static_cast<std::size_t>(r.exit_index)];
    if (ok) ++exits_correct[static_cast<std::size_t>(r.exit_index)];
    flops += r.flops_spent;
  }
};

inline MetricsRow stats_to_row(const std::string& key, const GroupStats& g,
                               double baseline_flops) {
  MetricsRow row;
  row.key = key;
  row.snr_db = g.snr_db;
  row.frames = static_cast<double>(g.frames);
  const double n = static_cast<double>(g.frames);
  row.accuracy = static_cast<double>(g.correct) / n;
  for (int e = 0; e < kNumExperts; ++e) {
    const auto ue = static_cast<std::size_t>(e);
    row.exit_fractions[ue] = static_cast<double>(g.exits[ue]) / n;
    row.exit_correct[ue] = static_cast<double>(g.exits_correct[ue]) / n;
    row.exit_incorrect[ue] = static_cast<double>(g.exits[ue] - g.exits_correct[ue]) / n;
  }
  row.mean_flops = static_cast<double>(g.flops) / n;
  if (baseline_flops > 0.0) row.flop_reduction = 1.0 - row.mean_flops / baseline_flops;
  return row;
}

inline std::string snr_key(double snr) {
  std::ostringstream os;
  os << "snr:" << snr;
  return os.str();
}

// Rows for each distinct SNR in ascending order, then extras appended.
inline std::map<double, GroupStats> group_by_snr(std::span<const ExitRecord> records) {
  std::map<double, GroupStats> groups;
  for (const ExitRecord& r : records) {
    GroupStats& g = groups[r.snr_db];
    g.snr_db = r.snr_db;
    g.add(r);
  }
  return groups;
}

}  // namespace detail

// Per-SNR rows (ascending) followed by the fixed range aggregates. Range
// accuracy is the frame-weighted mean of its member frames.
inline MetricsTable accuracy_by_snr(std::span<const ExitRecord> records,
                                    double baseline_flops = 0.0) {
  if (records.empty()) throw std::invalid_argument("accuracy_by_snr: no records");
  MetricsTable table;
  for (const auto& [snr, g] : detail::group_by_snr(records)) {
    table.rows.push_back(detail::stats_to_row(detail::snr_key(snr), g, baseline_flops));
  }
  for (const SnrRange& range : kSnrRanges) {
    detail::GroupStats g;
    for (const ExitRecord& r : records) {
      if (snr_in_range(r.snr_db, range)) g.add(r);
    }
    if (g.frames == 0) continue;
    table.rows.push_back(detail::stats_to_row(range.label, g, baseline_flops));
  }
  return table;
}

enum class GroupBy { kSnr, kModulation };

// Exit fractions per group with the correct/incorrect split, plus an
// "overall" row pooling every record.
inline MetricsTable exit_distribution(std::span<const ExitRecord> records, GroupBy group_by) {
  if (records.empty()) throw std::invalid_argument("exit_distribution: no records");
  MetricsTable table;
  if (group_by == GroupBy::kSnr) {
    for (const auto& [snr, g] : detail::group_by_snr(records)) {
      table.rows.push_back(detail::stats_to_row(detail::snr_key(snr), g, 0.0));
    }
  } else {
    std::map<int, detail::GroupStats> groups;
    for (const ExitRecord& r : records) groups[r.label].add(r);
    for (const auto& [label, g] : groups) {
      table.rows.push_back(detail::stats_to_row(
          "mod:" + std::string(modulation(static_cast<ModulationId>(label)).name), g, 0.0));
    }
  }
  detail::GroupStats all;
  for (const ExitRecord& r : records) all.add(r);
  table.rows.push_back(detail::stats_to_row("overall", all, 0.0));
  return table;
}

// Per-SNR mean FLOPs and reduction vs a fixed baseline cost; negative values
// mean the gated model spent more than the baseline.
inline MetricsTable flop_reduction_by_snr(std::span<const ExitRecord> records,
                                          std::int64_t baseline_flops) {
  if (records.empty()) throw std::invalid_argument("flop_reduction_by_snr: no records");
  if (baseline_flops <= 0) throw std::invalid_argument("flop_reduction_by_snr: baseline_flops must be positive");
  MetricsTable table;
  const double base = static_cast<double>(baseline_flops);
  for (const auto& [snr, g] : detail::group_by_snr(records)) {
    table.rows.push_back(detail::stats_to_row(detail::snr_key(snr), g, base));
  }
  detail::GroupStats all;
  for (const ExitRecord& r : records) all.add(r);
  table.rows.push_back(detail::stats_to_row("overall", all, base));
  return table;
}

// ---------------------------------------------------------------------------
// Rank correlation
// ---------------------------------------------------------------------------

// Ranks 1..n with ties sharing the average rank of their block.
inline std::vector<double> average_ranks(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n, 0.0);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

// Spearman rank correlation with average ranks for ties. Returns 0 when
// either input is constant (correlation undefined).
inline double spearman_correlation(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw std::invalid_argument("spearman_correlation: need two aligned samples");
  }
  const std::vector<double> rx = average_ranks(x);
  const std::vector<double> ry = average_ranks(y);
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += rx[i];
    my += ry[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = rx[i] - mx;
    const double dy = ry[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

// ---------------------------------------------------------------------------
// Monte-Carlo aggregation
// ---------------------------------------------------------------------------

struct RunMetrics {
  std::uint64_t seed = 0;
  MetricsTable baseline_accuracy;
  MetricsTable composite_accuracy;
  MetricsTable exits_by_snr;
  MetricsTable exits_by_mod;
  MetricsTable reduction_by_snr;
  double baseline_overall_accuracy = 0.0;
  double composite_overall_accuracy = 0.0;
  double overall_reduction = 0.0;
  double spearman_snr_early_exit = 0.0;
};

struct RunReport {
  std::vector<std::uint64_t> seeds;
  std::string config_digest;
  std::vector<RunMetrics> runs;
  // Across-run mean and sample standard deviation, row keys as in any run.
  RunMetrics mean;
  RunMetrics stddev;
};

namespace detail {

// Sorting before summation makes the result independent of run order.
inline double stable_mean(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double stable_sample_std(std::vector<double> v, double mean) {
  if (v.size() < 2) return 0.0;
  for (double& x : v) x = (x - mean) * (x - mean);
  std::sort(v.begin(), v.end());
  double s = 0.0;
  for (double x : v) s += x;
  return std::sqrt(s / (static_cast<double>(v.size()) - 1.0));
}

// Applies fn to every numeric cell across the runs' corresponding rows.
inline MetricsTable reduce_tables(const std::vector<const MetricsTable*>& tables,
                                  const std::function<double(std::vector<double>)>& fn) {
  MetricsTable out;
  const MetricsTable& first = *tables.front();
  for (std::size_t r = 0; r < first.rows.size(); ++r) {
    MetricsRow row;
    row.key = first.rows[r].key;
    row.snr_db = first.rows[r].snr_db;
    const auto gather = [&](auto member) {
      std::vector<double> v;
      for (const MetricsTable* t : tables) {
        if (t->rows.size() != first.rows.size() || t->rows[r].key != row.key) {
          throw std::invalid_argument("monte_carlo_aggregate: run tables have mismatched rows");
        }
        v.push_back(member(t->rows[r]));
      }
      return fn(std::move(v));
    };
    row.frames = gather([](const MetricsRow& x) { return x.frames; });
    row.accuracy = gather([](const MetricsRow& x) { return x.accuracy; });
    for (int e = 0; e < kNumExperts; ++e) {
      row.exit_fractions[static_cast<std::size_t>(e)] =
          gather([e](const MetricsRow& x) { return x.exit_fractions[static_cast<std::size_t>(e)]; });
      row.exit_correct[static_cast<std::size_t>(e)] =
          gather([e](const MetricsRow& x) { return x.exit_correct[static_cast<std::size_t>(e)]; });
      row.exit_incorrect[static_cast<std::size_t>(e)] =
          gather([e](const MetricsRow& x) { return x.exit_incorrect[static_cast<std::size_t>(e)]; });
    }
    row.mean_flops = gather([](const MetricsRow& x) { return x.mean_flops; });
    row.flop_reduction = gather([](const MetricsRow& x) { return x.flop_reduction; });
    out.rows.push_back(std::move(row));
  }
  return out;
}

}  // namespace detail

// Runs run_fn once per seed and reports per-metric mean and sample standard
// deviation across runs. A failing run aborts with its index and seed.
inline RunReport monte_carlo_aggregate(
    std::span<const std::uint64_t> seeds,
    const std::function<RunMetrics(std::uint64_t)>& run_fn) {
  if (seeds.empty()) throw std::invalid_argument("monte_carlo_aggregate: need at least one seed");
  RunReport report;
  report.seeds.assign(seeds.begin(), seeds.end());
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    try {
      report.runs.push_back(run_fn(seeds[i]));
    } catch (const std::exception& e) {
      throw std::runtime_error("monte_carlo run " + std::to_string(i) + " (seed " +
                               std::to_string(seeds[i]) + ") failed: " + e.what());
    }
  }

  const auto mean_fn = [](std::vector<double> v) { return detail::stable_mean(std::move(v)); };
  const auto std_fn = [](std::vector<double> v) {
    const double m = detail::stable_mean(v);
    return detail::stable_sample_std(std::move(v), m);
  };

  const auto aggregate_table = [&](MetricsTable RunMetrics::*table) {
    std::vector<const MetricsTable*> tables;
    for (const RunMetrics& rm : report.runs) tables.push_back(&(rm.*table));
    report.mean.*table = detail::reduce_tables(tables, mean_fn);
    report.stddev.*table = detail::reduce_tables(tables, std_fn);
  };
  aggregate_table(&RunMetrics::baseline_accuracy);
  aggregate_table(&RunMetrics::composite_accuracy);
  aggregate_table(&RunMetrics::exits_by_snr);
  aggregate_table(&RunMetrics::exits_by_mod);
  aggregate_table(&RunMetrics::reduction_by_snr);

  const auto aggregate_scalar = [&](double RunMetrics::*field) {
    std::vector<double> v;
    for (const RunMetrics& rm : report.runs) v.push_back(rm.*field);
    const double m = detail::stable_mean(v);
    report.mean.*field = m;
    report.stddev.*field = detail::stable_sample_std(std::move(v), m);
  };
  aggregate_scalar(&RunMetrics::baseline_overall_accuracy);
  aggregate_scalar(&RunMetrics::composite_overall_accuracy);
  aggregate_scalar(&RunMetrics::overall_reduction);
  aggregate_scalar(&RunMetrics::spearman_snr_early_exit);
  return report;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

inline nlohmann::json metrics_row_to_json(const MetricsRow& r) {
  nlohmann::json j{{"key", r.key},
                   {"frames", r.frames},
                   {"accuracy", r.accuracy},
                   {"exit_fractions", r.exit_fractions},
                   {"exit_correct", r.exit_correct},
                   {"exit_incorrect", r.exit_incorrect},
                   {"mean_flops", r.mean_flops},
                   {"flop_reduction", r.flop_reduction}};
  if (!std::isnan(r.snr_db)) j["snr_db"] = r.snr_db;
  return j;
}

inline MetricsRow metrics_row_from_json(const nlohmann::json& j) {
  MetricsRow r;
  r.key = j.at("key").get<std::string>();
  if (j.contains("snr_db")) r.snr_db = j.at("snr_db").get<double>();
  r.frames = j.at("frames").get<double>();
  r.accuracy = j.at("accuracy").get<double>();
  auto fr = j.at("exit_fractions").get<std::vector<double>>();
  auto cor = j.at("exit_correct").get<std::vector<double>>();
  auto inc = j.at("exit_incorrect").get<std::vector<double>>();
  if (fr.size() != kNumExperts || cor.size() != kNumExperts || inc.size() != kNumExperts) {
    throw std::invalid_argument("metrics row: bad exit array length");
  }
  std::copy(fr.begin(), fr.end(), r.exit_fractions.begin());
  std::copy(cor.begin(), cor.end(), r.exit_correct.begin());
  std::copy(inc.begin(), inc.end(), r.exit_incorrect.begin());
  r.mean_flops = j.at("mean_flops").get<double>();
  r.flop_reduction = j.at("flop_reduction").get<double>();
  return r;
}

inline nlohmann::json metrics_table_to_json(const MetricsTable& t) {
  nlohmann::json rows = nlohmann::json::array();
  for (const MetricsRow& r : t.rows) rows.push_back(metrics_row_to_json(r));
  return rows;
}

inline MetricsTable metrics_table_from_json(const nlohmann::json& j) {
  MetricsTable t;
  for (const auto& row : j) t.rows.push_back(metrics_row_from_json(row));
  return t;
}

inline nlohmann::json run_metrics_to_json(const RunMetrics& rm) {
  return {{"seed", rm.seed},
          {"baseline_accuracy", metrics_table_to_json(rm.baseline_accuracy)},
          {"composite_accuracy", metrics_table_to_json(rm.composite_accuracy)},
          {"exits_by_snr", metrics_table_to_json(rm.exits_by_snr)},
          {"exits_by_mod", metrics_table_to_json(rm.exits_by_mod)},
          {"reduction_by_snr", metrics_table_to_json(rm.reduction_by_snr)},
          {"baseline_overall_accuracy", rm.baseline_overall_accuracy},
          {"composite_overall_accuracy", rm.composite_overall_accuracy},
          {"overall_reduction", rm.overall_reduction},
          {"spearman_snr_early_exit", rm.spearman_snr_early_exit}};
}

inline RunMetrics run_metrics_from_json(const nlohmann::json& j) {
  RunMetrics rm;
  rm.seed = j.at("seed").get<std::uint64_t>();
  rm.baseline_accuracy = metrics_table_from_json(j.at("baseline_accuracy"));
  rm.composite_accuracy = metrics_table_from_json(j.at("composite_accuracy"));
  rm.exits_by_snr = metrics_table_from_json(j.at("exits_by_snr"));
  rm.exits_by_mod = metrics_table_from_json(j.at("exits_by_mod"));
  rm.reduction_by_snr = metrics_table_from_json(j.at("reduction_by_snr"));
  rm.baseline_overall_accuracy = j.at("baseline_overall_accuracy").get<double>();
  rm.composite_overall_accuracy = j.at("composite_overall_accuracy").get<double>();
  rm.overall_reduction = j.at("overall_reduction").get<double>();
  rm.spearman_snr_early_exit = j.at("spearman_snr_early_exit").get<double>();
  return rm;
}

inline nlohmann::json run_report_to_json(const RunReport& report) {
  nlohmann::json runs = nlohmann::json::array();
  for (const RunMetrics& rm : report.runs) runs.push_back(run_metrics_to_json(rm));
  return {{"seeds", report.seeds},
          {"config_digest", report.config_digest},
          {"runs", runs},
          {"mean", run_metrics_to_json(report.mean)},
          {"stddev", run_metrics_to_json(report.stddev)}};
}

inline RunReport run_report_from_json(const nlohmann::json& j) {
  RunReport report;
  report.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  report.config_digest = j.at("config_digest").get<std::string>();
  for (const auto& r : j.at("runs")) report.runs.push_back(run_metrics_from_json(r));
  report.mean = run_metrics_from_json(j.at("mean"));
  report.stddev = run_metrics_from_json(j.at("stddev"));
  return report;
}

// ---------------------------------------------------------------------------
// Report emission
// ---------------------------------------------------------------------------

inline constexpr const char* kSnrRangeRule =
    "snr ranges are half-open [lo,hi); the full and top ranges include their upper bound";

namespace detail {

inline void write_table_csv(const std::filesystem::path& path, const MetricsTable& mean,
                            const MetricsTable& stddev) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("emit_report: cannot write " + path.string());
  out << "# " << kSnrRangeRule << '\n';
  out << "key,snr_db,frames,accuracy,accuracy_std,exit0,exit1,exit2,"
         "exit0_correct,exit1_correct,exit2_correct,"
         "exit0_incorrect,exit1_incorrect,exit2_incorrect,"
         "mean_flops,flop_reduction,flop_reduction_std\n";
  for (std::size_t i = 0; i < mean.rows.size(); ++i) {
    const MetricsRow& r = mean.rows[i];
    const MetricsRow& s = stddev.rows[i];
    out << r.key << ',';
    if (!std::isnan(r.snr_db)) out << r.snr_db;
    out << ',' << r.frames << ',' << r.accuracy << ',' << s.accuracy;
    for (double v : r.exit_fractions) out << ',' << v;
    for (double v : r.exit_correct) out << ',' << v;
    for (double v : r.exit_incorrect) out << ',' << v;
    out << ',' << r.mean_flops << ',' << r.flop_reduction << ',' << s.flop_reduction << '\n';
  }
}

inline std::vector<const MetricsRow*> snr_rows(const MetricsTable& table) {
  std::vector<const MetricsRow*> rows;
  for (const MetricsRow& r : table.rows) {
    if (!std::isnan(r.snr_db)) rows.push_back(&r);
  }
  return rows;
}

}  // namespace detail

// Writes the requested formats into out_dir: report.json; per-table CSVs;
// gnuplot-style .dat series over the SNR grid.
inline std::vector<std::string> emit_report(const RunReport& report,
                                            const std::string& out_dir,
                                            std::span<const std::string> formats) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  std::vector<std::string> written;
  for (const std::string& format : formats) {
    if (format == "json") {
      const fs::path path = fs::path(out_dir) / "report.json";
      std::ofstream out(path);
      if (!out) throw std::runtime_error("emit_report: cannot write " + path.string());
      out << run_report_to_json(report).dump(2) << '\n';
      written.push_back(path.string());
    } else if (format == "csv") {
      const std::array<std::pair<const char*, MetricsTable RunMetrics::*>, 5> tables{
          {{"baseline_accuracy.csv", &RunMetrics::baseline_accuracy},
           {"composite_accuracy.csv", &RunMetrics::composite_accuracy},
           {"exits_by_snr.csv", &RunMetrics::exits_by_snr},
           {"exits_by_mod.csv", &RunMetrics::exits_by_mod},
           {"reduction_by_snr.csv", &RunMetrics::reduction_by_snr}}};
      for (const auto& [name, member] : tables) {
        const fs::path path = fs::path(out_dir) / name;
        detail::write_table_csv(path, report.mean.*member, report.stddev.*member);
        written.push_back(path.string());
      }
    } else if (format == "plot-data") {
      const fs::path acc_path = fs::path(out_dir) / "plot_accuracy.dat";
      {
        std::ofstream out(acc_path);
        out << "# snr_db baseline_accuracy composite_accuracy\n";
        const auto base_rows = detail::snr_rows(report.mean.baseline_accuracy);
        const auto comp_rows = detail::snr_rows(report.mean.composite_accuracy);
        for (std::size_t i = 0; i < base_rows.size() && i < comp_rows.size(); ++i) {
          out << base_rows[i]->snr_db << ' ' << base_rows[i]->accuracy << ' '
              << comp_rows[i]->accuracy << '\n';
        }
      }
      written.push_back(acc_path.string());

      const fs::path red_path = fs::path(out_dir) / "plot_reduction.dat";
      {
        std::ofstream out(red_path);
        out << "# snr_db flop_reduction\n";
        for (const MetricsRow* r : detail::snr_rows(report.mean.reduction_by_snr)) {
          out << r->snr_db << ' ' << r->flop_reduction << '\n';
        }
      }
      written.push_back(red_path.string());

      const fs::path exit_path = fs::path(out_dir) / "plot_exits.dat";
      {
        std::ofstream out(exit_path);
        out << "# snr_db exit0 exit1 exit2\n";
        for (const MetricsRow* r : detail::snr_rows(report.mean.exits_by_snr)) {
          out << r->snr_db << ' ' << r->exit_fractions[0] << ' ' << r->exit_fractions[1]
              << ' ' << r->exit_fractions[2] << '\n';
        }
      }
      written.push_back(exit_path.string());
    } else {
      throw std::invalid_argument("emit_report: unknown format " + format);
    }
  }
  return written;
}

// ---------------------------------------------------------------------------
// Single experiment run
// ---------------------------------------------------------------------------

// Seed-path tags separating a run's independent random streams.
namespace detail {
inline constexpr std::uint64_t kRunDatasetTag = 41;
inline constexpr std::uint64_t kRunBaselineInitTag = 42;
inline constexpr std::uint64_t kRunCompositeInitTag = 43;
inline constexpr std::uint64_t kRunTrainTag = 44;
}  // namespace detail

struct ExperimentArtifacts {
  std::string dir;  // empty: keep everything in memory only
};

// One full train+evaluate run: fresh dataset, baseline training, two-phase
// composite training, inference on the test split, metric tables. All
// randomness derives from run_seed.
inline RunMetrics run_single_experiment(const DatasetConfig& dataset_template,
                                        const TrainConfig& train_template,
                                        const CompositeSpec& cspec, std::uint64_t run_seed,
                                        std::ostream* log = nullptr,
                                        const ExperimentArtifacts& artifacts = {}) {
  validate_composite_spec(cspec);

  DatasetConfig dcfg = dataset_template;
  dcfg.master_seed = derive_seed(run_seed, {detail::kRunDatasetTag});
  const DatasetBundle data = generate_dataset(dcfg);

  TrainConfig tcfg = train_template;
  tcfg.seed = derive_seed(run_seed, {detail::kRunTrainTag});

  const ModelSpec bspec = cspec.baseline_spec();

  ParamStore<float> baseline_store;
  Rng baseline_init(derive_seed(run_seed, {detail::kRunBaselineInitTag}));
  BaselineModel<float> baseline(bspec, baseline_store, &baseline_init);
  const TrainHistory baseline_history = train_baseline(baseline, baseline_store, data, tcfg);

  ParamStore<float> composite_store;
  Rng composite_init(derive_seed(run_seed, {detail::kRunCompositeInitTag}));
  CompositeModel<float> composite(cspec, composite_store, &composite_init);
  const TwoPhaseResult phase2 = two_phase_train(composite, composite_store, data, tcfg, log);

  const std::vector<ExitRecord> baseline_records =
      evaluate_baseline(baseline, data, Split::kTest, tcfg.window_offset);
  const std::vector<ExitRecord> composite_records = evaluate_dataset(
      composite, std::span<const ExitCriterion>(phase2.criteria), data, Split::kTest,
      tcfg.window_offset);

  const std::int64_t baseline_total = model_flop_report(bspec).total;

  RunMetrics rm;
  rm.seed = run_seed;
  rm.baseline_accuracy = accuracy_by_snr(baseline_records);
  rm.composite_accuracy = accuracy_by_snr(composite_records);
  rm.exits_by_snr = exit_distribution(composite_records, GroupBy::kSnr);
  rm.exits_by_mod = exit_distribution(composite_records, GroupBy::kModulation);
  rm.reduction_by_snr = flop_reduction_by_snr(composite_records, baseline_total);

  std::size_t base_correct = 0, comp_correct = 0;
  std::int64_t comp_flops = 0;
  std::vector<double> snrs, early;
  for (const ExitRecord& r : baseline_records) base_correct += (r.pred == r.label);
  for (const ExitRecord& r : composite_records) {
    comp_correct += (r.pred == r.label);
    comp_flops += r.flops_spent;
    snrs.push_back(r.snr_db);
    early.push_back(r.exit_index < kNumExperts - 1 ? 1.0 : 0.0);
  }
  rm.baseline_overall_accuracy =
      static_cast<double>(base_correct) / static_cast<double>(baseline_records.size());
  rm.composite_overall_accuracy =
      static_cast<double>(comp_correct) / static_cast<double>(composite_records.size());
  rm.overall_reduction = 1.0 - (static_cast<double>(comp_flops) /
                                static_cast<double>(composite_records.size())) /
                                   static_cast<double>(baseline_total);
  rm.spearman_snr_early_exit = spearman_correlation(snrs, early);

  if (!artifacts.dir.empty()) {
    namespace fs = std::filesystem;
    fs::create_directories(artifacts.dir);
    const fs::path dir(artifacts.dir);
    save_checkpoint(baseline, baseline_store, (dir / "baseline.ckpt").string(),
                    {{"seed", run_seed}, {"phase", "baseline"}});
    save_checkpoint(composite, composite_store, (dir / "composite.ckpt").string(),
                    phase2.criteria, {{"seed", run_seed}, {"phase", "two_phase"}});
    std::ofstream bh(dir / "baseline_history.csv");
    write_history_csv(bh, baseline_history);
    std::ofstream jh(dir / "joint_history.csv");
    write_history_csv(jh, phase2.joint_history);
    for (int e = 0; e < kNumExperts; ++e) {
      std::ofstream eh(dir / ("expert" + std::to_string(e) + "_history.csv"));
      write_history_csv(eh, phase2.expert_histories[static_cast<std::size_t>(e)]);
    }
    std::ofstream br(dir / "baseline_records.csv");
    write_records_csv(br, baseline_records);
    std::ofstream cr(dir / "composite_records.csv");
    write_records_csv(cr, composite_records);
  }
  return rm;
}

}  // namespace exitwise

#endif  // EXITWISE_EVALUATION_HPP

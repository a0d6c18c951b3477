// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <new>
#include <ostream>
#include <string>
#include <vector>

#include "sparsetuck/synthetic.hpp"
#include "sparsetuck/trainer.hpp"

namespace sparsetuck {

/// Nonzero count and Euclidean norm of each row of one factor matrix,
/// heaviest rows first. High-count rows mark slices that stay coupled to
/// many components after sparsification.
struct RowDensity {
  std::size_t row = 0;
  std::size_t nonzeros = 0;
  double norm = 0.0;
};

inline std::vector<RowDensity> row_density_report(const TuckerModel& m, std::size_t mode) {
  const std::size_t J = m.ranks[mode];
  std::vector<RowDensity> rows(m.dims[mode]);
  for (std::size_t i = 0; i < m.dims[mode]; ++i) {
    RowDensity& rd = rows[i];
    rd.row = i;
    double acc = 0.0;
    for (std::size_t j = 0; j < J; ++j) {
      const double v = m.factors[mode][i * J + j];
      rd.nonzeros += (v != 0.0);
      acc += v * v;
    }
    rd.norm = std::sqrt(acc);
  }
  std::sort(rows.begin(), rows.end(), [](const RowDensity& a, const RowDensity& b) {
    if (a.nonzeros != b.nonzeros) return a.nonzeros > b.nonzeros;
    return a.row < b.row;
  });
  return rows;
}

struct BenchConfig {
  std::vector<std::size_t> dims;
  std::vector<std::size_t> ranks;
  std::size_t nnz = 0;
};

struct BenchOptions {
  std::size_t iters = 3;  // sweeps timed per run
  std::size_t reps = 5;   // runs per cell; the median is reported
  Regularizer reg = Regularizer::LF;
  double lambda = 0.01;
  std::uint64_t seed = 0;
};

struct BenchResult {
  BenchConfig config;
  int threads = 1;
  double sec_per_iter = 0.0;
  double speedup = 1.0;  // against the first thread count of the sweep
  bool skipped = false;
  std::string note;
};

/// Times plain descent sweeps (no pruning, no early stop) for every
/// (config, thread count) pair. Each cell reports the median per-iteration
/// wall time over reps runs. Cells whose working set does not fit in
/// memory are reported as skipped instead of aborting the sweep.
inline std::vector<BenchResult> scaling_benchmark(const std::vector<BenchConfig>& configs,
                                                  const std::vector<int>& thread_counts,
                                                  const BenchOptions& opt = {}) {
  std::vector<BenchResult> out;
  for (const BenchConfig& bc : configs) {
    SyntheticData data;
    bool gen_failed = false;
    try {
      SyntheticSpec spec;
      spec.dims = bc.dims;
      spec.ranks = bc.ranks;
      spec.nnz = bc.nnz;
      spec.seed = opt.seed;
      data = gen_synthetic(spec);
    } catch (const std::bad_alloc&) {
      gen_failed = true;
    }

    double base = 0.0;
    for (std::size_t ti = 0; ti < thread_counts.size(); ++ti) {
      BenchResult cell;
      cell.config = bc;
      cell.threads = thread_counts[ti];
      if (gen_failed) {
        cell.skipped = true;
        cell.note = "allocation failed";
        out.push_back(std::move(cell));
        continue;
      }
      try {
        TrainConfig cfg;
        cfg.ranks = bc.ranks;
        cfg.reg = opt.reg;
        cfg.lambda = opt.lambda;
        cfg.max_iters = opt.iters;
        cfg.tol = 0.0;  // never converge early; time every sweep
        cfg.threads = cell.threads;
        cfg.seed = opt.seed;
        cfg.normalize_output = false;
        std::vector<double> times;
        for (std::size_t rep = 0; rep < opt.reps; ++rep) {
          const FitResult r = fit(data.tensor, cfg);
          times.push_back(r.report.elapsed_sec / double(opt.iters));
        }
        std::sort(times.begin(), times.end());
        cell.sec_per_iter = times[times.size() / 2];
        if (ti == 0) base = cell.sec_per_iter;
        cell.speedup = cell.sec_per_iter > 0.0 ? base / cell.sec_per_iter : 0.0;
      } catch (const std::bad_alloc&) {
        cell.skipped = true;
        cell.note = "allocation failed";
      }
      out.push_back(std::move(cell));
    }
  }
  return out;
}

namespace detail {

inline std::string json_num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  std::string s(buf);
  // JSON has no infinity literals; the report never produces them, but be
  // explicit rather than emit an invalid token.
  if (s.find("inf") != std::string::npos || s.find("nan") != std::string::npos) s = "null";
  return s;
}

}  // namespace detail

/// One JSON object per training iteration, stable key order.
inline void write_report_jsonl(const TrainReport& report, std::ostream& out) {
  for (const IterationReport& it : report.iterations) {
    out << "{\"iter\":" << it.iter << ",\"re\":" << detail::json_num(it.re)
        << ",\"prune_rate\":" << detail::json_num(it.prune_rate)
        << ",\"pruned\":" << (it.pruned ? "true" : "false")
        << ",\"pruned_core\":" << it.pruned_core << ",\"pruned_factors\":[";
    for (std::size_t n = 0; n < it.pruned_factors.size(); ++n)
      out << (n ? "," : "") << it.pruned_factors[n];
    out << "],\"sparsity\":" << detail::json_num(it.sparsity)
        << ",\"masked\":" << detail::json_num(it.masked)
        << ",\"wall_ms\":" << detail::json_num(it.wall_ms) << "}\n";
  }
}

inline void write_bench_csv(const std::vector<BenchResult>& cells, std::ostream& out) {
  out << "order,dims,ranks,nnz,threads,sec_per_iter,speedup,skipped,note\n";
  auto join = [](const std::vector<std::size_t>& v) {
    std::string s;
    for (std::size_t k = 0; k < v.size(); ++k) s += (k ? "x" : "") + std::to_string(v[k]);
    return s;
  };
  for (const BenchResult& c : cells) {
    out << c.config.dims.size() << ',' << join(c.config.dims) << ',' << join(c.config.ranks)
        << ',' << c.config.nnz << ',' << c.threads << ',' << detail::json_num(c.sec_per_iter)
        << ',' << detail::json_num(c.speedup) << ',' << (c.skipped ? 1 : 0) << ','
        << c.note << '\n';
  }
}

}  // namespace sparsetuck

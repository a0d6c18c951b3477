// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <stdexcept>
#include <thread>
#include <vector>

#include "sparsetuck/pruning.hpp"
#include "sparsetuck/sparse_tensor.hpp"
#include "sparsetuck/tucker_model.hpp"
#include "sparsetuck/updates.hpp"

namespace sparsetuck {

/// Thread-count resolution: an explicit positive request wins, then the
/// SPARSETUCK_THREADS environment variable, then the hardware thread count.
inline int resolve_threads(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("SPARSETUCK_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<int>(v);
  }
  const unsigned hc = std::thread::hardware_concurrency();
  return hc > 0 ? static_cast<int>(hc) : 1;
}

struct TrainConfig {
  std::vector<std::size_t> ranks;
  Regularizer reg = Regularizer::LF;
  double lambda = 0.01;

  StopMode mode = StopMode::Manual;
  double target_sparsity = 0.0;  // manual mode: prune until this zero fraction
  double elbow_threshold = 0.05;  // auto mode: elbow sensitivity
  PruneSchedule schedule{};

  std::size_t max_iters = 100;
  double tol = 1e-4;  // stop when |re(t-1) - re(t)| < tol
  int threads = 0;    // <= 0: resolve_threads decides
  std::uint64_t seed = 0;
  bool normalize_output = true;  // unit-norm factor columns on the way out
};

/// One outer iteration as recorded for reporting: the error is measured
/// after the update sweeps and before any pruning, the sparsity and mask
/// fractions after.
struct IterationReport {
  std::size_t iter = 0;  // 1-based
  double re = 0.0;
  double prune_rate = 0.0;
  bool pruned = false;
  std::size_t pruned_core = 0;
  std::vector<std::size_t> pruned_factors;
  double sparsity = 0.0;
  double masked = 0.0;
  double wall_ms = 0.0;
};

struct TrainReport {
  std::vector<IterationReport> iterations;
  bool converged = false;  // stopped on tol rather than max_iters
  std::size_t iters = 0;
  double final_re = 0.0;
  double final_sparsity = 0.0;
  double final_masked = 0.0;
  double elapsed_sec = 0.0;
};

struct FitResult {
  TuckerModel model;
  TrainReport report;
};

namespace detail {

inline void check_config(const SparseTensor& x, const TrainConfig& cfg) {
  if (cfg.ranks.size() != x.order()) throw std::invalid_argument("ranks order mismatch");
  for (std::size_t r : cfg.ranks)
    if (r == 0) throw std::invalid_argument("ranks must be positive");
  if (!(cfg.lambda >= 0.0)) throw std::invalid_argument("lambda must be nonnegative");
  if (!(cfg.tol >= 0.0)) throw std::invalid_argument("tol must be nonnegative");
  if (cfg.max_iters == 0) throw std::invalid_argument("max_iters must be positive");
  if (!(cfg.target_sparsity >= 0.0 && cfg.target_sparsity < 1.0))
    throw std::invalid_argument("target sparsity must be in [0, 1)");
  cfg.schedule.validate();
  if (x.nnz() == 0) throw std::invalid_argument("empty tensor");
  if (x.frobenius_norm() == 0.0)
    throw std::invalid_argument("tensor values are all zero; nothing to fit");
}

}  // namespace detail

/// Alternating element-wise descent with gradual pruning. Each outer
/// iteration sweeps every factor matrix and then the core, measures the
/// error, and (while the stop controller allows) masks the lowest-
/// responsibility elements at the scheduled rate. Stops when the error
/// change falls below tol or after max_iters sweeps. With a fixed seed the
/// result is bit-identical for every thread count.
inline FitResult fit(const SparseTensor& x, const TrainConfig& cfg) {
  detail::check_config(x, cfg);
  const int T = resolve_threads(cfg.threads);
  const auto t_start = std::chrono::steady_clock::now();

  FitResult out;
  out.model = init_random(x.dims, cfg.ranks, cfg.seed);
  TuckerModel& m = out.model;
  const ModeIndex idx = build_mode_index(x);

  StopController ctrl;
  ctrl.mode = cfg.mode;
  ctrl.target_sparsity = cfg.target_sparsity;
  ctrl.elbow_threshold = cfg.elbow_threshold;

  double prev_re = std::numeric_limits<double>::infinity();
  for (std::size_t t = 1; t <= cfg.max_iters; ++t) {
    const auto it_start = std::chrono::steady_clock::now();
    update_all_factors(m, x, idx, cfg.reg, cfg.lambda, T);
    if (cfg.reg == Regularizer::LF)
      update_core_lf(m, x, cfg.lambda, T);
    else
      update_core_l1(m, x, cfg.lambda, T);

    const Residuals res = compute_residuals(m, x, T);
    const double pr = cfg.schedule.rate(t);

    IterationReport rec;
    rec.iter = t;
    rec.re = res.re;
    rec.prune_rate = pr;
    rec.pruned_factors.assign(x.order(), 0);
    if (ctrl.should_prune(sparsity(m), res.re, pr)) {
      const ResponsibilityTable table = compute_responsibilities(m, x, idx, res, T);
      const PruneCounts counts = prune_step(m, table, pr);
      if (counts.total() > 0) {
        ctrl.record_prune_event(res.re);
        rec.pruned = true;
        rec.pruned_core = counts.core;
        rec.pruned_factors = counts.factors;
      }
    }
    rec.sparsity = sparsity(m);
    rec.masked = masked_fraction(m);
    rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                            it_start)
                      .count();
    out.report.iterations.push_back(std::move(rec));

    if (std::abs(prev_re - res.re) < cfg.tol) {
      out.report.converged = true;
      break;
    }
    prev_re = res.re;
  }

  if (cfg.normalize_output) normalize_columns(m);

  out.report.iters = out.report.iterations.size();
  out.report.final_re = reconstruction_error(m, x);
  out.report.final_sparsity = sparsity(m);
  out.report.final_masked = masked_fraction(m);
  out.report.elapsed_sec =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return out;
}

/// Reconstruction at arbitrary coordinates, given flattened as order()
/// consecutive values per query.
inline std::vector<double> predict(const TuckerModel& m, std::span<const Coord> flat_coords) {
  const std::size_t n = m.order();
  if (n == 0 || flat_coords.size() % n != 0)
    throw std::invalid_argument("coordinate buffer must hold order() values per query");
  const std::size_t q = flat_coords.size() / n;
  std::vector<double> out(q);
  for (std::size_t k = 0; k < q; ++k) {
    const Coord* at = flat_coords.data() + k * n;
    for (std::size_t d = 0; d < n; ++d)
      if (at[d] >= m.dims[d]) throw std::invalid_argument("query coordinate out of bounds");
    out[k] = reconstruct_entry(m, at);
  }
  return out;
}

/// Relative error of the model on held-out entries.
inline double evaluate_test(const TuckerModel& m, const SparseTensor& test) {
  return reconstruction_error(m, test);
}

}  // namespace sparsetuck

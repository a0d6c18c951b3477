// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <vector>

#include "sparsetuck/sparse_tensor.hpp"
#include "sparsetuck/tucker_model.hpp"
#include "sparsetuck/updates.hpp"

namespace sparsetuck {

/// Prune-rate ramp: rate(t) = min(init_pr * t, max_pr) for the 1-based
/// outer iteration t. The defaults reach the 10% cap after ten
/// iterations.
struct PruneSchedule {
  double init_pr = 0.01;
  double max_pr = 0.1;

  void validate() const {
    if (!(init_pr > 0.0 && init_pr <= max_pr && max_pr < 1.0))
      throw std::invalid_argument("require 0 < init_pr <= max_pr < 1");
  }

  double rate(std::size_t iter) const {
    if (iter == 0) throw std::invalid_argument("iterations are 1-based");
    return std::min(init_pr * double(iter), max_pr);
  }
};

enum class StopMode { Manual, Auto };

/// Decides, once per outer iteration, whether this iteration should prune.
/// Manual mode prunes until the model's zero fraction reaches the target.
/// Auto mode watches the errors recorded at pruning iterations and stops
/// at the elbow: with re(k) the error at the k-th pruning iteration, it
/// stops when (re_now + re(k-1) - 2*re(k)) / pr exceeds the threshold,
/// i.e. when the error curve bends up faster than the prune rate explains.
/// Both modes latch: after the first "stop" the answer stays false. A
/// perfect fit (re == 0) never prunes but does not latch.
struct StopController {
  StopMode mode = StopMode::Manual;
  double target_sparsity = 0.0;
  double elbow_threshold = 0.05;

  bool should_prune(double current_sparsity, double re, double pr) {
    if (stopped_) return false;
    if (re == 0.0) return false;
    if (mode == StopMode::Manual) {
      if (current_sparsity >= target_sparsity) {
        stopped_ = true;
        return false;
      }
      return true;
    }
    if (history_.size() >= 2) {
      const double prev = history_[history_.size() - 1];
      const double prev2 = history_[history_.size() - 2];
      const double stat = (re + prev2 - 2.0 * prev) / pr;
      if (stat > elbow_threshold) {
        stopped_ = true;
        return false;
      }
    }
    return true;
  }

  /// Call after an iteration that actually removed elements, with the
  /// error that iteration's decision was based on.
  void record_prune_event(double re) { history_.push_back(re); }

  bool stopped() const { return stopped_; }

 private:
  bool stopped_ = false;
  std::vector<double> history_;
};

/// How much the relative error would grow if one element were zeroed:
/// resp = (re_without_element - re) / re. Pruned positions carry +inf so
/// they can never be selected again. If re == 0 every responsibility is
/// +inf (zeroing anything can only hurt a perfect fit).
struct ResponsibilityTable {
  std::vector<double> core;                  // core_size()
  std::vector<std::vector<double>> factors;  // [n]: dims[n] x ranks[n]
  double base_re = 0.0;
};

/// Core responsibilities from the residual cache, without refitting:
/// zeroing core cell beta shifts each residual by core[beta] times the
/// matching factor product, so the shifted error is summed directly.
/// Parallel over core cells; each cell's sum runs serially in entry order,
/// so results are bit-identical across thread counts.
inline std::vector<double> compute_core_responsibilities(const TuckerModel& m,
                                                         const SparseTensor& x,
                                                         const Residuals& res, int threads = 1) {
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> resp(m.core_size(), inf);
  if (res.re == 0.0) return resp;
  const std::size_t n = m.order();
  const int T = threads > 0 ? threads : 1;

  // Precompute each cell's multi-index once; cells are then independent.
  const std::size_t csize = m.core_size();
  std::vector<std::size_t> beta(n, 0);
  std::vector<std::size_t> multi(csize * n);
  std::size_t lin = 0;
  do {
    for (std::size_t k = 0; k < n; ++k) multi[lin * n + k] = beta[k];
    ++lin;
  } while (detail::advance_multi_index(beta, m.ranks));

#pragma omp parallel for schedule(dynamic, 1) num_threads(T)
  for (std::ptrdiff_t c = 0; c < static_cast<std::ptrdiff_t>(csize); ++c) {
    if (m.core_mask[c]) continue;  // stays +inf
    const std::size_t* b = multi.data() + std::size_t(c) * n;
    const double g = m.core[c];
    double acc = 0.0;
    for (std::size_t e = 0; e < x.nnz(); ++e) {
      const Coord* at = x.entry(e);
      double p = 1.0;
      for (std::size_t k = 0; k < n; ++k) p *= m.factors[k][at[k] * m.ranks[k] + b[k]];
      const double t = res.r[e] + g * p;
      acc += t * t;
    }
    const double re_without = std::sqrt(acc) / res.x_norm;
    resp[c] = (re_without - res.re) / res.re;
  }
  return resp;
}

/// Factor responsibilities for one mode. Zeroing element (i, j) only
/// touches the residuals of row i's observed entries, and the shifted
/// error squared is re^2 plus sum_e (2 r_e + P_e) P_e / ||x||^2 with
/// P_e = delta_e(j) * a(i, j); tiny negative values from cancellation are
/// clamped to zero before the square root. Parallel over rows.
inline std::vector<double> compute_factor_responsibilities(const TuckerModel& m,
                                                           const SparseTensor& x,
                                                           const ModeIndex& idx, std::size_t mode,
                                                           const Residuals& res,
                                                           int threads = 1) {
  const double inf = std::numeric_limits<double>::infinity();
  const std::size_t J = m.ranks[mode];
  const std::size_t I = m.dims[mode];
  std::vector<double> resp(I * J, inf);
  if (res.re == 0.0) return resp;
  const int T = threads > 0 ? threads : 1;
  const double x2 = res.x_norm * res.x_norm;
  const double re2 = res.re * res.re;

#pragma omp parallel num_threads(T)
  {
    std::vector<double> delta(J);
    std::vector<double> acc(J);
#pragma omp for schedule(dynamic, 4)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(I); ++i) {
      std::fill(acc.begin(), acc.end(), 0.0);
      for (EntryId e : idx.slice(mode, static_cast<Coord>(i))) {
        compute_delta(m, x.entry(e), mode, delta);
        const double r = res.r[e];
        for (std::size_t j = 0; j < J; ++j) {
          const double p = delta[j] * m.factors[mode][std::size_t(i) * J + j];
          acc[j] += (2.0 * r + p) * p;
        }
      }
      for (std::size_t j = 0; j < J; ++j) {
        if (m.factor_masks[mode][std::size_t(i) * J + j]) continue;  // stays +inf
        double err2 = re2 + acc[j] / x2;
        if (err2 < 0.0) err2 = 0.0;
        resp[std::size_t(i) * J + j] = (std::sqrt(err2) - res.re) / res.re;
      }
    }
  }
  return resp;
}

inline ResponsibilityTable compute_responsibilities(const TuckerModel& m, const SparseTensor& x,
                                                    const ModeIndex& idx, const Residuals& res,
                                                    int threads = 1) {
  ResponsibilityTable t;
  t.base_re = res.re;
  t.core = compute_core_responsibilities(m, x, res, threads);
  t.factors.resize(m.order());
  for (std::size_t n = 0; n < m.order(); ++n)
    t.factors[n] = compute_factor_responsibilities(m, x, idx, n, res, threads);
  return t;
}

struct PruneCounts {
  std::size_t core = 0;
  std::vector<std::size_t> factors;

  std::size_t total() const {
    std::size_t s = core;
    for (std::size_t f : factors) s += f;
    return s;
  }
};

namespace detail {

inline std::size_t prune_lowest(std::span<const double> resp, std::size_t want,
                                std::span<double> values, std::span<std::uint8_t> mask) {
  std::vector<std::size_t> cand;
  cand.reserve(resp.size());
  for (std::size_t i = 0; i < resp.size(); ++i)
    if (!mask[i]) cand.push_back(i);
  const std::size_t take = std::min(want, cand.size());
  if (take == 0) return 0;
  // Lowest responsibility first; ties broken by the smaller linear index.
  std::sort(cand.begin(), cand.end(), [&](std::size_t a, std::size_t b) {
    if (resp[a] != resp[b]) return resp[a] < resp[b];
    return a < b;
  });
  for (std::size_t k = 0; k < take; ++k) {
    values[cand[k]] = 0.0;
    mask[cand[k]] = 1;
  }
  return take;
}

}  // namespace detail

/// Masks the floor(pr * size) lowest-responsibility unpruned positions of
/// the core and of every factor matrix, where size is the full element
/// count of that block (pruned positions included). Masked positions are
/// zeroed and stay zero. Returns how many elements were removed per block;
/// the counts fall short of the floor only when too few unpruned positions
/// remain.
inline PruneCounts prune_step(TuckerModel& m, const ResponsibilityTable& t, double pr) {
  if (!(pr >= 0.0 && pr < 1.0)) throw std::invalid_argument("prune rate must be in [0, 1)");
  PruneCounts counts;
  counts.core = detail::prune_lowest(
      t.core, static_cast<std::size_t>(pr * double(m.core_size())), m.core, m.core_mask);
  counts.factors.resize(m.order());
  for (std::size_t n = 0; n < m.order(); ++n) {
    const std::size_t size = m.dims[n] * m.ranks[n];
    counts.factors[n] = detail::prune_lowest(t.factors[n],
                                             static_cast<std::size_t>(pr * double(size)),
                                             m.factors[n], m.factor_masks[n]);
  }
  return counts;
}

}  // namespace sparsetuck

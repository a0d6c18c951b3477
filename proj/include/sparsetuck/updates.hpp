// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "sparsetuck/sparse_tensor.hpp"
#include "sparsetuck/tucker_model.hpp"

namespace sparsetuck {

enum class Regularizer { LF, L1 };

/// Per-thread workspace for one factor-row update. delta holds the
/// mode-n slice sums for one observed entry; gram and xdelta accumulate
/// the quadratic/linear row statistics over the row's observed entries.
struct RowUpdateScratch {
  std::vector<double> delta;   // J
  std::vector<double> gram;    // J x J, gram[t*J+j] = sum_e delta(t)*delta(j)
  std::vector<double> xdelta;  // J, sum_e x[e]*delta(j)

  void reset(std::size_t J) {
    delta.assign(J, 0.0);
    gram.assign(J * J, 0.0);
    xdelta.assign(J, 0.0);
  }
};

/// delta(j) for every j at once: the reconstruction of the entry with the
/// mode-n factor row replaced by the j-th unit vector. One pass over the
/// core; out must have ranks[mode] slots.
inline void compute_delta(const TuckerModel& m, const Coord* at, std::size_t mode,
                          std::span<double> out) {
  const std::size_t n = m.order();
  const std::size_t J = m.ranks[mode];
  for (std::size_t j = 0; j < J; ++j) out[j] = 0.0;
  std::vector<std::size_t> beta(n, 0);
  std::size_t lin = 0;
  do {
    const double g = m.core[lin];
    if (g != 0.0) {
      double p = g;
      for (std::size_t k = 0; k < n; ++k)
        if (k != mode) p *= m.factors[k][at[k] * m.ranks[k] + beta[k]];
      out[beta[mode]] += p;
    }
    ++lin;
  } while (detail::advance_multi_index(beta, m.ranks));
}

inline std::vector<double> compute_delta(const TuckerModel& m, const Coord* at,
                                         std::size_t mode) {
  std::vector<double> out(m.ranks[mode]);
  compute_delta(m, at, mode, out);
  return out;
}

/// Accumulates gram and xdelta over the observed entries of row i of mode
/// n. The statistics do not involve the row's own values, so they stay
/// valid while the row's elements are rewritten one at a time.
inline void compute_row_stats(const TuckerModel& m, const SparseTensor& x, const ModeIndex& idx,
                              std::size_t mode, std::size_t i, RowUpdateScratch& s) {
  const std::size_t J = m.ranks[mode];
  s.reset(J);
  for (EntryId e : idx.slice(mode, static_cast<Coord>(i))) {
    compute_delta(m, x.entry(e), mode, s.delta);
    const double xv = x.values[e];
    for (std::size_t t = 0; t < J; ++t) {
      const double dt = s.delta[t];
      if (dt == 0.0) continue;
      s.xdelta[t] += xv * dt;
      double* row = s.gram.data() + t * J;
      for (std::size_t j = 0; j < J; ++j) row[j] += dt * s.delta[j];
    }
  }
}

/// Ridge update of one factor row. Each unpruned element is set, in
/// ascending column order, to the exact minimizer of the squared-error
/// plus lambda * element^2 objective with every other model element held
/// fixed. Later columns see the earlier columns' fresh values. Rows with
/// no observed entries are left untouched; a zero denominator (possible
/// only when lambda == 0 and the column has no support) leaves the
/// element unchanged.
inline void update_factor_row_lf(TuckerModel& m, const SparseTensor& x, const ModeIndex& idx,
                                 std::size_t mode, std::size_t i, double lambda,
                                 RowUpdateScratch& s) {
  if (idx.slice(mode, static_cast<Coord>(i)).empty()) return;
  const std::size_t J = m.ranks[mode];
  compute_row_stats(m, x, idx, mode, i, s);
  double* row = m.factors[mode].data() + i * J;
  const std::uint8_t* mask = m.factor_masks[mode].data() + i * J;
  for (std::size_t j = 0; j < J; ++j) {
    if (mask[j]) continue;
    const double* gj = s.gram.data() + j * J;
    double num = s.xdelta[j];
    for (std::size_t t = 0; t < J; ++t)
      if (t != j) num -= gj[t] * row[t];
    const double den = gj[j] + lambda;
    if (den == 0.0) continue;
    row[j] = num / den;
  }
}

/// Lasso update of one factor row: the soft-threshold minimizer of the
/// squared-error plus lambda * |element| objective, element by element in
/// ascending column order. Unlike the ridge path, rows without observed
/// entries are still processed: their curvature is zero, the subgradient
/// condition holds at zero, and the elements are set to exactly 0.0.
inline void update_factor_row_l1(TuckerModel& m, const SparseTensor& x, const ModeIndex& idx,
                                 std::size_t mode, std::size_t i, double lambda,
                                 RowUpdateScratch& s) {
  const std::size_t J = m.ranks[mode];
  compute_row_stats(m, x, idx, mode, i, s);
  double* row = m.factors[mode].data() + i * J;
  const std::uint8_t* mask = m.factor_masks[mode].data() + i * J;
  for (std::size_t j = 0; j < J; ++j) {
    if (mask[j]) continue;
    const double* gj = s.gram.data() + j * J;
    double lin = s.xdelta[j];
    for (std::size_t t = 0; t < J; ++t)
      if (t != j) lin -= gj[t] * row[t];
    const double g = -2.0 * lin;
    const double d = 2.0 * gj[j];
    if (d == 0.0) {
      if (std::abs(g) <= lambda) row[j] = 0.0;
      continue;
    }
    if (g > lambda)
      row[j] = (lambda - g) / d;
    else if (g < -lambda)
      row[j] = -(lambda + g) / d;
    else
      row[j] = 0.0;
  }
}

inline void update_factor_row_lf(TuckerModel& m, const SparseTensor& x, const ModeIndex& idx,
                                 std::size_t mode, std::size_t i, double lambda) {
  RowUpdateScratch s;
  update_factor_row_lf(m, x, idx, mode, i, lambda, s);
}

inline void update_factor_row_l1(TuckerModel& m, const SparseTensor& x, const ModeIndex& idx,
                                 std::size_t mode, std::size_t i, double lambda) {
  RowUpdateScratch s;
  update_factor_row_l1(m, x, idx, mode, i, lambda, s);
}

/// One full pass over every factor matrix, modes in ascending order. Rows
/// within a mode are independent (the row statistics never read the row
/// being written), so they are distributed across threads; the result is
/// bit-identical for every thread count.
inline void update_all_factors(TuckerModel& m, const SparseTensor& x, const ModeIndex& idx,
                               Regularizer reg, double lambda, int threads = 1) {
  if (m.dims != x.dims) throw std::invalid_argument("model/tensor shape mismatch");
  const int T = threads > 0 ? threads : 1;
  for (std::size_t mode = 0; mode < m.order(); ++mode) {
    const auto rows = static_cast<std::ptrdiff_t>(m.dims[mode]);
#pragma omp parallel num_threads(T)
    {
      RowUpdateScratch s;
#pragma omp for schedule(dynamic, 8)
      for (std::ptrdiff_t i = 0; i < rows; ++i) {
        if (reg == Regularizer::LF)
          update_factor_row_lf(m, x, idx, mode, static_cast<std::size_t>(i), lambda, s);
        else
          update_factor_row_l1(m, x, idx, mode, static_cast<std::size_t>(i), lambda, s);
      }
    }
  }
}

namespace detail {

/// Shared core sweep. Maintains a running reconstruction cache so each
/// core element sees the effect of the elements updated before it. Core
/// cells are visited serially in row-major order and the per-cell sums are
/// accumulated serially in entry order; only the embarrassingly parallel
/// per-entry products run on the thread team. This keeps the sweep
/// bit-identical across thread counts.
inline void core_sweep(TuckerModel& m, const SparseTensor& x, Regularizer reg, double lambda,
                       int threads) {
  if (m.dims != x.dims) throw std::invalid_argument("model/tensor shape mismatch");
  const int T = threads > 0 ? threads : 1;
  const auto nnz = static_cast<std::ptrdiff_t>(x.nnz());
  std::vector<double> recon(x.nnz());
#pragma omp parallel for schedule(static) num_threads(T)
  for (std::ptrdiff_t e = 0; e < nnz; ++e) recon[e] = reconstruct_entry(m, x.entry(e));

  std::vector<double> prod(x.nnz());
  const std::size_t n = m.order();
  std::vector<std::size_t> beta(n, 0);
  std::size_t lin = 0;
  do {
    if (m.core_mask[lin]) {
      ++lin;
      continue;
    }
    const double g_old = m.core[lin];
#pragma omp parallel for schedule(static) num_threads(T)
    for (std::ptrdiff_t e = 0; e < nnz; ++e) {
      const Coord* at = x.entry(e);
      double p = 1.0;
      for (std::size_t k = 0; k < n; ++k) p *= m.factors[k][at[k] * m.ranks[k] + beta[k]];
      prod[e] = p;
    }
    double num = 0.0;
    double den = 0.0;
    for (std::ptrdiff_t e = 0; e < nnz; ++e) {
      const double p = prod[e];
      num += (x.values[e] - recon[e] + g_old * p) * p;
      den += p * p;
    }
    double g_new = g_old;
    if (reg == Regularizer::LF) {
      // Exact ridge minimizer; zero denominator (lambda == 0 and no
      // support) leaves the element unchanged.
      if (den + lambda != 0.0) g_new = num / (den + lambda);
    } else {
      // Soft-threshold minimizer; zero curvature leaves the element
      // unchanged, matching the ridge policy.
      const double g = -2.0 * num;
      const double d = 2.0 * den;
      if (d != 0.0) {
        if (g > lambda)
          g_new = (lambda - g) / d;
        else if (g < -lambda)
          g_new = -(lambda + g) / d;
        else
          g_new = 0.0;
      }
    }
    if (g_new != g_old) {
      m.core[lin] = g_new;
      const double dg = g_new - g_old;
#pragma omp parallel for schedule(static) num_threads(T)
      for (std::ptrdiff_t e = 0; e < nnz; ++e) recon[e] += dg * prod[e];
    }
    ++lin;
  } while (advance_multi_index(beta, m.ranks));
}

}  // namespace detail

/// One full ridge pass over the core, element by element in row-major
/// order. Each unpruned element is set to the exact 1-D minimizer given
/// the current state, including the core elements already updated in this
/// pass.
inline void update_core_lf(TuckerModel& m, const SparseTensor& x, double lambda,
                           int threads = 1) {
  detail::core_sweep(m, x, Regularizer::LF, lambda, threads);
}

/// Lasso counterpart of update_core_lf (soft-threshold 1-D minimizers).
inline void update_core_l1(TuckerModel& m, const SparseTensor& x, double lambda,
                           int threads = 1) {
  detail::core_sweep(m, x, Regularizer::L1, lambda, threads);
}

}  // namespace sparsetuck

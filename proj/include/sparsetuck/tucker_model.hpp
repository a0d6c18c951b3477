// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include "sparsetuck/sparse_tensor.hpp"

namespace sparsetuck {

/// Tucker factorization state: a dense core of shape ranks[0] x ... x
/// ranks[N-1] (row-major) plus one dense factor matrix per mode
/// (dims[n] x ranks[n], row-major). Masks mark pruned positions; a pruned
/// position always holds the value 0.0 and is never written again by the
/// update or normalization routines. Elements may also become 0.0 without
/// being masked; such incidental zeros stay updatable.
struct TuckerModel {
  std::vector<std::size_t> dims;
  std::vector<std::size_t> ranks;
  std::vector<double> core;                         // row-major over ranks
  std::vector<std::uint8_t> core_mask;              // 1 = pruned
  std::vector<std::vector<double>> factors;         // [n]: dims[n] x ranks[n]
  std::vector<std::vector<std::uint8_t>> factor_masks;

  std::size_t order() const { return dims.size(); }

  std::size_t core_size() const {
    std::size_t s = 1;
    for (std::size_t r : ranks) s *= r;
    return s;
  }

  double factor_at(std::size_t n, std::size_t i, std::size_t j) const {
    return factors[n][i * ranks[n] + j];
  }

  /// Total number of model elements (core plus all factor matrices).
  std::size_t num_elements() const {
    std::size_t s = core_size();
    for (std::size_t n = 0; n < order(); ++n) s += dims[n] * ranks[n];
    return s;
  }
};

namespace detail {

inline std::vector<std::size_t> row_major_strides(const std::vector<std::size_t>& shape) {
  std::vector<std::size_t> s(shape.size(), 1);
  for (std::size_t k = shape.size(); k-- > 1;) s[k - 1] = s[k] * shape[k];
  return s;
}

/// Advances a row-major multi-index; returns false after the last cell.
inline bool advance_multi_index(std::vector<std::size_t>& idx,
                                const std::vector<std::size_t>& shape) {
  for (std::size_t k = idx.size(); k-- > 0;) {
    if (++idx[k] < shape[k]) return true;
    idx[k] = 0;
  }
  return false;
}

inline void check_model(const TuckerModel& m) {
  const std::size_t n = m.order();
  if (n == 0) throw std::invalid_argument("model order must be at least 1");
  if (m.ranks.size() != n) throw std::invalid_argument("ranks/dims order mismatch");
  for (std::size_t k = 0; k < n; ++k) {
    if (m.dims[k] == 0 || m.ranks[k] == 0)
      throw std::invalid_argument("dims and ranks must be positive");
    if (m.factors[k].size() != m.dims[k] * m.ranks[k] ||
        m.factor_masks[k].size() != m.factors[k].size())
      throw std::invalid_argument("factor buffer size mismatch");
  }
  if (m.core.size() != m.core_size() || m.core_mask.size() != m.core.size())
    throw std::invalid_argument("core buffer size mismatch");
}

}  // namespace detail

/// Fresh unmasked model with all elements drawn uniformly from [0, 1).
/// The draw order (factors mode by mode, row-major, then the core) is part
/// of the contract: a fixed seed yields the same model on every platform
/// with the same standard library.
inline TuckerModel init_random(const std::vector<std::size_t>& dims,
                               const std::vector<std::size_t>& ranks, std::uint64_t seed) {
  if (dims.size() != ranks.size()) throw std::invalid_argument("ranks/dims order mismatch");
  TuckerModel m;
  m.dims = dims;
  m.ranks = ranks;
  m.factors.resize(dims.size());
  m.factor_masks.resize(dims.size());
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (std::size_t n = 0; n < dims.size(); ++n) {
    m.factors[n].resize(dims[n] * ranks[n]);
    m.factor_masks[n].assign(m.factors[n].size(), 0);
    for (double& v : m.factors[n]) v = unif(rng);
  }
  m.core.resize(m.core_size());
  m.core_mask.assign(m.core.size(), 0);
  for (double& v : m.core) v = unif(rng);
  detail::check_model(m);
  return m;
}

/// Value of the factorization at one coordinate: the sum over all core
/// cells of the core value times the matching factor entries, one per mode.
inline double reconstruct_entry(const TuckerModel& m, const Coord* at) {
  const std::size_t n = m.order();
  std::vector<std::size_t> beta(n, 0);
  double acc = 0.0;
  std::size_t lin = 0;
  do {
    const double g = m.core[lin];
    if (g != 0.0) {
      double p = g;
      for (std::size_t k = 0; k < n; ++k) p *= m.factors[k][at[k] * m.ranks[k] + beta[k]];
      acc += p;
    }
    ++lin;
  } while (detail::advance_multi_index(beta, m.ranks));
  return acc;
}

inline double reconstruct_entry(const TuckerModel& m, std::span<const Coord> at) {
  return reconstruct_entry(m, at.data());
}

/// Like reconstruct_entry but restricted to the core slice whose mode-n
/// index equals j. Summing this over j = 0..ranks[n)-1 recovers the full
/// reconstruction.
inline double partial_reconstruct(const TuckerModel& m, const Coord* at, std::size_t mode,
                                  std::size_t j) {
  const std::size_t n = m.order();
  std::vector<std::size_t> beta(n, 0);
  double acc = 0.0;
  std::size_t lin = 0;
  do {
    if (beta[mode] == j) {
      const double g = m.core[lin];
      if (g != 0.0) {
        double p = g;
        for (std::size_t k = 0; k < n; ++k) p *= m.factors[k][at[k] * m.ranks[k] + beta[k]];
        acc += p;
      }
    }
    ++lin;
  } while (detail::advance_multi_index(beta, m.ranks));
  return acc;
}

/// Residuals r[e] = x[e] - reconstruction(e) over the observed entries,
/// with the relative error re = ||r|| / ||x|| and the pieces needed to
/// reuse the same accumulation elsewhere. Entries are reconstructed in
/// parallel; the sums are taken serially in entry order so the result does
/// not depend on the thread count.
struct Residuals {
  std::vector<double> r;
  double sum_sq = 0.0;  // sum of squared residuals, entry order
  double x_norm = 0.0;
  double re = 0.0;
};

inline Residuals compute_residuals(const TuckerModel& m, const SparseTensor& x, int threads = 1) {
  if (m.dims != x.dims) throw std::invalid_argument("model/tensor shape mismatch");
  Residuals res;
  res.x_norm = x.frobenius_norm();
  if (res.x_norm == 0.0) throw std::invalid_argument("zero-norm tensor");
  res.r.resize(x.nnz());
  const auto nnz = static_cast<std::ptrdiff_t>(x.nnz());
#pragma omp parallel for schedule(static) num_threads(threads > 0 ? threads : 1)
  for (std::ptrdiff_t e = 0; e < nnz; ++e)
    res.r[e] = x.values[e] - reconstruct_entry(m, x.entry(e));
  double acc = 0.0;
  for (double v : res.r) acc += v * v;
  res.sum_sq = acc;
  res.re = std::sqrt(acc) / res.x_norm;
  return res;
}

/// Relative reconstruction error ||x - b|| / ||x|| over observed entries.
inline double reconstruction_error(const TuckerModel& m, const SparseTensor& x) {
  return compute_residuals(m, x, 1).re;
}

/// Fraction of model elements (core and factors together) that are exactly
///+-0.0, whether masked or incidental.
inline double sparsity(const TuckerModel& m) {
  std::size_t zeros = 0;
  for (double v : m.core) zeros += (v == 0.0);
  for (const auto& f : m.factors)
    for (double v : f) zeros += (v == 0.0);
  return double(zeros) / double(m.num_elements());
}

/// Fraction of model elements that carry a pruned mask.
inline double masked_fraction(const TuckerModel& m) {
  std::size_t masked = 0;
  for (std::uint8_t b : m.core_mask) masked += b;
  for (const auto& f : m.factor_masks)
    for (std::uint8_t b : f) masked += b;
  return double(masked) / double(m.num_elements());
}

/// Rescales every nonzero factor column to unit Euclidean norm and folds
/// the norm into the matching core slice, leaving every reconstructed
/// value unchanged. Zero columns are left alone (nothing to fold).
inline void normalize_columns(TuckerModel& m) {
  const std::size_t n = m.order();
  const auto strides = detail::row_major_strides(m.ranks);
  for (std::size_t mode = 0; mode < n; ++mode) {
    const std::size_t J = m.ranks[mode];
    const std::size_t I = m.dims[mode];
    for (std::size_t j = 0; j < J; ++j) {
      double acc = 0.0;
      for (std::size_t i = 0; i < I; ++i) {
        const double v = m.factors[mode][i * J + j];
        acc += v * v;
      }
      if (acc == 0.0) continue;
      const double norm = std::sqrt(acc);
      for (std::size_t i = 0; i < I; ++i) m.factors[mode][i * J + j] /= norm;
      // Scale the core slice beta[mode] == j by the removed norm.
      std::vector<std::size_t> beta(n, 0);
      std::size_t lin = 0;
      do {
        if (beta[mode] == j) m.core[lin] *= norm;
        ++lin;
      } while (detail::advance_multi_index(beta, m.ranks));
    }
  }
}

}  // namespace sparsetuck

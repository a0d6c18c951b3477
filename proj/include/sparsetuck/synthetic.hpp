// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>
#include <set>
#include <stdexcept>
#include <unordered_set>
#include <vector>

#include "sparsetuck/sparse_tensor.hpp"
#include "sparsetuck/tucker_model.hpp"

namespace sparsetuck {

/// Recipe for a planted low-rank observation set: a random model whose
/// elements are kept with probability factor_density (zeroed and masked
/// otherwise), observed at nnz distinct coordinates with optional white
/// noise on the values.
struct SyntheticSpec {
  std::vector<std::size_t> dims;
  std::vector<std::size_t> ranks;
  std::size_t nnz = 0;
  double factor_density = 1.0;
  double noise_std = 0.0;
  std::uint64_t seed = 0;
};

struct SyntheticData {
  SparseTensor tensor;
  TuckerModel truth;
};

namespace detail {

// Distinct observation coordinates, returned sorted by row-major linear
// position so the generated tensor has a canonical entry order.
inline std::vector<Coord> sample_coords(const std::vector<std::size_t>& dims, std::size_t nnz,
                                        std::mt19937_64& rng) {
  const std::size_t n = dims.size();
  std::uint64_t total = 1;
  bool overflow = false;
  for (std::size_t d : dims) {
    if (total > std::numeric_limits<std::uint64_t>::max() / d) {
      overflow = true;
      break;
    }
    total *= d;
  }

  std::vector<Coord> flat;
  flat.reserve(nnz * n);
  if (!overflow) {
    if (nnz > total) throw std::invalid_argument("nnz exceeds tensor cell count");
    std::vector<std::uint64_t> keys;
    keys.reserve(nnz);
    if (nnz * 2 >= total) {
      // Dense regime: partial Fisher-Yates over all linear positions.
      std::vector<std::uint64_t> all(total);
      for (std::uint64_t i = 0; i < total; ++i) all[i] = i;
      for (std::size_t k = 0; k < nnz; ++k) {
        std::uniform_int_distribution<std::uint64_t> pick(k, total - 1);
        std::swap(all[k], all[pick(rng)]);
      }
      keys.assign(all.begin(), all.begin() + nnz);
    } else {
      std::unordered_set<std::uint64_t> seen;
      std::uniform_int_distribution<std::uint64_t> pick(0, total - 1);
      while (keys.size() < nnz) {
        const std::uint64_t k = pick(rng);
        if (seen.insert(k).second) keys.push_back(k);
      }
    }
    std::sort(keys.begin(), keys.end());
    for (std::uint64_t key : keys) {
      std::uint64_t rest = key;
      std::vector<Coord> c(n);
      for (std::size_t k = n; k-- > 0;) {
        c[k] = static_cast<Coord>(rest % dims[k]);
        rest /= dims[k];
      }
      flat.insert(flat.end(), c.begin(), c.end());
    }
  } else {
    // Cell count beyond 64 bits: draw coordinate tuples directly and
    // deduplicate in an ordered set (iteration order is the canonical one).
    std::set<std::vector<Coord>> seen;
    while (seen.size() < nnz) {
      std::vector<Coord> c(n);
      for (std::size_t k = 0; k < n; ++k) {
        std::uniform_int_distribution<std::uint64_t> pick(0, dims[k] - 1);
        c[k] = static_cast<Coord>(pick(rng));
      }
      seen.insert(std::move(c));
    }
    for (const auto& c : seen) flat.insert(flat.end(), c.begin(), c.end());
  }
  return flat;
}

}  // namespace detail

/// Generates a ground-truth model and a partially observed tensor from it.
/// Fully deterministic for a fixed spec: the truth draw, the coordinate
/// sample, and the noise draw all come from one seeded generator in a
/// fixed order.
inline SyntheticData gen_synthetic(const SyntheticSpec& spec) {
  if (spec.dims.size() != spec.ranks.size()) throw std::invalid_argument("ranks order mismatch");
  if (spec.dims.empty()) throw std::invalid_argument("order must be at least 1");
  if (!(spec.factor_density > 0.0 && spec.factor_density <= 1.0))
    throw std::invalid_argument("factor_density must be in (0, 1]");
  if (!(spec.noise_std >= 0.0)) throw std::invalid_argument("noise_std must be nonnegative");
  if (spec.nnz == 0) throw std::invalid_argument("nnz must be positive");

  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  SyntheticData out;
  TuckerModel& t = out.truth;
  t.dims = spec.dims;
  t.ranks = spec.ranks;
  t.factors.resize(spec.dims.size());
  t.factor_masks.resize(spec.dims.size());
  auto draw = [&](double& v, std::uint8_t& mask) {
    const double value = unif(rng);
    if (spec.factor_density < 1.0 && unif(rng) >= spec.factor_density) {
      v = 0.0;
      mask = 1;
    } else {
      v = value;
      mask = 0;
    }
  };
  for (std::size_t n = 0; n < spec.dims.size(); ++n) {
    t.factors[n].resize(spec.dims[n] * spec.ranks[n]);
    t.factor_masks[n].resize(t.factors[n].size());
    for (std::size_t k = 0; k < t.factors[n].size(); ++k)
      draw(t.factors[n][k], t.factor_masks[n][k]);
  }
  t.core.resize(t.core_size());
  t.core_mask.resize(t.core.size());
  for (std::size_t k = 0; k < t.core.size(); ++k) draw(t.core[k], t.core_mask[k]);

  SparseTensor& x = out.tensor;
  x.dims = spec.dims;
  x.coords = detail::sample_coords(spec.dims, spec.nnz, rng);
  x.values.resize(spec.nnz);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (std::size_t e = 0; e < spec.nnz; ++e) {
    double v = reconstruct_entry(t, x.coords.data() + e * spec.dims.size());
    if (spec.noise_std > 0.0) v += spec.noise_std * noise(rng);
    x.values[e] = v;
  }
  return out;
}

}  // namespace sparsetuck

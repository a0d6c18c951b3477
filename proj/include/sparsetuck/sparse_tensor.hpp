// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace sparsetuck {

using Coord = std::uint32_t;
using EntryId = std::uint32_t;

/// Partially observed tensor stored as COO triples. Coordinates are
/// zero-based and kept flattened (order() consecutive values per entry).
/// Only the stored entries are considered observed; everything else is
/// treated as missing, not as zero.
struct SparseTensor {
  std::vector<std::size_t> dims;
  std::vector<Coord> coords;  // nnz() * order(), entry-major
  std::vector<double> values;

  std::size_t order() const { return dims.size(); }
  std::size_t nnz() const { return values.size(); }

  const Coord* entry(std::size_t e) const { return coords.data() + e * dims.size(); }

  std::span<const Coord> entry_span(std::size_t e) const {
    return {coords.data() + e * dims.size(), dims.size()};
  }

  /// Frobenius norm over the observed entries only. Fixed accumulation
  /// order so repeated calls are bit-identical.
  double frobenius_norm() const {
    double acc = 0.0;
    for (double v : values) acc += v * v;
    return std::sqrt(acc);
  }
};

namespace detail {

/// strtod with strict error checking. Accepts subnormals (strtod flags
/// them as underflow, but the value is still usable); rejects partial
/// parses and non-finite results.
inline bool parse_double(const std::string& tok, double& out) {
  const char* s = tok.c_str();
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(s, &end);
  if (end == s || *end != '\0') return false;
  if (std::isinf(v) || std::isnan(v)) return false;
  out = v;
  return true;
}

inline void check_tensor(const SparseTensor& x) {
  const std::size_t n = x.order();
  if (n == 0) throw std::invalid_argument("tensor order must be at least 1");
  for (std::size_t d : x.dims)
    if (d == 0) throw std::invalid_argument("tensor dimensions must be positive");
  if (x.coords.size() != x.nnz() * n)
    throw std::invalid_argument("coordinate buffer size does not match nnz * order");
  for (std::size_t e = 0; e < x.nnz(); ++e) {
    const Coord* c = x.entry(e);
    for (std::size_t k = 0; k < n; ++k)
      if (c[k] >= x.dims[k]) throw std::invalid_argument("coordinate out of bounds");
  }
  // Duplicate coordinates are rejected: sort entry ids by coordinate tuple
  // and scan neighbours. Works for any dimensionality without hashing.
  std::vector<std::size_t> ids(x.nnz());
  for (std::size_t e = 0; e < ids.size(); ++e) ids[e] = e;
  auto less = [&](std::size_t a, std::size_t b) {
    const Coord* ca = x.entry(a);
    const Coord* cb = x.entry(b);
    return std::lexicographical_compare(ca, ca + n, cb, cb + n);
  };
  std::sort(ids.begin(), ids.end(), less);
  for (std::size_t e = 1; e < ids.size(); ++e) {
    const Coord* ca = x.entry(ids[e - 1]);
    const Coord* cb = x.entry(ids[e]);
    if (std::equal(ca, ca + n, cb)) throw std::invalid_argument("duplicate coordinate in tensor");
  }
}

}  // namespace detail

/// Builds a tensor and validates bounds and duplicate-freeness.
inline SparseTensor make_tensor(std::vector<std::size_t> dims, std::vector<Coord> coords,
                                std::vector<double> values) {
  SparseTensor x{std::move(dims), std::move(coords), std::move(values)};
  detail::check_tensor(x);
  return x;
}

/// Per-mode inverted index: for mode n and slice i, the ids of all observed
/// entries whose n-th coordinate equals i (CSR layout, ids ascending).
struct ModeIndex {
  std::vector<std::vector<std::size_t>> offsets;  // order() rows, dims[n]+1 each
  std::vector<std::vector<EntryId>> ids;

  std::span<const EntryId> slice(std::size_t mode, Coord i) const {
    const auto& off = offsets[mode];
    return {ids[mode].data() + off[i], off[i + 1] - off[i]};
  }
};

inline ModeIndex build_mode_index(const SparseTensor& x) {
  const std::size_t n = x.order();
  ModeIndex idx;
  idx.offsets.resize(n);
  idx.ids.resize(n);
  for (std::size_t m = 0; m < n; ++m) {
    std::vector<std::size_t> count(x.dims[m] + 1, 0);
    for (std::size_t e = 0; e < x.nnz(); ++e) ++count[x.entry(e)[m] + 1];
    for (std::size_t i = 1; i < count.size(); ++i) count[i] += count[i - 1];
    idx.offsets[m] = count;  // now prefix sums; reuse remaining copy as cursor
    idx.ids[m].resize(x.nnz());
    std::vector<std::size_t> cursor(idx.offsets[m].begin(), idx.offsets[m].end() - 1);
    for (std::size_t e = 0; e < x.nnz(); ++e) {
      const Coord i = x.entry(e)[m];
      idx.ids[m][cursor[i]++] = static_cast<EntryId>(e);
    }
  }
  return idx;
}

/// Reads whitespace-separated COO text: one entry per line, order()
/// coordinates followed by the value. Blank lines and # comments are
/// skipped; a leading "# dims: d1 d2 ..." comment pins the dimensions,
/// otherwise they are inferred as max coordinate + 1 per mode.
inline SparseTensor load_coo(const std::filesystem::path& path, bool one_based = false) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());

  std::vector<std::size_t> dims;
  std::vector<Coord> coords;
  std::vector<double> values;
  std::size_t order = 0;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ss(line);
    std::string tok;
    if (!(ss >> tok)) continue;  // blank
    if (tok[0] == '#') {
      std::string key;
      ss >> key;
      if (key == "dims:") {
        std::size_t d;
        while (ss >> d) dims.push_back(d);
      }
      continue;
    }
    std::vector<std::string> toks{tok};
    while (ss >> tok) toks.push_back(tok);
    if (order == 0) {
      if (toks.size() < 2)
        throw std::runtime_error(path.string() + ":" + std::to_string(lineno) +
                                 ": need at least one coordinate and a value");
      order = toks.size() - 1;
    } else if (toks.size() != order + 1) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) +
                               ": inconsistent column count");
    }
    for (std::size_t k = 0; k < order; ++k) {
      long long c;
      try {
        c = std::stoll(toks[k]);
      } catch (const std::exception&) {
        throw std::runtime_error(path.string() + ":" + std::to_string(lineno) +
                                 ": bad coordinate '" + toks[k] + "'");
      }
      if (one_based) c -= 1;
      if (c < 0)
        throw std::runtime_error(path.string() + ":" + std::to_string(lineno) +
                                 ": negative coordinate");
      coords.push_back(static_cast<Coord>(c));
    }
    double v;
    if (!detail::parse_double(toks[order], v))
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": bad value '" +
                               toks[order] + "'");
    values.push_back(v);
  }
  if (order == 0 && dims.empty()) throw std::runtime_error(path.string() + ": no entries");
  if (order == 0) order = dims.size();  // header-only file: an empty tensor
  if (dims.empty()) {
    dims.assign(order, 0);
    for (std::size_t e = 0; e < values.size(); ++e)
      for (std::size_t k = 0; k < order; ++k)
        dims[k] = std::max(dims[k], static_cast<std::size_t>(coords[e * order + k]) + 1);
  } else if (dims.size() != order) {
    throw std::runtime_error(path.string() + ": dims header order does not match data");
  }
  return make_tensor(std::move(dims), std::move(coords), std::move(values));
}

/// Writes zero-based COO text with a "# dims:" header. Values are printed
/// with 17 significant digits so a round trip reproduces the exact doubles.
inline void save_coo(const SparseTensor& x, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "# dims:";
  for (std::size_t d : x.dims) out << ' ' << d;
  out << '\n';
  char buf[64];
  for (std::size_t e = 0; e < x.nnz(); ++e) {
    const Coord* c = x.entry(e);
    for (std::size_t k = 0; k < x.order(); ++k) out << c[k] << '\t';
    std::snprintf(buf, sizeof buf, "%.17g", x.values[e]);
    out << buf << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

/// Splits the observed entries into disjoint train/test tensors. The split
/// is a seeded shuffle; relative entry order is preserved inside each part
/// so the same seed always produces byte-identical parts.
inline std::pair<SparseTensor, SparseTensor> split_train_test(const SparseTensor& x,
                                                              double test_fraction,
                                                              std::uint64_t seed) {
  if (!(test_fraction >= 0.0 && test_fraction <= 1.0))
    throw std::invalid_argument("test_fraction must be in [0, 1]");
  std::vector<std::size_t> ids(x.nnz());
  for (std::size_t e = 0; e < ids.size(); ++e) ids[e] = e;
  std::mt19937_64 rng(seed);
  std::shuffle(ids.begin(), ids.end(), rng);
  const auto ntest = static_cast<std::size_t>(std::llround(test_fraction * double(x.nnz())));
  std::vector<std::size_t> test_ids(ids.begin(), ids.begin() + ntest);
  std::vector<std::size_t> train_ids(ids.begin() + ntest, ids.end());
  std::sort(test_ids.begin(), test_ids.end());
  std::sort(train_ids.begin(), train_ids.end());

  auto take = [&](const std::vector<std::size_t>& part) {
    SparseTensor t;
    t.dims = x.dims;
    t.coords.reserve(part.size() * x.order());
    t.values.reserve(part.size());
    for (std::size_t e : part) {
      const Coord* c = x.entry(e);
      t.coords.insert(t.coords.end(), c, c + x.order());
      t.values.push_back(x.values[e]);
    }
    return t;
  };
  return {take(train_ids), take(test_ids)};
}

}  // namespace sparsetuck

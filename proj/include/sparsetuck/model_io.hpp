// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "sparsetuck/sparse_tensor.hpp"
#include "sparsetuck/tucker_model.hpp"

namespace sparsetuck {

/// Model directory layout: factor_<n>.tsv holds the dense mode-n factor
/// (one row per line, tab-separated, 17 significant digits) and core.coo
/// holds the nonzero core cells in COO form with the ranks as its dims
/// header. Values round-trip exactly. Zeros are not distinguished from
/// pruned positions on disk: a reloaded model treats every zero element as
/// pruned.
inline void save_model(const TuckerModel& m, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  char buf[64];
  for (std::size_t n = 0; n < m.order(); ++n) {
    std::ofstream out(dir / ("factor_" + std::to_string(n) + ".tsv"));
    if (!out) throw std::runtime_error("cannot write factor file in " + dir.string());
    const std::size_t J = m.ranks[n];
    for (std::size_t i = 0; i < m.dims[n]; ++i) {
      for (std::size_t j = 0; j < J; ++j) {
        std::snprintf(buf, sizeof buf, "%.17g", m.factors[n][i * J + j]);
        out << (j ? "\t" : "") << buf;
      }
      out << '\n';
    }
    if (!out) throw std::runtime_error("write failed in " + dir.string());
  }

  SparseTensor core;
  core.dims = m.ranks;
  std::vector<std::size_t> beta(m.order(), 0);
  std::size_t lin = 0;
  do {
    if (m.core[lin] != 0.0) {
      for (std::size_t k = 0; k < m.order(); ++k)
        core.coords.push_back(static_cast<Coord>(beta[k]));
      core.values.push_back(m.core[lin]);
    }
    ++lin;
  } while (detail::advance_multi_index(beta, m.ranks));
  save_coo(core, dir / "core.coo");
}

inline TuckerModel load_model(const std::filesystem::path& dir) {
  const SparseTensor core = load_coo(dir / "core.coo");
  TuckerModel m;
  m.ranks = core.dims;
  const std::size_t n = m.ranks.size();
  m.core.assign(m.core_size(), 0.0);
  const auto strides = detail::row_major_strides(m.ranks);
  for (std::size_t e = 0; e < core.nnz(); ++e) {
    std::size_t lin = 0;
    for (std::size_t k = 0; k < n; ++k) lin += core.entry(e)[k] * strides[k];
    m.core[lin] = core.values[e];
  }
  m.core_mask.resize(m.core.size());
  for (std::size_t k = 0; k < m.core.size(); ++k) m.core_mask[k] = (m.core[k] == 0.0);

  m.dims.resize(n);
  m.factors.resize(n);
  m.factor_masks.resize(n);
  for (std::size_t mode = 0; mode < n; ++mode) {
    const auto path = dir / ("factor_" + std::to_string(mode) + ".tsv");
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::string line;
    std::size_t rows = 0;
    while (std::getline(in, line)) {
      std::istringstream ss(line);
      std::string tok;
      std::size_t cols = 0;
      while (ss >> tok) {
        double v;
        if (!detail::parse_double(tok, v))
          throw std::runtime_error(path.string() + ": bad value '" + tok + "'");
        m.factors[mode].push_back(v);
        ++cols;
      }
      if (cols == 0) continue;  // ignore trailing blank lines
      if (cols != m.ranks[mode])
        throw std::runtime_error(path.string() + ": expected " +
                                 std::to_string(m.ranks[mode]) + " columns");
      ++rows;
    }
    if (rows == 0) throw std::runtime_error(path.string() + ": empty factor");
    m.dims[mode] = rows;
    m.factor_masks[mode].resize(m.factors[mode].size());
    for (std::size_t k = 0; k < m.factors[mode].size(); ++k)
      m.factor_masks[mode][k] = (m.factors[mode][k] == 0.0);
  }
  detail::check_model(m);
  return m;
}

}  // namespace sparsetuck

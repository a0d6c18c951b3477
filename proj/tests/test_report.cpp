// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "oracles.hpp"
#include "sparsetuck/model_io.hpp"
#include "sparsetuck/report.hpp"

using namespace sparsetuck;
namespace fs = std::filesystem;

TEST_CASE("row density report sorts rows by nonzero count") {
  auto m = init_random({4, 3}, {3, 2}, 6);
  // row 0: 1 nonzero, row 1: 3, row 2: 0, row 3: 2
  m.factors[0] = {0.0, 2.0, 0.0,   //
                  1.0, 1.0, 1.0,   //
                  0.0, 0.0, 0.0,   //
                  3.0, 0.0, 4.0};
  const auto rows = row_density_report(m, 0);
  REQUIRE(rows.size() == 4);
  CHECK(rows[0].row == 1);
  CHECK(rows[0].nonzeros == 3);
  CHECK(rows[1].row == 3);
  CHECK(rows[1].nonzeros == 2);
  CHECK_THAT(rows[1].norm, Catch::Matchers::WithinAbs(5.0, 1e-12));
  CHECK(rows[2].row == 0);
  CHECK(rows[3].row == 2);
  CHECK(rows[3].nonzeros == 0);
}

TEST_CASE("row density report breaks count ties by row id") {
  auto m = init_random({3, 2}, {2, 1}, 6);
  m.factors[0] = {1.0, 0.0, 0.0, 1.0, 1.0, 0.0};  // one nonzero per row
  const auto rows = row_density_report(m, 0);
  CHECK(rows[0].row == 0);
  CHECK(rows[1].row == 1);
  CHECK(rows[2].row == 2);
}

TEST_CASE("iteration reports serialize as JSON lines") {
  TrainReport rep;
  IterationReport a;
  a.iter = 1;
  a.re = 0.5;
  a.prune_rate = 0.01;
  a.pruned = false;
  a.pruned_factors = {0, 0, 0};
  a.sparsity = 0.0;
  a.masked = 0.0;
  a.wall_ms = 1.5;
  IterationReport b;
  b.iter = 2;
  b.re = 0.25;
  b.prune_rate = 0.02;
  b.pruned = true;
  b.pruned_core = 1;
  b.pruned_factors = {2, 0, 1};
  b.sparsity = 0.125;
  b.masked = 0.1;
  b.wall_ms = 2.25;
  rep.iterations = {a, b};

  std::ostringstream ss;
  write_report_jsonl(rep, ss);

  std::istringstream in(ss.str());
  std::string line;
  std::vector<nlohmann::json> lines;
  while (std::getline(in, line)) lines.push_back(nlohmann::json::parse(line));
  REQUIRE(lines.size() == 2);
  CHECK(lines[0]["iter"] == 1);
  CHECK(lines[0]["re"] == 0.5);
  CHECK(lines[0]["pruned"] == false);
  CHECK(lines[1]["iter"] == 2);
  CHECK(lines[1]["pruned"] == true);
  CHECK(lines[1]["pruned_core"] == 1);
  CHECK(lines[1]["pruned_factors"] == nlohmann::json::array({2, 0, 1}));
  CHECK(lines[1]["sparsity"] == 0.125);
  CHECK(lines[1]["wall_ms"] == 2.25);
}

TEST_CASE("scaling benchmark times every cell") {
  BenchConfig bc;
  bc.dims = {12, 10, 8};
  bc.ranks = {2, 2, 2};
  bc.nnz = 200;
  BenchOptions opt;
  opt.iters = 1;
  opt.reps = 1;
  opt.seed = 3;

  const auto cells = scaling_benchmark({bc}, {1, 2}, opt);
  REQUIRE(cells.size() == 2);
  CHECK(cells[0].threads == 1);
  CHECK(cells[1].threads == 2);
  for (const auto& c : cells) {
    CHECK_FALSE(c.skipped);
    CHECK(c.sec_per_iter > 0.0);
  }
  CHECK(cells[0].speedup == 1.0);  // first thread count is the baseline

  std::ostringstream csv;
  write_bench_csv(cells, csv);
  std::istringstream in(csv.str());
  std::string line;
  std::vector<std::string> rows;
  while (std::getline(in, line)) rows.push_back(line);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0] == "order,dims,ranks,nnz,threads,sec_per_iter,speedup,skipped,note");
  CHECK(rows[1].find("3,12x10x8,2x2x2,200,1,") == 0);
}

TEST_CASE("metrics recomputed from persisted files match the fit") {
  SyntheticSpec spec;
  spec.dims = {9, 8, 7};
  spec.ranks = {2, 2, 2};
  spec.nnz = 220;
  spec.noise_std = 0.05;
  spec.seed = 14;
  const auto data = gen_synthetic(spec);

  TrainConfig cfg;
  cfg.ranks = {2, 2, 2};
  cfg.mode = StopMode::Manual;
  cfg.target_sparsity = 0.25;
  cfg.tol = 0.0;
  cfg.max_iters = 20;
  cfg.seed = 2;
  cfg.threads = 1;
  const FitResult r = fit(data.tensor, cfg);

  static std::mt19937_64 rng(std::random_device{}());
  const fs::path dir = fs::temp_directory_path() / ("sparsetuck_rep_" + std::to_string(rng()));
  save_model(r.model, dir);
  const TuckerModel loaded = load_model(dir);

  CHECK(reconstruction_error(loaded, data.tensor) == r.report.final_re);
  CHECK(sparsity(loaded) == r.report.final_sparsity);
  fs::remove_all(dir);
}

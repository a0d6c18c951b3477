// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <limits>
#include <random>

#include "oracles.hpp"
#include "sparsetuck/pruning.hpp"

using namespace sparsetuck;

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

TEST_CASE("prune schedule ramps linearly and caps") {
  PruneSchedule s;  // defaults 0.01 / 0.1
  CHECK_THAT(s.rate(1), Catch::Matchers::WithinAbs(0.01, 1e-15));
  CHECK_THAT(s.rate(5), Catch::Matchers::WithinAbs(0.05, 1e-15));
  CHECK_THAT(s.rate(10), Catch::Matchers::WithinAbs(0.1, 1e-15));
  CHECK_THAT(s.rate(200), Catch::Matchers::WithinAbs(0.1, 1e-15));
  CHECK_THROWS_AS(s.rate(0), std::invalid_argument);

  CHECK_NOTHROW(PruneSchedule{0.02, 0.3}.validate());
  CHECK_THROWS_AS((PruneSchedule{0.0, 0.1}.validate()), std::invalid_argument);
  CHECK_THROWS_AS((PruneSchedule{0.2, 0.1}.validate()), std::invalid_argument);
  CHECK_THROWS_AS((PruneSchedule{0.2, 1.0}.validate()), std::invalid_argument);
}

TEST_CASE("manual stop controller prunes until the target and latches") {
  StopController c;
  c.mode = StopMode::Manual;
  c.target_sparsity = 0.25;
  CHECK(c.should_prune(0.0, 0.5, 0.01));
  CHECK(c.should_prune(0.24, 0.5, 0.02));
  CHECK_FALSE(c.should_prune(0.25, 0.5, 0.03));
  CHECK(c.stopped());
  // latched: even if the sparsity reading dropped it stays off
  CHECK_FALSE(c.should_prune(0.1, 0.5, 0.04));

  StopController never;
  never.mode = StopMode::Manual;
  never.target_sparsity = 0.0;  // target met from the start
  CHECK_FALSE(never.should_prune(0.0, 0.5, 0.01));
  CHECK(never.stopped());
}

TEST_CASE("auto stop controller detects the elbow") {
  StopController c;
  c.mode = StopMode::Auto;
  c.elbow_threshold = 0.05;
  const double pr = 0.05;

  // gently drifting error: second difference zero, keeps pruning
  CHECK(c.should_prune(0.0, 0.09, pr));
  c.record_prune_event(0.09);
  CHECK(c.should_prune(0.0, 0.10, pr));
  c.record_prune_event(0.10);
  CHECK(c.should_prune(0.0, 0.11, pr));  // (0.11 + 0.09 - 0.20) / 0.05 = 0
  c.record_prune_event(0.11);

  // jump: (0.20 + 0.10 - 2 * 0.11) / 0.05 = 1.6 > 0.05 -> stop and latch
  CHECK_FALSE(c.should_prune(0.0, 0.20, pr));
  CHECK(c.stopped());
  CHECK_FALSE(c.should_prune(0.0, 0.10, pr));
}

TEST_CASE("auto stop controller never fires on a flat error curve") {
  StopController c;
  c.mode = StopMode::Auto;
  for (int t = 0; t < 20; ++t) {
    CHECK(c.should_prune(0.0, 0.1, 0.05));
    c.record_prune_event(0.1);
  }
  CHECK_FALSE(c.stopped());
}

TEST_CASE("a perfect fit pauses pruning without latching") {
  StopController c;
  c.mode = StopMode::Manual;
  c.target_sparsity = 0.5;
  CHECK_FALSE(c.should_prune(0.0, 0.0, 0.01));
  CHECK_FALSE(c.stopped());
  CHECK(c.should_prune(0.0, 0.2, 0.01));  // resumes once the error is real

  StopController a;
  a.mode = StopMode::Auto;
  CHECK_FALSE(a.should_prune(0.0, 0.0, 0.01));
  CHECK_FALSE(a.stopped());
  CHECK(a.should_prune(0.0, 0.2, 0.01));
}

TEST_CASE("responsibilities match the zero-out oracle") {
  std::mt19937_64 rng(31);
  const std::vector<std::size_t> dims{5, 4, 3};
  const std::vector<std::size_t> ranks{2, 2, 2};
  const auto x = oracles::random_tensor(dims, 40, rng);
  auto m = init_random(dims, ranks, 55);
  // mask a couple of positions to make the instance realistic
  m.core[5] = 0.0;
  m.core_mask[5] = 1;
  m.factors[0][3] = 0.0;
  m.factor_masks[0][3] = 1;

  const ModeIndex idx = build_mode_index(x);
  const Residuals res = compute_residuals(m, x, 1);
  const ResponsibilityTable table = compute_responsibilities(m, x, idx, res, 1);
  CHECK(table.base_re == res.re);

  for (std::size_t lin = 0; lin < m.core.size(); ++lin) {
    if (m.core_mask[lin]) {
      CHECK(table.core[lin] == kInf);
      continue;
    }
    const double want = oracles::zero_out_core_resp(m, x, lin);
    CHECK_THAT(table.core[lin],
               Catch::Matchers::WithinAbs(want, 1e-8 * (1.0 + std::abs(want))));
  }
  for (std::size_t mode = 0; mode < dims.size(); ++mode)
    for (std::size_t i = 0; i < dims[mode]; ++i)
      for (std::size_t j = 0; j < ranks[mode]; ++j) {
        const std::size_t k = i * ranks[mode] + j;
        if (m.factor_masks[mode][k]) {
          CHECK(table.factors[mode][k] == kInf);
          continue;
        }
        const double want = oracles::zero_out_factor_resp(m, x, mode, i, j);
        CHECK_THAT(table.factors[mode][k],
                   Catch::Matchers::WithinAbs(want, 1e-8 * (1.0 + std::abs(want))));
      }
}

TEST_CASE("an element already at zero has zero responsibility") {
  std::mt19937_64 rng(32);
  const std::vector<std::size_t> dims{4, 4, 3};
  const auto x = oracles::random_tensor(dims, 30, rng);
  auto m = init_random(dims, {2, 2, 2}, 7);
  m.core[3] = 0.0;        // incidental zeros, not masked
  m.factors[1][4] = 0.0;

  const ModeIndex idx = build_mode_index(x);
  const Residuals res = compute_residuals(m, x, 1);
  const auto core_resp = compute_core_responsibilities(m, x, res, 1);
  const auto f1_resp = compute_factor_responsibilities(m, x, idx, 1, res, 1);
  CHECK(std::abs(core_resp[3]) <= 1e-12);
  CHECK(std::abs(f1_resp[4]) <= 1e-12);
}

TEST_CASE("a perfect fit makes every responsibility infinite") {
  auto m = init_random({3, 3}, {2, 2}, 12);
  // observe exact reconstructions: residuals are identically zero
  std::vector<Coord> coords{0, 0, 1, 2, 2, 1};
  std::vector<double> values;
  for (std::size_t e = 0; e < 3; ++e) values.push_back(reconstruct_entry(m, &coords[e * 2]));
  const auto x = make_tensor({3, 3}, coords, values);
  const ModeIndex idx = build_mode_index(x);
  const Residuals res = compute_residuals(m, x, 1);
  REQUIRE(res.re == 0.0);
  const auto table = compute_responsibilities(m, x, idx, res, 1);
  for (double r : table.core) CHECK(r == kInf);
  for (const auto& f : table.factors)
    for (double r : f) CHECK(r == kInf);
}

TEST_CASE("responsibilities are bit-identical across thread counts") {
  std::mt19937_64 rng(33);
  const std::vector<std::size_t> dims{6, 5, 4};
  const auto x = oracles::random_tensor(dims, 50, rng);
  const auto m = init_random(dims, {3, 2, 2}, 77);
  const ModeIndex idx = build_mode_index(x);
  const Residuals res = compute_residuals(m, x, 1);
  const auto t1 = compute_responsibilities(m, x, idx, res, 1);
  const auto t4 = compute_responsibilities(m, x, idx, res, 4);
  CHECK(t1.core == t4.core);
  CHECK(t1.factors == t4.factors);
}

TEST_CASE("prune_step removes the lowest responsibilities with index ties") {
  auto m = init_random({2, 2}, {2, 2}, 3);
  ResponsibilityTable t;
  t.core = {0.5, 0.2, 0.2, 0.9};
  t.factors = {{0.1, 0.4, 0.4, 0.4}, {0.7, 0.6, 0.5, 0.4}};

  const PruneCounts c = prune_step(m, t, 0.5);  // floor(0.5 * 4) = 2 per block
  CHECK(c.core == 2);
  CHECK(c.factors == std::vector<std::size_t>{2, 2});
  CHECK(c.total() == 6);

  // core: 0.2@1 and 0.2@2 go (tie, both lowest)
  CHECK(m.core_mask == std::vector<std::uint8_t>{0, 1, 1, 0});
  CHECK(m.core[1] == 0.0);
  CHECK(m.core[2] == 0.0);
  // factor 0: 0.1@0, then tie 0.4 at indices 1,2,3 -> smallest index 1
  CHECK(m.factor_masks[0] == std::vector<std::uint8_t>{1, 1, 0, 0});
  // factor 1: strictly decreasing -> indices 3 and 2
  CHECK(m.factor_masks[1] == std::vector<std::uint8_t>{0, 0, 1, 1});
}

TEST_CASE("prune_step counts are floored and saturate") {
  auto m = init_random({3, 1}, {1, 1}, 4);  // core 1, factors 3 + 1
  ResponsibilityTable t;
  t.core = {0.5};
  t.factors = {{0.3, 0.2, 0.1}, {0.4}};

  // floor(0.4 * 3) = 1 on the big factor, floor(0.4 * 1) = 0 elsewhere
  PruneCounts c = prune_step(m, t, 0.4);
  CHECK(c.core == 0);
  CHECK(c.factors == std::vector<std::size_t>{1, 0});
  CHECK(m.factor_masks[0] == std::vector<std::uint8_t>{0, 0, 1});

  // repeated pruning never unmasks and stops at saturation
  t.factors[0] = {0.3, 0.2, kInf};
  c = prune_step(m, t, 0.9);  // floor(0.9 * 3) = 2 -> the two remaining
  CHECK(c.factors[0] == 2);
  CHECK(m.factor_masks[0] == std::vector<std::uint8_t>{1, 1, 1});
  c = prune_step(m, t, 0.9);
  CHECK(c.factors[0] == 0);  // nothing left to prune

  CHECK_THROWS_AS(prune_step(m, t, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(prune_step(m, t, -0.1), std::invalid_argument);

  // pr = 0 is a no-op
  auto m2 = init_random({3, 1}, {1, 1}, 4);
  ResponsibilityTable t2;
  t2.core = {0.5};
  t2.factors = {{0.3, 0.2, 0.1}, {0.4}};
  const PruneCounts none = prune_step(m2, t2, 0.0);
  CHECK(none.total() == 0);
  CHECK(masked_fraction(m2) == 0.0);
}

TEST_CASE("pruning in rounds keeps masks monotone") {
  std::mt19937_64 rng(34);
  const std::vector<std::size_t> dims{5, 4, 3};
  const auto x = oracles::random_tensor(dims, 45, rng);
  auto m = init_random(dims, {2, 2, 2}, 19);
  const ModeIndex idx = build_mode_index(x);

  std::vector<std::uint8_t> prev_core = m.core_mask;
  auto prev_factors = m.factor_masks;
  for (int round = 1; round <= 6; ++round) {
    const Residuals res = compute_residuals(m, x, 1);
    if (res.re == 0.0) break;
    const auto table = compute_responsibilities(m, x, idx, res, 1);
    prune_step(m, table, 0.1);
    for (std::size_t k = 0; k < m.core_mask.size(); ++k) CHECK(m.core_mask[k] >= prev_core[k]);
    for (std::size_t n = 0; n < m.order(); ++n)
      for (std::size_t k = 0; k < m.factor_masks[n].size(); ++k)
        CHECK(m.factor_masks[n][k] >= prev_factors[n][k]);
    prev_core = m.core_mask;
    prev_factors = m.factor_masks;
  }
}

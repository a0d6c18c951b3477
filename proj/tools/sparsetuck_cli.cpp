// SPDX-License-Identifier: Apache-2.0
// Command-line frontend: decompose / predict / evaluate / synth / bench.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "sparsetuck/sparsetuck.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;
using namespace sparsetuck;

namespace {

/// Accepts both "3,3,2" and "3x3x2".
std::vector<std::size_t> parse_sizes(const std::string& text, const char* what) {
  std::string spaced = text;
  for (char& c : spaced)
    if (c == ',' || c == 'x') c = ' ';
  std::vector<std::size_t> out;
  std::istringstream ss(spaced);
  long long v;
  while (ss >> v) {
    if (v <= 0) throw std::runtime_error(std::string(what) + " entries must be positive");
    out.push_back(static_cast<std::size_t>(v));
  }
  std::string rest;
  if (ss.clear(), ss >> rest)
    throw std::runtime_error(std::string(what) + ": cannot parse '" + text + "'");
  if (out.empty()) throw std::runtime_error(std::string(what) + " must not be empty");
  return out;
}

std::vector<int> parse_ints(const std::string& text, const char* what) {
  std::vector<int> out;
  for (std::size_t v : parse_sizes(text, what)) out.push_back(static_cast<int>(v));
  return out;
}

/// Query file: one query per line, order coordinates, optionally followed
/// by a value column that is ignored. Comments and blank lines skipped.
std::vector<Coord> load_queries(const fs::path& path, std::size_t order, bool one_based) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<Coord> flat;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ss(line);
    std::vector<std::string> toks;
    std::string tok;
    while (ss >> tok) toks.push_back(tok);
    if (toks.empty() || toks[0][0] == '#') continue;
    if (toks.size() != order && toks.size() != order + 1)
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": expected " +
                               std::to_string(order) + " coordinates");
    for (std::size_t k = 0; k < order; ++k) {
      long long c = std::stoll(toks[k]);
      if (one_based) c -= 1;
      if (c < 0)
        throw std::runtime_error(path.string() + ":" + std::to_string(lineno) +
                                 ": negative coordinate");
      flat.push_back(static_cast<Coord>(c));
    }
  }
  return flat;
}

struct DecomposeArgs {
  std::string input;
  std::string ranks;
  std::string reg = "lf";
  double lambda = 0.01;
  std::string mode = "manual";
  double sparsity = 0.0;
  double elbow_threshold = 0.05;
  double init_pr = 0.01;
  double max_pr = 0.1;
  std::size_t max_iters = 100;
  double tol = 1e-4;
  int threads = 0;
  std::uint64_t seed = 0;
  bool one_based = false;
  std::string test_input;
  std::string output_dir = ".";
  bool no_normalize = false;
};

int run_decompose(const DecomposeArgs& a) {
  const SparseTensor x = load_coo(a.input, a.one_based);
  std::optional<SparseTensor> test;
  if (!a.test_input.empty()) test = load_coo(a.test_input, a.one_based);

  TrainConfig cfg;
  cfg.ranks = parse_sizes(a.ranks, "--ranks");
  cfg.reg = a.reg == "l1" ? Regularizer::L1 : Regularizer::LF;
  cfg.lambda = a.lambda;
  cfg.mode = a.mode == "auto" ? StopMode::Auto : StopMode::Manual;
  cfg.target_sparsity = a.sparsity;
  cfg.elbow_threshold = a.elbow_threshold;
  cfg.schedule = {a.init_pr, a.max_pr};
  cfg.max_iters = a.max_iters;
  cfg.tol = a.tol;
  cfg.threads = a.threads;
  cfg.seed = a.seed;
  cfg.normalize_output = !a.no_normalize;

  const FitResult r = fit(x, cfg);

  const fs::path dir(a.output_dir);
  fs::create_directories(dir);
  save_model(r.model, dir);
  {
    std::ofstream out(dir / "report.jsonl");
    write_report_jsonl(r.report, out);
    if (!out) throw std::runtime_error("cannot write report.jsonl");
  }

  ordered_json summary;
  summary["input"] = a.input;
  summary["entries"] = x.nnz();
  summary["dims"] = x.dims;
  summary["config"] = {{"ranks", cfg.ranks},
                       {"reg", a.reg},
                       {"lambda", cfg.lambda},
                       {"mode", a.mode},
                       {"sparsity", cfg.target_sparsity},
                       {"elbow_threshold", cfg.elbow_threshold},
                       {"init_pr", cfg.schedule.init_pr},
                       {"max_pr", cfg.schedule.max_pr},
                       {"max_iters", cfg.max_iters},
                       {"tol", cfg.tol},
                       {"threads", resolve_threads(cfg.threads)},
                       {"seed", cfg.seed},
                       {"normalize", cfg.normalize_output}};
  summary["iterations"] = r.report.iters;
  summary["converged"] = r.report.converged;
  summary["re"] = r.report.final_re;
  summary["zero_fraction"] = r.report.final_sparsity;
  summary["masked_fraction"] = r.report.final_masked;
  summary["wall_sec"] = r.report.elapsed_sec;
  if (test) summary["test_re"] = evaluate_test(r.model, *test);
  {
    std::ofstream out(dir / "summary.json");
    out << summary.dump(2) << '\n';
    if (!out) throw std::runtime_error("cannot write summary.json");
  }

  std::cout << "re " << r.report.final_re << " zero_fraction " << r.report.final_sparsity
            << " iterations " << r.report.iters << '\n';
  return 0;
}

int run_predict(const std::string& model_dir, const std::string& queries,
                const std::string& output, bool one_based) {
  const TuckerModel m = load_model(model_dir);
  const std::vector<Coord> flat = load_queries(queries, m.order(), one_based);
  const std::vector<double> values = predict(m, flat);

  std::ofstream file;
  std::ostream* out = &std::cout;
  if (!output.empty()) {
    file.open(output);
    if (!file) throw std::runtime_error("cannot write " + output);
    out = &file;
  }
  char buf[64];
  for (double v : values) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    *out << buf << '\n';
  }
  return 0;
}

int run_evaluate(const std::string& model_dir, const std::string& input,
                 const std::string& test_input, const std::string& output, bool one_based) {
  const TuckerModel m = load_model(model_dir);
  ordered_json result;
  result["re"] = reconstruction_error(m, load_coo(input, one_based));
  if (!test_input.empty()) result["test_re"] = evaluate_test(m, load_coo(test_input, one_based));
  result["zero_fraction"] = sparsity(m);

  if (output.empty()) {
    std::cout << result.dump(2) << '\n';
  } else {
    std::ofstream out(output);
    out << result.dump(2) << '\n';
    if (!out) throw std::runtime_error("cannot write " + output);
  }
  return 0;
}

int run_synth(const std::string& dims, const std::string& ranks, std::size_t nnz, double density,
              double noise, std::uint64_t seed, const std::string& output,
              const std::string& truth_dir) {
  SyntheticSpec spec;
  spec.dims = parse_sizes(dims, "--dims");
  spec.ranks = parse_sizes(ranks, "--ranks");
  spec.nnz = nnz;
  spec.factor_density = density;
  spec.noise_std = noise;
  spec.seed = seed;
  const SyntheticData data = gen_synthetic(spec);
  save_coo(data.tensor, output);
  if (!truth_dir.empty()) save_model(data.truth, truth_dir);
  std::cout << "wrote " << data.tensor.nnz() << " entries to " << output << '\n';
  return 0;
}

int run_bench(const std::string& dims, const std::string& ranks, const std::string& nnz_list,
              const std::string& thread_list, std::size_t iters, std::size_t reps,
              std::uint64_t seed, const std::string& output) {
  const auto base_dims = parse_sizes(dims, "--dims");
  const auto base_ranks = parse_sizes(ranks, "--ranks");
  std::vector<BenchConfig> configs;
  for (std::size_t nnz : parse_sizes(nnz_list, "--nnz")) {
    BenchConfig bc;
    bc.dims = base_dims;
    bc.ranks = base_ranks;
    bc.nnz = nnz;
    configs.push_back(std::move(bc));
  }
  BenchOptions opt;
  opt.iters = iters;
  opt.reps = reps;
  opt.seed = seed;

  const auto cells = scaling_benchmark(configs, parse_ints(thread_list, "--threads"), opt);
  if (output.empty()) {
    write_bench_csv(cells, std::cout);
  } else {
    std::ofstream out(output);
    write_bench_csv(cells, out);
    if (!out) throw std::runtime_error("cannot write " + output);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse Tucker decomposition of partially observed tensors"};
  app.require_subcommand(1);

  DecomposeArgs da;
  auto* dec = app.add_subcommand("decompose", "Fit a sparse model to COO tensor data");
  dec->add_option("--input", da.input, "COO tensor file")->required();
  dec->add_option("--ranks", da.ranks, "per-mode ranks, e.g. 3,3,2")->required();
  dec->add_option("--reg", da.reg, "regularizer")->check(CLI::IsMember({"lf", "l1"}));
  dec->add_option("--lambda", da.lambda, "regularization strength");
  dec->add_option("--mode", da.mode, "pruning stop rule")
      ->check(CLI::IsMember({"manual", "auto"}));
  dec->add_option("--sparsity", da.sparsity, "manual mode: target zero fraction");
  dec->add_option("--elbow-threshold", da.elbow_threshold, "auto mode: elbow sensitivity");
  dec->add_option("--init-pr", da.init_pr, "initial prune rate");
  dec->add_option("--max-pr", da.max_pr, "prune rate cap");
  dec->add_option("--max-iters", da.max_iters, "iteration budget");
  dec->add_option("--tol", da.tol, "stop when the error change drops below this");
  dec->add_option("--threads", da.threads, "worker threads (0: SPARSETUCK_THREADS or cores)");
  dec->add_option("--seed", da.seed, "random seed");
  dec->add_flag("--one-based", da.one_based, "input coordinates start at 1");
  dec->add_option("--test-input", da.test_input, "held-out COO file for test error");
  dec->add_option("--output-dir", da.output_dir, "where model and reports go");
  dec->add_flag("--no-normalize", da.no_normalize, "skip final column normalization");

  std::string model_dir, queries, output, input, test_input;
  bool one_based = false;
  auto* pre = app.add_subcommand("predict", "Reconstruct values at query coordinates");
  pre->add_option("--model-dir", model_dir, "directory written by decompose")->required();
  pre->add_option("--queries", queries, "coordinate file (values ignored)")->required();
  pre->add_option("--output", output, "write one value per line here (default stdout)");
  pre->add_flag("--one-based", one_based, "query coordinates start at 1");

  std::string ev_model, ev_input, ev_test, ev_output;
  bool ev_one_based = false;
  auto* ev = app.add_subcommand("evaluate", "Error of a stored model on COO data");
  ev->add_option("--model-dir", ev_model, "directory written by decompose")->required();
  ev->add_option("--input", ev_input, "COO tensor file")->required();
  ev->add_option("--test-input", ev_test, "optional held-out COO file");
  ev->add_option("--output", ev_output, "write the JSON result here (default stdout)");
  ev->add_flag("--one-based", ev_one_based, "coordinates start at 1");

  std::string sy_dims, sy_ranks, sy_output = "synthetic.coo", sy_truth;
  std::size_t sy_nnz = 0;
  double sy_density = 1.0, sy_noise = 0.0;
  std::uint64_t sy_seed = 0;
  auto* sy = app.add_subcommand("synth", "Generate a planted low-rank observation set");
  sy->add_option("--dims", sy_dims, "tensor dimensions, e.g. 20,20,10")->required();
  sy->add_option("--ranks", sy_ranks, "planted ranks")->required();
  sy->add_option("--nnz", sy_nnz, "observed entry count")->required();
  sy->add_option("--density", sy_density, "fraction of nonzero truth elements");
  sy->add_option("--noise", sy_noise, "noise standard deviation");
  sy->add_option("--seed", sy_seed, "random seed");
  sy->add_option("--output", sy_output, "COO file to write");
  sy->add_option("--truth-dir", sy_truth, "also store the generating model here");

  std::string be_dims, be_ranks, be_nnz, be_threads = "1", be_output;
  std::size_t be_iters = 3, be_reps = 5;
  std::uint64_t be_seed = 0;
  auto* be = app.add_subcommand("bench", "Per-iteration timing across sizes and threads");
  be->add_option("--dims", be_dims, "tensor dimensions")->required();
  be->add_option("--ranks", be_ranks, "decomposition ranks")->required();
  be->add_option("--nnz", be_nnz, "entry counts, e.g. 10000,100000")->required();
  be->add_option("--threads", be_threads, "thread counts, e.g. 1,4,8");
  be->add_option("--iters", be_iters, "sweeps per timed run");
  be->add_option("--reps", be_reps, "timed runs per cell (median reported)");
  be->add_option("--seed", be_seed, "random seed");
  be->add_option("--output", be_output, "CSV file (default stdout)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (dec->parsed()) return run_decompose(da);
    if (pre->parsed()) return run_predict(model_dir, queries, output, one_based);
    if (ev->parsed()) return run_evaluate(ev_model, ev_input, ev_test, ev_output, ev_one_based);
    if (sy->parsed())
      return run_synth(sy_dims, sy_ranks, sy_nnz, sy_density, sy_noise, sy_seed, sy_output,
                       sy_truth);
    if (be->parsed())
      return run_bench(be_dims, be_ranks, be_nnz, be_threads, be_iters, be_reps, be_seed,
                       be_output);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

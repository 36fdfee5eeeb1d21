#include "saddle/cli.hpp"

#include "saddle/benchmarks.hpp"
#include "saddle/checkpoint.hpp"
#include "saddle/decomposition.hpp"
#include "saddle/errors.hpp"
#include "saddle/grid_io.hpp"
#include "saddle/trainer.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

namespace saddle::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string default_output_dir() {
  const char* env = std::getenv(kOutputDirEnv);
  return env && *env ? std::string(env) : std::string("saddle_out");
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path);
  if (!f) throw InputError("cannot write " + path.string());
  f << text;
  if (!f) throw InputError("failed writing " + path.string());
}

json read_json_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw InputError("cannot open " + path);
  try {
    return json::parse(f);
  } catch (const json::parse_error& e) {
    throw InputError(path + ": " + e.what());
  }
}

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6e", v);
  return buf;
}

// Options shared by the training subcommands. Each value is applied only if
// its flag was given, so file values survive unless overridden.
struct TrainFlags {
  long iterations = 0;
  Index batch_size = 0;
  double learning_rate = 0.0;
  double lambda = 0.0;
  Index N = 0;
  std::string primitive;
  std::vector<Index> hidden;
  std::string activation;
  Index groups = 0;
  Index pieces = 0;
  bool bilinear = false;
  int runs = 0;
  std::uint64_t seed = 0;
  bool desk_scale = false;
  long mc_samples = 0;
  std::uint64_t eval_seed = 0;
  bool checkpoints = false;

  std::vector<std::pair<std::string, CLI::Option*>> opts;

  void add(CLI::App* app, bool with_n) {
    opts.emplace_back("iterations", app->add_option("--iterations", iterations, "Gradient iterations"));
    opts.emplace_back("batch_size", app->add_option("--batch-size", batch_size, "Batch size"));
    opts.emplace_back("learning_rate", app->add_option("--lr", learning_rate, "Adam learning rate"));
    opts.emplace_back("lambda", app->add_option("--lambda", lambda, "Penalty weight"));
    if (with_n) opts.emplace_back("N", app->add_option("--N", N, "Saddle order N"));
    opts.emplace_back("primitive", app->add_option("--primitive", primitive, "icnn or maxaffine"));
    opts.emplace_back("hidden", app->add_option("--hidden", hidden, "ICNN hidden widths")->delimiter(','));
    opts.emplace_back("activation", app->add_option("--activation", activation, "softplus or relu"));
    opts.emplace_back("groups", app->add_option("--groups", groups, "Max-affine groups"));
    opts.emplace_back("pieces", app->add_option("--pieces", pieces, "Max-affine pieces per group"));
    opts.emplace_back("bilinear", app->add_flag("--bilinear", bilinear, "Add the bilinear coupling term"));
    opts.emplace_back("runs", app->add_option("--runs", runs, "Independent runs (seeds base..base+runs-1)"));
    opts.emplace_back("base_seed", app->add_option("--seed", seed, "Base seed"));
    opts.emplace_back("desk_scale", app->add_flag("--desk-scale", desk_scale, "Reduced desk-scale budget"));
    opts.emplace_back("mc_samples", app->add_option("--mc-samples", mc_samples, "Monte-Carlo evaluation samples"));
    opts.emplace_back("eval_seed", app->add_option("--eval-seed", eval_seed, "Evaluation probe seed"));
    app->add_flag("--checkpoints", checkpoints, "Write a checkpoint per run");
  }

  bool given(const std::string& key) const {
    for (const auto& [k, o] : opts) {
      if (k == key) return o->count() > 0;
    }
    return false;
  }

  json as_json() const {
    json j;
    if (given("iterations")) j["iterations"] = iterations;
    if (given("batch_size")) j["batch_size"] = batch_size;
    if (given("learning_rate")) j["learning_rate"] = learning_rate;
    if (given("lambda")) j["lambda"] = lambda;
    if (given("N")) j["N"] = N;
    if (given("primitive")) j["primitive"] = primitive;
    if (given("hidden")) j["hidden"] = hidden;
    if (given("activation")) j["activation"] = activation;
    if (given("groups")) j["groups"] = groups;
    if (given("pieces")) j["pieces"] = pieces;
    if (given("bilinear")) j["bilinear"] = bilinear;
    if (given("runs")) j["runs"] = runs;
    if (given("base_seed")) j["base_seed"] = seed;
    if (given("mc_samples")) j["mc_samples"] = mc_samples;
    if (given("eval_seed")) j["eval_seed"] = eval_seed;
    return j;
  }
};

struct Common {
  std::string out_dir = default_output_dir();
  std::string config_path;
  int jobs = 0;
  CLI::Option* jobs_opt = nullptr;

  void add(CLI::App* app) {
    app->add_option("--out", out_dir, std::string("Output directory (default $") + kOutputDirEnv + " or saddle_out)");
    app->add_option("--config", config_path, "Flat JSON config file; explicit flags override it");
    jobs_opt = app->add_option("--jobs", jobs, "Maximum concurrent runs")->check(CLI::PositiveNumber);
  }
};

json load_config(const Common& c) { return c.config_path.empty() ? json::object() : read_json_file(c.config_path); }

// Resolution order: suite presets, desk-scale presets, config file, flags.
// The full-scale N-sweep trains longer with wider layers.
TrainConfig resolve_train(Suite suite, const Common& common, const TrainFlags& flags, bool sweep = false) {
  json file = load_config(common);
  if (!file.is_object()) throw InputError(common.config_path + ": expected a JSON object");
  TrainConfig cfg = TrainConfig::full_scale(suite);
  if (sweep) {
    cfg.iterations = 1000000;
    cfg.arch.icnn.hidden = {64, 64, 64};
  }
  bool desk = flags.desk_scale;
  if (file.contains("desk_scale")) {
    if (!file["desk_scale"].is_boolean()) throw InputError("config: desk_scale must be a boolean");
    desk = desk || file["desk_scale"].get<bool>();
    file.erase("desk_scale");
  }
  if (desk) {
    cfg.apply_desk_scale(suite);
    cfg.arch.icnn.hidden = IcnnSpec{}.hidden;
  }
  cfg.merge_json(file);
  cfg.merge_json(flags.as_json());
  if (common.jobs_opt && common.jobs_opt->count()) cfg.jobs = common.jobs;
  if (flags.checkpoints) cfg.checkpoint_dir = (fs::path(common.out_dir) / "checkpoints").string();
  cfg.validate();
  return cfg;
}

fs::path prepare_out(const Common& c) {
  fs::path p(c.out_dir);
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw InputError("cannot create output directory " + p.string() + ": " + ec.message());
  return p;
}

void echo_config(const fs::path& dir, json resolved) { write_text(dir / "config.json", resolved.dump(2) + "\n"); }

// Input for grid commands: either --grid FILE or --case ID with --m.
struct GridInput {
  std::string grid_path;
  std::string case_id;
  int m = 0;
  double tol = -1.0;
  CLI::Option* m_opt = nullptr;

  void add(CLI::App* app, int default_m) {
    m = default_m;
    auto* g = app->add_option("--grid", grid_path, "Grid CSV file");
    auto* c = app->add_option("--case", case_id, "1D benchmark case id, e.g. 1d/1");
    g->excludes(c);
    m_opt = app->add_option("--m", m, "Grid resolution for --case")->check(CLI::PositiveNumber);
    app->add_option("--tol", tol, "Admissibility tolerance (default 1e-9 (max|A|+1))");
  }

  decomp::GridSamples load(std::optional<BenchmarkCase>& c) const {
    if (!grid_path.empty()) return decomp::read_grid_csv_file(grid_path);
    if (case_id.empty()) throw InputError("one of --grid or --case is required");
    c = make_case(case_id);
    if (c->dim != 1) throw InputError("grid commands need a 1D case (got " + case_id + ")");
    return sample_case_grid(*c, m);
  }

  json as_json() const {
    json j;
    if (!grid_path.empty()) j["grid"] = grid_path;
    if (!case_id.empty()) {
      j["case"] = case_id;
      j["m"] = m;
    }
    j["tol"] = tol;
    return j;
  }
};

// Max gradient norm estimated from forward differences on an n x n grid.
double lipschitz_estimate(const BenchmarkCase& c, int n = 801) {
  const decomp::GridSamples g = sample_case_grid(c, n - 1);
  const double hx = g.x.width() / g.m;
  const double hy = g.y.width() / g.m;
  double best = 0.0;
  for (int i = 0; i < g.m; ++i) {
    for (int j = 0; j < g.m; ++j) {
      const double gx = (g.A(i + 1, j) - g.A(i, j)) / hx;
      const double gy = (g.A(i, j + 1) - g.A(i, j)) / hy;
      best = std::max(best, std::hypot(gx, gy));
    }
  }
  return best;
}

std::function<double(double, double)> scalar_fn(const BenchmarkCase& c) {
  return [&c](double x, double y) { return c(std::span<const double>(&x, 1), std::span<const double>(&y, 1)); };
}

int cmd_cases(const Common& common, std::ostream& out) {
  const fs::path dir = prepare_out(common);
  echo_config(dir, {{"command", "cases"}, {"out", common.out_dir}});
  const std::string text = catalog_json().dump(2) + "\n";
  write_text(dir / "cases.json", text);
  out << text;
  return kExitOk;
}

int cmd_check_monge(const Common& common, const GridInput& in, bool reversed, std::ostream& out) {
  const fs::path dir = prepare_out(common);
  json cfg = in.as_json();
  cfg["command"] = "check-monge";
  cfg["reversed"] = reversed;
  cfg["out"] = common.out_dir;
  echo_config(dir, cfg);
  std::optional<BenchmarkCase> c;
  const decomp::GridSamples grid = in.load(c);
  const decomp::MongeReport rep = decomp::check_monge(grid, in.tol);
  const bool pass = reversed ? rep.reversed_pass() : rep.forward_pass();
  json j = decomp::to_json(rep);
  j["orientation"] = reversed ? "reversed" : "forward";
  j["passed"] = pass;
  const std::string text = j.dump(2) + "\n";
  write_text(dir / "monge.json", text);
  out << text;
  return pass ? kExitOk : kExitAdmissibility;
}

int cmd_decompose(const Common& common, const GridInput& in, bool reversed, int probe, std::ostream& out) {
  const fs::path dir = prepare_out(common);
  json cfg = in.as_json();
  cfg["command"] = "decompose";
  cfg["reversed"] = reversed;
  cfg["probe"] = probe;
  cfg["out"] = common.out_dir;
  echo_config(dir, cfg);
  std::optional<BenchmarkCase> c;
  const decomp::GridSamples grid = in.load(c);

  decomp::LiftedSaddleFunction lifted;
  decomp::SaddleDecomposition dec;
  if (reversed) {
    lifted = decomp::decompose_reversed(grid, in.tol);
    dec = decomp::decompose_grid(decomp::reversed_grid(grid), in.tol);
  } else {
    dec = decomp::decompose_grid(grid, in.tol);
    lifted = decomp::lift(dec);
  }

  const double scale = std::max(1.0, grid.A.cwiseAbs().maxCoeff());
  double nodal = 0.0;
  for (int i = 0; i <= grid.m; ++i) {
    for (int j = 0; j <= grid.m; ++j) {
      nodal = std::max(nodal, std::abs(lifted(grid.x_node(i), grid.y_node(j)) - grid.A(i, j)));
    }
  }
  json report = {{"m", grid.m}, {"orientation", reversed ? "reversed" : "forward"}, {"nodal_error", nodal / scale}};
  out << "nodal reconstruction error (relative): " << sci(nodal / scale) << "\n";
  if (c) {
    const double sup = decomp::lifted_sup_error(lifted, scalar_fn(*c), probe);
    const double L = lipschitz_estimate(*c);
    const double bound = decomp::sup_error_bound(L, grid.m, grid.x, grid.y);
    report["sup_error"] = sup;
    report["lipschitz_estimate"] = L;
    report["sup_bound"] = bound;
    report["within_bound"] = sup <= bound;
    out << "sup error on " << probe << "x" << probe << " probe: " << sci(sup) << " (bound L*sqrt(2)*h = " << sci(bound)
        << ", L ~ " << sci(L) << ")\n";
  }
  json j = decomp::to_json(dec, lifted);
  j["report"] = report;
  write_text(dir / "decomposition.json", j.dump(2) + "\n");
  out << "wrote " << (dir / "decomposition.json").string() << "\n";
  return kExitOk;
}

json runs_json(const std::vector<TableRow>& rows, const TrainConfig& cfg) {
  json j = json::array();
  for (const auto& r : rows) {
    for (const auto& run : r.results) {
      json rec = run.to_json();
      rec["case"] = std::string(to_string(r.suite)) + "/" + std::to_string(r.case_index);
      rec["config"] = cfg.to_json();
      j.push_back(rec);
    }
  }
  return j;
}

int report_rows(const fs::path& dir, const std::vector<TableRow>& rows, const TrainConfig& cfg, std::ostream& out) {
  std::ostringstream csv;
  write_results_csv(csv, rows);
  write_text(dir / "results.csv", csv.str());
  write_text(dir / "runs.json", runs_json(rows, cfg).dump(2) + "\n");
  out << csv.str();
  int failed = 0;
  for (const auto& r : rows) failed += r.failed;
  if (failed > 0) {
    for (const auto& r : rows) {
      for (const auto& run : r.results) {
        if (run.failed) out << "run seed " << run.seed << " failed: " << run.failure << "\n";
      }
    }
    return kExitTraining;
  }
  return kExitOk;
}

int cmd_train(const Common& common, const TrainFlags& flags, const std::string& case_id, std::ostream& out) {
  const BenchmarkCase c = make_case(case_id);
  TrainConfig cfg = resolve_train(c.suite, common, flags);
  // A single training run unless asked otherwise.
  if (!flags.given("runs") && !load_config(common).contains("runs")) cfg.runs = 1;
  const fs::path dir = prepare_out(common);
  echo_config(dir, {{"command", "train"}, {"case", c.id()}, {"out", common.out_dir}, {"train", cfg.to_json()}});
  return report_rows(dir, run_table({c}, cfg), cfg, out);
}

int cmd_benchmark(const Common& common, const TrainFlags& flags, const std::string& suite_name,
                  const std::vector<int>& indices, std::ostream& out) {
  const Suite suite = parse_suite(suite_name);
  const TrainConfig cfg = resolve_train(suite, common, flags);
  std::vector<BenchmarkCase> cases;
  if (indices.empty()) {
    cases = make_suite(suite);
  } else {
    for (int i : indices) cases.push_back(make_case(suite, i));
  }
  const fs::path dir = prepare_out(common);
  json ids = json::array();
  for (const auto& c : cases) ids.push_back(c.id());
  echo_config(dir, {{"command", "benchmark"}, {"suite", to_string(suite)}, {"cases", ids}, {"out", common.out_dir},
                    {"train", cfg.to_json()}});
  return report_rows(dir, run_table(cases, cfg), cfg, out);
}

int cmd_sweep(const Common& common, const TrainFlags& flags, const std::string& case_id, const std::vector<Index>& ns,
              bool with_bilinear, std::ostream& out) {
  const BenchmarkCase c = make_case(case_id);
  const TrainConfig cfg = resolve_train(c.suite, common, flags, true);
  const fs::path dir = prepare_out(common);
  echo_config(dir, {{"command", "sweep"},
                    {"case", c.id()},
                    {"N", ns},
                    {"with_bilinear", with_bilinear},
                    {"out", common.out_dir},
                    {"train", cfg.to_json()}});
  const SweepResult s = run_sweep(c, ns, cfg, with_bilinear);
  std::ostringstream csv;
  write_sweep_csv(csv, s);
  write_text(dir / "sweep.csv", csv.str());
  out << csv.str();
  for (const auto& e : s.entries) {
    if (e.failed > 0) return kExitTraining;
  }
  return kExitOk;
}

int cmd_verify(const Common& common, const std::string& checkpoint, const std::string& case_id, Index segments,
               double tol, Index sample, std::uint64_t seed, std::ostream& out) {
  const fs::path dir = prepare_out(common);
  echo_config(dir, {{"command", "verify"},
                    {"checkpoint", checkpoint},
                    {"case", case_id},
                    {"segments", segments},
                    {"tol", tol},
                    {"sample", sample},
                    {"seed", seed},
                    {"out", common.out_dir}});
  const SaddleNet net = load_checkpoint(checkpoint);
  Box xb = Box::cube(static_cast<std::size_t>(net.dim()), -1.0, 1.0);
  Box yb = xb;
  if (!case_id.empty()) {
    const BenchmarkCase c = make_case(case_id);
    if (c.dim != net.dim()) {
      throw InputError("checkpoint has input dimension " + std::to_string(net.dim()) + " but case " + c.id() +
                       " has " + std::to_string(c.dim));
    }
    xb = c.x_box;
    yb = c.y_box;
  }
  const SaddleReport r = verify_saddle(net, xb, yb, segments, tol, sample, seed);
  json j = {{"checkpoint", checkpoint},
            {"convexity_violation", r.convexity_violation},
            {"concavity_violation", r.concavity_violation},
            {"sign_residual", r.sign_residual},
            {"mean_residual", r.mean_residual},
            {"tol", r.tol},
            {"passed", r.passed}};
  const std::string text = j.dump(2) + "\n";
  write_text(dir / "verify.json", text);
  out << text;
  return r.passed ? kExitOk : kExitAdmissibility;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Structure-preserving approximation of convex-concave functions"};
  app.require_subcommand(1);

  Common common;
  TrainFlags train_flags, bench_flags, sweep_flags;
  GridInput monge_in, dec_in;
  bool monge_reversed = false, dec_reversed = false, with_bilinear = false;
  int probe = 401;
  std::string train_case, sweep_case = "1d/1", suite = "1d", ckpt, verify_case;
  std::vector<int> bench_cases;
  std::vector<Index> sweep_ns{1, 2, 4, 8, 16, 32, 64, 128};
  Index segments = 10000, sample = 10000;
  double verify_tol = 1e-9;
  std::uint64_t verify_seed = 0;

  auto* cases = app.add_subcommand("cases", "Write the benchmark catalog as JSON");
  common.add(cases);

  auto* monge = app.add_subcommand("check-monge", "Check the grid admissibility conditions");
  common.add(monge);
  monge_in.add(monge, 32);
  monge->add_flag("--reversed", monge_reversed, "Check the reversed mixed condition instead");

  auto* dec = app.add_subcommand("decompose", "Decompose a grid and report reconstruction errors");
  common.add(dec);
  dec_in.add(dec, 16);
  dec->add_flag("--reversed", dec_reversed, "Use the reversed form");
  dec->add_option("--probe", probe, "Probe points per axis for the sup error")->check(CLI::Range(2, 100000));

  auto* train = app.add_subcommand("train", "Train on one benchmark case");
  common.add(train);
  train->add_option("--case", train_case, "Case id, e.g. 1d/1")->required();
  train_flags.add(train, true);

  auto* bench = app.add_subcommand("benchmark", "Train every case of a suite and aggregate the runs");
  common.add(bench);
  bench->add_option("--suite", suite, "1d or 5d");
  bench->add_option("--cases", bench_cases, "Subset of case indices")->delimiter(',');
  bench_flags.add(bench, true);

  auto* sweep = app.add_subcommand("sweep", "Train over a list of N");
  common.add(sweep);
  sweep->add_option("--case", sweep_case, "Case id");
  sweep->add_option("--N", sweep_ns, "Comma-separated list of N")->delimiter(',');
  sweep->add_flag("--with-bilinear", with_bilinear, "Also train the bilinear variant at each N");
  sweep_flags.add(sweep, false);

  auto* verify = app.add_subcommand("verify", "Check convexity/concavity of a checkpointed network");
  common.add(verify);
  verify->add_option("--checkpoint", ckpt, "Checkpoint JSON")->required();
  verify->add_option("--case", verify_case, "Case whose domain is probed (default [-1,1]^d)");
  verify->add_option("--segments", segments, "Random segments per midpoint check")->check(CLI::PositiveNumber);
  verify->add_option("--tol", verify_tol, "Violation tolerance");
  verify->add_option("--sample", sample, "Points for the sign-constraint residual")->check(CLI::PositiveNumber);
  verify->add_option("--seed", verify_seed, "Probe seed");

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  }

  try {
    if (*cases) return cmd_cases(common, out);
    if (*monge) return cmd_check_monge(common, monge_in, monge_reversed, out);
    if (*dec) return cmd_decompose(common, dec_in, dec_reversed, probe, out);
    if (*train) return cmd_train(common, train_flags, train_case, out);
    if (*bench) return cmd_benchmark(common, bench_flags, suite, bench_cases, out);
    if (*sweep) return cmd_sweep(common, sweep_flags, sweep_case, sweep_ns, with_bilinear, out);
    if (*verify) return cmd_verify(common, ckpt, verify_case, segments, verify_tol, sample, verify_seed, out);
  } catch (const decomp::AdmissibilityError& e) {
    err << "error: " << e.what() << "\n" << decomp::to_json(e.report()).dump(2) << "\n";
    return kExitAdmissibility;
  } catch (const NumericalError& e) {
    err << "error: " << e.what() << "\n";
    return kExitTraining;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const json::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  }
  return kExitInput;
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace saddle::cli

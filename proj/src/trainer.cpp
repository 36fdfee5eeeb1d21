#include "saddle/trainer.hpp"

#include "saddle/adam.hpp"
#include "saddle/checkpoint.hpp"
#include "saddle/errors.hpp"

#include <malloc.h>

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <mutex>
#include <ostream>
#include <set>
#include <thread>
#include <tuple>

namespace saddle {

TrainConfig TrainConfig::full_scale(Suite s) {
  TrainConfig c;
  c.penalty_weight = s == Suite::D1 ? 10.0 : 100.0;
  return c;
}

TrainConfig TrainConfig::desk(Suite s) {
  TrainConfig c = full_scale(s);
  c.apply_desk_scale(s);
  return c;
}

void TrainConfig::apply_desk_scale(Suite s) {
  desk_scale = true;
  iterations = s == Suite::D1 ? 20000 : 50000;
  runs = 3;
  mc_samples = 100000;
}

void TrainConfig::validate() const {
  if (iterations < 0) throw InputError("config: iterations must be >= 0");
  if (batch_size <= 0) throw InputError("config: batch_size must be positive");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw InputError("config: learning_rate must be positive");
  if (!(penalty_weight >= 0.0) || !std::isfinite(penalty_weight)) throw InputError("config: lambda must be >= 0");
  if (N <= 0) throw InputError("config: N must be positive");
  if (runs <= 0) throw InputError("config: runs must be positive");
  if (mc_samples <= 0) throw InputError("config: mc_samples must be positive");
  if (jobs <= 0) throw InputError("config: jobs must be positive");
  if (arch.primitive == Primitive::Icnn) {
    if (arch.icnn.hidden.empty()) throw InputError("config: at least one hidden layer is required");
    for (Index w : arch.icnn.hidden) {
      if (w <= 0) throw InputError("config: hidden widths must be positive");
    }
  } else if (arch.max_affine.groups <= 0 || arch.max_affine.pieces <= 0) {
    throw InputError("config: groups and pieces must be positive");
  }
}

nlohmann::json TrainConfig::to_json() const {
  return {{"iterations", iterations},
          {"batch_size", batch_size},
          {"learning_rate", learning_rate},
          {"lambda", penalty_weight},
          {"N", N},
          {"bilinear", bilinear},
          {"primitive", to_string(arch.primitive)},
          {"hidden", arch.icnn.hidden},
          {"activation", to_string(arch.icnn.activation)},
          {"groups", arch.max_affine.groups},
          {"pieces", arch.max_affine.pieces},
          {"runs", runs},
          {"base_seed", base_seed},
          {"desk_scale", desk_scale},
          {"mc_samples", mc_samples},
          {"eval_seed", eval_seed},
          {"jobs", jobs},
          {"checkpoint_dir", checkpoint_dir}};
}

void TrainConfig::merge_json(const nlohmann::json& j) {
  if (!j.is_object()) throw InputError("config: expected a JSON object");
  static const std::set<std::string> known{"iterations", "batch_size", "learning_rate", "lambda", "N",
                                           "bilinear", "primitive", "hidden", "activation", "groups",
                                           "pieces", "runs", "base_seed", "desk_scale", "mc_samples",
                                           "eval_seed", "jobs", "checkpoint_dir"};
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) throw InputError("config: unknown key '" + key + "'");
  }
  try {
    if (j.contains("iterations")) iterations = j["iterations"].get<long>();
    if (j.contains("batch_size")) batch_size = j["batch_size"].get<Index>();
    if (j.contains("learning_rate")) learning_rate = j["learning_rate"].get<double>();
    if (j.contains("lambda")) penalty_weight = j["lambda"].get<double>();
    if (j.contains("N")) N = j["N"].get<Index>();
    if (j.contains("bilinear")) bilinear = j["bilinear"].get<bool>();
    if (j.contains("primitive")) arch.primitive = parse_primitive(j["primitive"].get<std::string>());
    if (j.contains("hidden")) arch.icnn.hidden = j["hidden"].get<std::vector<Index>>();
    if (j.contains("activation")) arch.icnn.activation = parse_activation(j["activation"].get<std::string>());
    if (j.contains("groups")) arch.max_affine.groups = j["groups"].get<Index>();
    if (j.contains("pieces")) arch.max_affine.pieces = j["pieces"].get<Index>();
    if (j.contains("runs")) runs = j["runs"].get<int>();
    if (j.contains("base_seed")) base_seed = j["base_seed"].get<std::uint64_t>();
    if (j.contains("desk_scale")) desk_scale = j["desk_scale"].get<bool>();
    if (j.contains("mc_samples")) mc_samples = j["mc_samples"].get<long>();
    if (j.contains("eval_seed")) eval_seed = j["eval_seed"].get<std::uint64_t>();
    if (j.contains("jobs")) jobs = j["jobs"].get<int>();
    if (j.contains("checkpoint_dir")) checkpoint_dir = j["checkpoint_dir"].get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("config: ") + e.what());
  }
}

nlohmann::json RunResult::to_json() const {
  nlohmann::json j = {{"seed", seed},
                      {"iterations", iterations},
                      {"final_train_loss", final_train_loss},
                      {"mse", mse},
                      {"penalty_residual", penalty_residual},
                      {"wall_s", wall_s},
                      {"checkpoint", checkpoint},
                      {"failed", failed}};
  if (failed) {
    j["failed_iteration"] = failed_iteration;
    j["failure"] = failure;
  }
  return j;
}

void tune_allocator() {
  static std::once_flag once;
  std::call_once(once, [] {
    mallopt(M_MMAP_THRESHOLD, 256 * 1024 * 1024);
    mallopt(M_TRIM_THRESHOLD, 1024 * 1024 * 1024);
  });
}

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

TrainOutcome train_one(const BenchmarkCase& c, const TrainConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  tune_allocator();
  const auto t0 = std::chrono::steady_clock::now();
  Rng init(derive_seed(seed, streams::kInit));
  TrainOutcome out{RunResult{}, SaddleNet::create(c.dim, cfg.N, cfg.arch, cfg.bilinear, cfg.penalty_weight, init)};
  RunResult& res = out.result;
  SaddleNet& net = out.net;
  res.seed = seed;

  ad::ParamStore store(net.parameters());
  ad::AdamConfig adam;
  adam.learning_rate = cfg.learning_rate;
  Rng batch_rng(derive_seed(seed, streams::kBatch));

  constexpr long kWindow = 100;
  std::vector<double> window(static_cast<std::size_t>(kWindow), 0.0);
  const Index bs = cfg.batch_size;
  Matrix X(bs, c.dim), Y(bs, c.dim);
  for (long it = 0; it < cfg.iterations; ++it) {
    for (Index r = 0; r < bs; ++r) {
      c.x_box.sample_into(batch_rng, X, r);
      c.y_box.sample_into(batch_rng, Y, r);
    }
    Matrix T = c.evaluate(X, Y);
    ad::Graph g;
    ad::Var x = g.constant(X);
    ad::Var y = g.constant(Y);
    auto fw = net.forward(g, x, y);
    ad::Var loss = ad::mean(ad::square(fw.value - g.constant(std::move(T)))) + fw.penalty;
    const double lv = loss.value()(0, 0);
    if (!std::isfinite(lv)) {
      res.failed = true;
      res.failed_iteration = it;
      res.failure = "non-finite loss at iteration " + std::to_string(it);
      break;
    }
    res.final_train_loss = lv;
    window[static_cast<std::size_t>(it % kWindow)] = fw.residual.value()(0, 0);
    g.backward(loss);
    try {
      store.adam_step(adam);
    } catch (const NumericalError& e) {
      res.failed = true;
      res.failed_iteration = it;
      res.failure = e.what();
      break;
    }
    net.project_nonnegative();
    res.iterations = it + 1;
  }
  const long kept = std::min(res.iterations, kWindow);
  if (kept > 0) {
    double s = 0.0;
    for (long i = 0; i < kept; ++i) s += window[static_cast<std::size_t>(i)];
    res.penalty_residual = s / static_cast<double>(kept);
  }

  if (!res.failed) {
    const MseProtocol proto = MseProtocol::for_case(c, cfg.mc_samples, cfg.eval_seed);
    try {
      res.mse = eval_mse([&net](const Matrix& a, const Matrix& b) { return net.evaluate(a, b); }, c, proto);
    } catch (const NumericalError& e) {
      res.failed = true;
      res.failure = e.what();
    }
  }
  if (res.failed) res.mse = std::numeric_limits<double>::quiet_NaN();
  if (!cfg.checkpoint_dir.empty()) {
    std::filesystem::create_directories(cfg.checkpoint_dir);
    std::string name = c.id();
    for (char& ch : name) {
      if (ch == '/') ch = '_';
    }
    name += "_N" + std::to_string(cfg.N) + (cfg.bilinear ? "_bilinear" : "") + "_seed" + std::to_string(seed) + ".json";
    res.checkpoint = (std::filesystem::path(cfg.checkpoint_dir) / name).string();
    save_checkpoint(net, res.checkpoint);
  }
  res.wall_s = seconds_since(t0);
  return out;
}

std::pair<double, double> mean_std(const std::vector<double>& v) {
  if (v.empty()) return {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return {m, std::sqrt(s / static_cast<double>(v.size()))};
}

namespace {

struct Job {
  const BenchmarkCase* c;
  TrainConfig cfg;
  std::uint64_t seed;
};

// Runs the jobs on up to `workers` threads; results are stored by job index,
// so the output does not depend on scheduling.
std::vector<RunResult> run_jobs(const std::vector<Job>& jobs, int workers) {
  std::vector<RunResult> results(jobs.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      try {
        results[i] = train_one(*jobs[i].c, jobs[i].cfg, jobs[i].seed).result;
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mu);
        if (!error) error = std::current_exception();
      }
    }
  };
  const int n = std::max(1, std::min<int>(workers, static_cast<int>(jobs.size())));
  if (n == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (error) std::rethrow_exception(error);
  return results;
}

void aggregate(const std::vector<RunResult>& rs, int& failed, double& mean, double& std_dev, double& pen,
               double& wall) {
  std::vector<double> mses, pens;
  failed = 0;
  wall = 0.0;
  for (const auto& r : rs) {
    wall += r.wall_s;
    if (r.failed) {
      ++failed;
      continue;
    }
    mses.push_back(r.mse);
    pens.push_back(r.penalty_residual);
  }
  std::tie(mean, std_dev) = mean_std(mses);
  pen = mean_std(pens).first;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6e", v);
  return buf;
}

}  // namespace

std::vector<TableRow> run_table(const std::vector<BenchmarkCase>& cases, const TrainConfig& cfg) {
  cfg.validate();
  std::vector<Job> jobs;
  for (const auto& c : cases) {
    for (int r = 0; r < cfg.runs; ++r) jobs.push_back({&c, cfg, cfg.base_seed + static_cast<std::uint64_t>(r)});
  }
  const std::vector<RunResult> results = run_jobs(jobs, cfg.jobs);
  std::vector<TableRow> rows;
  std::size_t k = 0;
  for (const auto& c : cases) {
    TableRow row;
    row.suite = c.suite;
    row.case_index = c.index;
    row.primitive = cfg.arch.primitive;
    row.N = cfg.N;
    row.bilinear = cfg.bilinear;
    row.runs = cfg.runs;
    row.results.assign(results.begin() + static_cast<std::ptrdiff_t>(k),
                       results.begin() + static_cast<std::ptrdiff_t>(k + static_cast<std::size_t>(cfg.runs)));
    k += static_cast<std::size_t>(cfg.runs);
    aggregate(row.results, row.failed, row.mean_mse, row.std_mse, row.mean_penalty, row.wall_s);
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_results_csv(std::ostream& out, const std::vector<TableRow>& rows) {
  out << "suite,case,primitive,N,bilinear,runs,mean_mse,std_mse,mean_penalty,wall_s\n";
  for (const auto& r : rows) {
    const bool bad = r.failed > 0;
    char wall[32];
    std::snprintf(wall, sizeof wall, "%.3f", r.wall_s);
    out << to_string(r.suite) << ',' << r.case_index << ',' << to_string(r.primitive) << ',' << r.N << ','
        << (r.bilinear ? 1 : 0) << ',' << r.runs << ',' << (bad ? "failed" : num(r.mean_mse)) << ','
        << (bad ? "failed" : num(r.std_mse)) << ',' << (bad ? "failed" : num(r.mean_penalty)) << ',' << wall << '\n';
  }
}

SweepResult run_sweep(const BenchmarkCase& c, const std::vector<Index>& ns, const TrainConfig& cfg,
                      bool with_bilinear) {
  cfg.validate();
  if (ns.empty()) throw InputError("sweep: N list is empty");
  SweepResult out;
  out.case_id = c.id();
  std::vector<Job> jobs;
  std::vector<std::pair<Index, bool>> keys;
  for (Index n : ns) {
    if (n <= 0) throw InputError("sweep: N values must be positive");
    for (bool bil : with_bilinear ? std::vector<bool>{false, true} : std::vector<bool>{cfg.bilinear}) {
      keys.emplace_back(n, bil);
      TrainConfig k = cfg;
      k.N = n;
      k.bilinear = bil;
      for (int r = 0; r < cfg.runs; ++r) jobs.push_back({&c, k, cfg.base_seed + static_cast<std::uint64_t>(r)});
    }
  }
  const std::vector<RunResult> results = run_jobs(jobs, cfg.jobs);
  for (std::size_t i = 0; i < keys.size(); ++i) {
    SweepEntry e;
    e.N = keys[i].first;
    e.bilinear = keys[i].second;
    e.runs = cfg.runs;
    std::vector<RunResult> rs(results.begin() + static_cast<std::ptrdiff_t>(i * static_cast<std::size_t>(cfg.runs)),
                              results.begin() + static_cast<std::ptrdiff_t>((i + 1) * static_cast<std::size_t>(cfg.runs)));
    double wall = 0.0;
    aggregate(rs, e.failed, e.mean_mse, e.std_mse, e.mean_penalty, wall);
    out.entries.push_back(e);
  }
  return out;
}

void write_sweep_csv(std::ostream& out, const SweepResult& s) {
  out << "case,N,bilinear,runs,mean_mse,std_mse,mean_penalty,log_N,log_mean_mse,log_std_mse\n";
  for (const auto& e : s.entries) {
    const bool bad = e.failed > 0;
    out << s.case_id << ',' << e.N << ',' << (e.bilinear ? 1 : 0) << ',' << e.runs << ','
        << (bad ? "failed" : num(e.mean_mse)) << ',' << (bad ? "failed" : num(e.std_mse)) << ','
        << (bad ? "failed" : num(e.mean_penalty)) << ',' << num(std::log(static_cast<double>(e.N))) << ','
        << (bad ? "failed" : num(std::log(e.mean_mse))) << ',' << (bad ? "failed" : num(std::log(e.std_mse))) << '\n';
  }
}

}  // namespace saddle

#pragma once

// Training protocol: per iteration a uniform batch on X x Y, loss = batch MSE
// + lambda * residual, one backward pass, one Adam step, projection of the
// constrained weights. Runs are seeded and independent.

#include "saddle/benchmarks.hpp"
#include "saddle/saddle_net.hpp"

#include "json.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace saddle {

struct TrainConfig {
  long iterations = 250000;
  Index batch_size = 2048;
  double learning_rate = 1e-3;
  double penalty_weight = 10.0;
  Index N = 20;
  bool bilinear = false;
  SaddleArchitecture arch;
  int runs = 10;
  std::uint64_t base_seed = 0;
  bool desk_scale = false;
  long mc_samples = 500000;     // Monte-Carlo evaluation size (5D)
  std::uint64_t eval_seed = 0;  // probe set shared by all runs
  int jobs = 1;                 // concurrent runs
  std::string checkpoint_dir;   // empty: no checkpoints

  /// Full-scale settings for a suite: 250k iterations, 10 runs, lambda 10 (1D) / 100 (5D).
  static TrainConfig full_scale(Suite s);
  /// Desk-scale settings: 20k (1D) / 50k (5D) iterations, 3 runs, 1e5 MC samples.
  static TrainConfig desk(Suite s);
  void apply_desk_scale(Suite s);

  /// Throws InputError on a nonpositive count or an out-of-range rate.
  void validate() const;
  nlohmann::json to_json() const;
  /// Overrides the fields present in `j`; unknown keys throw InputError.
  void merge_json(const nlohmann::json& j);
};

struct RunResult {
  std::uint64_t seed = 0;
  long iterations = 0;         // iterations completed
  double final_train_loss = 0.0;
  double mse = 0.0;
  double penalty_residual = 0.0;  // mean of the last 100 iterations' residuals
  double wall_s = 0.0;
  std::string checkpoint;
  bool failed = false;
  long failed_iteration = -1;
  std::string failure;

  nlohmann::json to_json() const;
};

struct TrainOutcome {
  RunResult result;
  SaddleNet net;
};

/// Raises the glibc mmap/trim thresholds so that batch-sized temporaries are
/// recycled from the heap instead of being mapped and faulted in each step.
void tune_allocator();

TrainOutcome train_one(const BenchmarkCase& c, const TrainConfig& cfg, std::uint64_t seed);

struct TableRow {
  Suite suite = Suite::D1;
  int case_index = 0;
  Primitive primitive = Primitive::Icnn;
  Index N = 0;
  bool bilinear = false;
  int runs = 0;
  double mean_mse = 0.0;
  double std_mse = 0.0;      // population std over runs
  double mean_penalty = 0.0;
  double wall_s = 0.0;
  int failed = 0;
  std::vector<RunResult> results;
};

/// Trains seeds base_seed + 0 .. runs-1 for every case, up to cfg.jobs at a time.
std::vector<TableRow> run_table(const std::vector<BenchmarkCase>& cases, const TrainConfig& cfg);

/// Columns suite,case,primitive,N,bilinear,runs,mean_mse,std_mse,mean_penalty,wall_s;
/// failed cells read "failed".
void write_results_csv(std::ostream& out, const std::vector<TableRow>& rows);

struct SweepEntry {
  Index N = 0;
  bool bilinear = false;
  int runs = 0;
  double mean_mse = 0.0;
  double std_mse = 0.0;
  double mean_penalty = 0.0;
  int failed = 0;
};

struct SweepResult {
  std::string case_id;
  std::vector<SweepEntry> entries;
};

/// Trains every N in `ns` (and the bilinear variant when `with_bilinear`).
SweepResult run_sweep(const BenchmarkCase& c, const std::vector<Index>& ns, const TrainConfig& cfg,
                      bool with_bilinear = false);

/// Columns case,N,bilinear,runs,mean_mse,std_mse,mean_penalty,log_N,log_mean_mse,log_std_mse.
void write_sweep_csv(std::ostream& out, const SweepResult& s);

/// Population mean and standard deviation.
std::pair<double, double> mean_std(const std::vector<double>& v);

}  // namespace saddle

#pragma once

#include "cnnma/annealer.hpp"
#include "cnnma/dataset.hpp"
#include "cnnma/network.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace cnnma {

enum class Mode { Baseline, CnnMa, SaBaseline, SweepDelta, SweepNeighborhood };

std::string mode_to_string(Mode mode);
Mode mode_from_string(const std::string& name);

struct ExperimentConfig {
  std::string data_dir = "data/mnist";
  int subset = 0;  // 0 = full training set; otherwise stratified first-k
  int epochs = 1;
  double learning_rate = 1.0;
  int batch_size = 100;
  AnnealConfig anneal;  // per-run/epoch seeds are derived, anneal.seed is ignored here
  int repeats = 5;
  std::uint64_t seed = 1;
  Mode mode = Mode::Baseline;
  std::string eval_split = "test";  // accuracy split: "test" or "train"
  std::vector<double> sweep_values;

  void validate() const;
};

// JSON round-trip for config files; missing keys fall back to defaults.
std::string config_to_json(const ExperimentConfig& config);
ExperimentConfig config_from_json(const std::string& text);
ExperimentConfig load_config_file(const std::string& path);

struct EpochRecord {
  int epoch = 0;
  double sgd_loss = 0.0;           // mean per-batch loss of the SGD pass
  double post_sgd_accuracy = 0.0;  // accuracy right after the SGD pass
  double final_accuracy = 0.0;     // after refinement; == post_sgd for baseline
  std::optional<double> anneal_best_energy;
  std::int64_t candidate_evaluations = 0;
  AnnealTrace trace;  // empty for baseline
};

struct RunRecord {
  std::uint64_t run_seed = 0;
  bool failed = false;
  std::string error;
  std::vector<EpochRecord> epochs;
};

struct EpochTiming {
  double sgd_seconds = 0.0;
  double anneal_seconds = 0.0;
  double eval_seconds = 0.0;
};

struct RunTiming {
  std::vector<EpochTiming> epochs;
};

// Raw records are a pure function of the config (seed included); wall-clock
// timings live apart so reports can be compared byte for byte.
struct RunReport {
  ExperimentConfig config;
  std::string environment;
  std::vector<RunRecord> runs;
  std::vector<RunTiming> timings;
};

struct EpochAggregate {
  int epoch = 0;
  int runs = 0;  // successful repeats contributing
  double post_sgd_accuracy_mean = 0.0, post_sgd_accuracy_sd = 0.0;
  double final_accuracy_mean = 0.0, final_accuracy_sd = 0.0;
  double sgd_seconds_mean = 0.0, sgd_seconds_sd = 0.0;
  double train_seconds_mean = 0.0, train_seconds_sd = 0.0;  // sgd + anneal
};

double mean_of(const std::vector<double>& xs);
double sample_sd(const std::vector<double>& xs);  // N-1 denominator; 0 when N < 2
double median_of(std::vector<double> xs);

std::vector<EpochAggregate> aggregate(const RunReport& report);

std::string environment_stamp();

// Runs `repeats` independent repeats with derived seeds. Baseline: SGD
// epochs only. cnn_ma / sa_baseline: each epoch runs one SGD pass, then one
// annealing refinement over the flattened parameters; the incumbent best is
// written back into the network. A failed repeat is recorded and the
// remaining repeats still run.
RunReport run_experiment(const ExperimentConfig& config);
RunReport run_experiment(const ExperimentConfig& config, const MnistData& data);

std::vector<RunReport> sweep_delta_scale(const ExperimentConfig& config,
                                         const std::vector<double>& values);
std::vector<RunReport> sweep_neighborhood(const ExperimentConfig& config,
                                          const std::vector<int>& sizes);

struct MaSaComparison {
  RunReport ma;
  RunReport sa;
  // Paired per-seed deltas (ma - sa) at the final epoch.
  std::vector<double> accuracy_delta;
  std::vector<double> train_seconds_delta;
};

// Same derived seeds and budget on both sides, so the perturbation streams
// pair up exactly.
MaSaComparison compare_ma_sa(const ExperimentConfig& config);
MaSaComparison compare_ma_sa(const ExperimentConfig& config, const MnistData& data);

// Writes records.json (deterministic), timing.json, epochs.csv (epoch, A1,
// T1, A2, T2) and traces/run<r>_epoch<e>.csv under `directory`.
void emit_report(const RunReport& report, const std::string& directory);
void emit_comparison(const MaSaComparison& comparison, const std::string& directory);

}  // namespace cnnma

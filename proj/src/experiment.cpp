#include "cnnma/experiment.hpp"

#include "cnnma/objectives.hpp"
#include "cnnma/seeding.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace cnnma {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Salts for per-run/per-epoch child seeds.
constexpr std::uint64_t kSaltInit = 0x696e6974;      // network init
constexpr std::uint64_t kSaltShuffle = 0x73687566;   // batch shuffle, + epoch
constexpr std::uint64_t kSaltAnneal = 0x616e6e65;    // annealer, + epoch

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

std::string mode_to_string(Mode mode) {
  switch (mode) {
    case Mode::Baseline: return "baseline";
    case Mode::CnnMa: return "cnn_ma";
    case Mode::SaBaseline: return "sa_baseline";
    case Mode::SweepDelta: return "sweep_delta";
    case Mode::SweepNeighborhood: return "sweep_neighborhood";
  }
  throw std::invalid_argument("mode_to_string: bad mode");
}

Mode mode_from_string(const std::string& name) {
  if (name == "baseline") return Mode::Baseline;
  if (name == "cnn_ma") return Mode::CnnMa;
  if (name == "sa_baseline") return Mode::SaBaseline;
  if (name == "sweep_delta") return Mode::SweepDelta;
  if (name == "sweep_neighborhood") return Mode::SweepNeighborhood;
  throw std::invalid_argument("unknown mode '" + name + "'");
}

void ExperimentConfig::validate() const {
  if (subset < 0) throw std::invalid_argument("config: subset must be >= 0");
  if (epochs < 1) throw std::invalid_argument("config: epochs must be >= 1");
  if (learning_rate < 0) throw std::invalid_argument("config: learning_rate must be >= 0");
  if (batch_size < 1) throw std::invalid_argument("config: batch_size must be >= 1");
  if (repeats < 1) throw std::invalid_argument("config: repeats must be >= 1");
  if (eval_split != "test" && eval_split != "train")
    throw std::invalid_argument("config: eval_split must be 'test' or 'train'");
  anneal.validate();
}

// ---- config JSON ----

namespace {

json anneal_to_json(const AnnealConfig& a) {
  return json{{"neighborhood_size", a.neighborhood_size},
              {"max_iterations", a.max_iterations},
              {"initial_kinetic", a.initial_kinetic},
              {"cooling_factor", a.cooling_factor},
              {"delta_scale", a.delta_scale},
              {"strict_microcanonical", a.strict_microcanonical},
              {"seed", a.seed},
              {"termination_epsilon", a.termination_epsilon},
              {"symmetric_delta", a.symmetric_delta}};
}

AnnealConfig anneal_from_json(const json& j) {
  AnnealConfig a;
  a.neighborhood_size = j.value("neighborhood_size", a.neighborhood_size);
  a.max_iterations = j.value("max_iterations", a.max_iterations);
  a.initial_kinetic = j.value("initial_kinetic", a.initial_kinetic);
  a.cooling_factor = j.value("cooling_factor", a.cooling_factor);
  a.delta_scale = j.value("delta_scale", a.delta_scale);
  a.strict_microcanonical = j.value("strict_microcanonical", a.strict_microcanonical);
  a.seed = j.value("seed", a.seed);
  a.termination_epsilon = j.value("termination_epsilon", a.termination_epsilon);
  a.symmetric_delta = j.value("symmetric_delta", a.symmetric_delta);
  return a;
}

json config_to_json_value(const ExperimentConfig& c) {
  return json{{"data_dir", c.data_dir},
              {"subset", c.subset},
              {"epochs", c.epochs},
              {"learning_rate", c.learning_rate},
              {"batch_size", c.batch_size},
              {"anneal", anneal_to_json(c.anneal)},
              {"repeats", c.repeats},
              {"seed", c.seed},
              {"mode", mode_to_string(c.mode)},
              {"eval_split", c.eval_split},
              {"sweep_values", c.sweep_values}};
}

ExperimentConfig config_from_json_value(const json& j) {
  ExperimentConfig c;
  c.data_dir = j.value("data_dir", c.data_dir);
  c.subset = j.value("subset", c.subset);
  c.epochs = j.value("epochs", c.epochs);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.batch_size = j.value("batch_size", c.batch_size);
  if (j.contains("anneal")) c.anneal = anneal_from_json(j.at("anneal"));
  c.repeats = j.value("repeats", c.repeats);
  c.seed = j.value("seed", c.seed);
  if (j.contains("mode")) c.mode = mode_from_string(j.at("mode").get<std::string>());
  c.eval_split = j.value("eval_split", c.eval_split);
  c.sweep_values = j.value("sweep_values", c.sweep_values);
  return c;
}

}  // namespace

std::string config_to_json(const ExperimentConfig& config) {
  return config_to_json_value(config).dump(2) + "\n";
}

ExperimentConfig config_from_json(const std::string& text) {
  return config_from_json_value(json::parse(text));
}

ExperimentConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config file " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return config_from_json(buf.str());
}

// ---- statistics ----

double mean_of(const std::vector<double>& xs) {
  if (xs.empty()) return 0.0;
  double sum = 0.0;
  for (double x : xs) sum += x;
  return sum / double(xs.size());
}

double sample_sd(const std::vector<double>& xs) {
  if (xs.size() < 2) return 0.0;
  const double m = mean_of(xs);
  double acc = 0.0;
  for (double x : xs) acc += (x - m) * (x - m);
  return std::sqrt(acc / double(xs.size() - 1));
}

double median_of(std::vector<double> xs) {
  if (xs.empty()) return 0.0;
  std::sort(xs.begin(), xs.end());
  const size_t n = xs.size();
  return n % 2 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

std::vector<EpochAggregate> aggregate(const RunReport& report) {
  std::vector<EpochAggregate> out;
  for (int e = 0; e < report.config.epochs; ++e) {
    EpochAggregate agg;
    agg.epoch = e + 1;
    std::vector<double> post, fin, sgd_s, train_s;
    for (size_t r = 0; r < report.runs.size(); ++r) {
      const auto& run = report.runs[r];
      if (run.failed || size_t(e) >= run.epochs.size()) continue;
      post.push_back(run.epochs[size_t(e)].post_sgd_accuracy);
      fin.push_back(run.epochs[size_t(e)].final_accuracy);
      if (r < report.timings.size() && size_t(e) < report.timings[r].epochs.size()) {
        const auto& t = report.timings[r].epochs[size_t(e)];
        sgd_s.push_back(t.sgd_seconds);
        train_s.push_back(t.sgd_seconds + t.anneal_seconds);
      }
    }
    agg.runs = int(fin.size());
    agg.post_sgd_accuracy_mean = mean_of(post);
    agg.post_sgd_accuracy_sd = sample_sd(post);
    agg.final_accuracy_mean = mean_of(fin);
    agg.final_accuracy_sd = sample_sd(fin);
    agg.sgd_seconds_mean = mean_of(sgd_s);
    agg.sgd_seconds_sd = sample_sd(sgd_s);
    agg.train_seconds_mean = mean_of(train_s);
    agg.train_seconds_sd = sample_sd(train_s);
    out.push_back(agg);
  }
  return out;
}

std::string environment_stamp() {
  return std::string("gcc ") + __VERSION__ + "; eigen " + std::to_string(EIGEN_WORLD_VERSION) +
         "." + std::to_string(EIGEN_MAJOR_VERSION) + "." + std::to_string(EIGEN_MINOR_VERSION) +
         "; " +
#if defined(__linux__)
         "linux"
#elif defined(__APPLE__)
         "macos"
#else
         "unknown-os"
#endif
      ;
}

// ---- experiment driver ----

namespace {

struct PreparedData {
  Tensor train;        // normalized (N, 28, 28)
  LabelSet train_labels;
  Tensor eval;         // normalized evaluation split
  LabelSet eval_labels;
};

PreparedData prepare(const ExperimentConfig& config, const MnistData& data) {
  PreparedData prep;
  if (config.subset > 0) {
    auto [imgs, labels] = stratified_subset(data.train_images, data.train_labels, config.subset);
    prep.train = normalize(imgs);
    prep.train_labels = std::move(labels);
  } else {
    prep.train = normalize(data.train_images);
    prep.train_labels = data.train_labels;
  }
  if (config.eval_split == "train") {
    prep.eval = prep.train;
    prep.eval_labels = prep.train_labels;
  } else {
    prep.eval = normalize(data.test_images);
    prep.eval_labels = data.test_labels;
  }
  return prep;
}

void run_one_repeat(const ExperimentConfig& config, const PreparedData& prep,
                    std::uint64_t run_seed, RunRecord& record, RunTiming& timing) {
  record.run_seed = run_seed;
  Network net = make_mnist_network(derive_seed(run_seed, kSaltInit));
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    EpochRecord rec;
    rec.epoch = epoch;
    EpochTiming times;

    const auto batches = make_batches(prep.train, prep.train_labels, config.batch_size,
                                      derive_seed(run_seed, kSaltShuffle + std::uint64_t(epoch)));

    auto t0 = std::chrono::steady_clock::now();
    rec.sgd_loss = sgd_epoch(net, batches, config.learning_rate);
    times.sgd_seconds = seconds_since(t0);

    t0 = std::chrono::steady_clock::now();
    rec.post_sgd_accuracy = accuracy(net, prep.eval, prep.eval_labels);
    times.eval_seconds = seconds_since(t0);

    if (config.mode == Mode::CnnMa || config.mode == Mode::SaBaseline) {
      AnnealConfig anneal = config.anneal;
      anneal.seed = derive_seed(run_seed, kSaltAnneal + std::uint64_t(epoch));
      CnnObjective objective(net, batches);
      const Vector x0 = flatten_params(net);

      t0 = std::chrono::steady_clock::now();
      const AnnealResult result = config.mode == Mode::CnnMa ? anneal_run(objective, x0, anneal)
                                                             : sa_run(objective, x0, anneal);
      times.anneal_seconds = seconds_since(t0);

      unflatten_params(net, result.best_x);
      rec.anneal_best_energy = result.best_energy;
      rec.candidate_evaluations = result.candidate_evaluations;
      rec.trace = result.trace;

      t0 = std::chrono::steady_clock::now();
      rec.final_accuracy = accuracy(net, prep.eval, prep.eval_labels);
      times.eval_seconds += seconds_since(t0);
    } else {
      rec.final_accuracy = rec.post_sgd_accuracy;
    }

    record.epochs.push_back(std::move(rec));
    timing.epochs.push_back(times);
  }
}

}  // namespace

RunReport run_experiment(const ExperimentConfig& config, const MnistData& data) {
  config.validate();
  if (config.mode == Mode::SweepDelta || config.mode == Mode::SweepNeighborhood)
    throw std::invalid_argument(
        "run_experiment: sweep modes go through sweep_delta_scale/sweep_neighborhood");

  const PreparedData prep = prepare(config, data);

  RunReport report;
  report.config = config;
  report.environment = environment_stamp();
  for (int r = 0; r < config.repeats; ++r) {
    RunRecord record;
    RunTiming timing;
    const std::uint64_t run_seed = derive_seed(config.seed, std::uint64_t(r));
    try {
      run_one_repeat(config, prep, run_seed, record, timing);
    } catch (const std::exception& e) {
      record.run_seed = run_seed;
      record.failed = true;
      record.error = e.what();
    }
    report.runs.push_back(std::move(record));
    report.timings.push_back(std::move(timing));
  }
  return report;
}

RunReport run_experiment(const ExperimentConfig& config) {
  return run_experiment(config, load_mnist(config.data_dir));
}

std::vector<RunReport> sweep_delta_scale(const ExperimentConfig& config,
                                         const std::vector<double>& values) {
  if (values.empty()) throw std::invalid_argument("sweep_delta_scale: no values");
  for (double v : values)
    if (!(v > 0)) throw std::invalid_argument("sweep_delta_scale: values must be > 0");
  const MnistData data = load_mnist(config.data_dir);
  std::vector<RunReport> reports;
  for (double v : values) {
    ExperimentConfig c = config;
    c.mode = Mode::CnnMa;
    c.anneal.delta_scale = v;
    c.sweep_values = {v};
    reports.push_back(run_experiment(c, data));
  }
  return reports;
}

std::vector<RunReport> sweep_neighborhood(const ExperimentConfig& config,
                                          const std::vector<int>& sizes) {
  if (sizes.empty()) throw std::invalid_argument("sweep_neighborhood: no sizes");
  for (int s : sizes)
    if (s < 1) throw std::invalid_argument("sweep_neighborhood: sizes must be >= 1");
  const MnistData data = load_mnist(config.data_dir);
  std::vector<RunReport> reports;
  for (int s : sizes) {
    ExperimentConfig c = config;
    c.mode = Mode::CnnMa;
    c.anneal.neighborhood_size = s;
    c.sweep_values = {double(s)};
    reports.push_back(run_experiment(c, data));
  }
  return reports;
}

MaSaComparison compare_ma_sa(const ExperimentConfig& config, const MnistData& data) {
  MaSaComparison cmp;
  ExperimentConfig ma = config;
  ma.mode = Mode::CnnMa;
  ExperimentConfig sa = config;
  sa.mode = Mode::SaBaseline;
  cmp.ma = run_experiment(ma, data);
  cmp.sa = run_experiment(sa, data);
  for (size_t r = 0; r < cmp.ma.runs.size() && r < cmp.sa.runs.size(); ++r) {
    const auto& mr = cmp.ma.runs[r];
    const auto& sr = cmp.sa.runs[r];
    if (mr.failed || sr.failed || mr.epochs.empty() || sr.epochs.empty()) continue;
    cmp.accuracy_delta.push_back(mr.epochs.back().final_accuracy -
                                 sr.epochs.back().final_accuracy);
    double mt = 0, st = 0;
    for (const auto& t : cmp.ma.timings[r].epochs) mt += t.sgd_seconds + t.anneal_seconds;
    for (const auto& t : cmp.sa.timings[r].epochs) st += t.sgd_seconds + t.anneal_seconds;
    cmp.train_seconds_delta.push_back(mt - st);
  }
  return cmp;
}

MaSaComparison compare_ma_sa(const ExperimentConfig& config) {
  return compare_ma_sa(config, load_mnist(config.data_dir));
}

// ---- report emission ----

namespace {

json record_to_json(const RunRecord& run) {
  json epochs = json::array();
  for (const auto& e : run.epochs) {
    json je{{"epoch", e.epoch},
            {"sgd_loss", e.sgd_loss},
            {"post_sgd_accuracy", e.post_sgd_accuracy},
            {"final_accuracy", e.final_accuracy},
            {"candidate_evaluations", e.candidate_evaluations}};
    if (e.anneal_best_energy) {
      je["anneal_best_energy"] = *e.anneal_best_energy;
      json trace = json::array();
      for (const auto& row : e.trace.rows)
        trace.push_back(json::array({row.iteration, row.energy, row.kinetic, row.temperature,
                                     row.accepts, row.rejects}));
      je["trace"] = std::move(trace);
    }
    epochs.push_back(std::move(je));
  }
  return json{{"run_seed", run.run_seed},
              {"failed", run.failed},
              {"error", run.error},
              {"epochs", std::move(epochs)}};
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("emit_report: cannot open " + path.string());
  out << text;
  if (!out) throw std::runtime_error("emit_report: write failed on " + path.string());
}

std::string format_full(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

void emit_report(const RunReport& report, const std::string& directory) {
  fs::create_directories(directory);
  const fs::path dir(directory);

  // Deterministic raw records.
  json records{{"config", config_to_json_value(report.config)},
               {"environment", report.environment},
               {"eval_split", report.config.eval_split}};
  json runs = json::array();
  for (const auto& run : report.runs) runs.push_back(record_to_json(run));
  records["runs"] = std::move(runs);
  write_file(dir / "records.json", records.dump(2) + "\n");

  // Wall-clock timings, kept out of the deterministic artifact.
  json timing_runs = json::array();
  for (const auto& t : report.timings) {
    json epochs = json::array();
    for (const auto& e : t.epochs)
      epochs.push_back(json{{"sgd_seconds", e.sgd_seconds},
                            {"anneal_seconds", e.anneal_seconds},
                            {"eval_seconds", e.eval_seconds}});
    timing_runs.push_back(json{{"epochs", std::move(epochs)}});
  }
  write_file(dir / "timing.json", json{{"runs", std::move(timing_runs)}}.dump(2) + "\n");

  // Per-epoch table: epoch, A1, T1, A2, T2.
  const bool annealed = report.config.mode == Mode::CnnMa || report.config.mode == Mode::SaBaseline;
  std::ostringstream csv;
  csv << "epoch,A1,T1,A2,T2\n";
  for (const auto& agg : aggregate(report)) {
    if (agg.runs == 0) continue;
    csv << agg.epoch << ',';
    if (annealed) {
      csv << format_full(agg.post_sgd_accuracy_mean) << ',' << format_full(agg.sgd_seconds_mean)
          << ',' << format_full(agg.final_accuracy_mean) << ','
          << format_full(agg.train_seconds_mean) << '\n';
    } else {
      csv << format_full(agg.final_accuracy_mean) << ',' << format_full(agg.sgd_seconds_mean)
          << ",,\n";
    }
  }
  write_file(dir / "epochs.csv", csv.str());

  // Annealer traces, one CSV per run and epoch.
  if (annealed) {
    fs::create_directories(dir / "traces");
    for (size_t r = 0; r < report.runs.size(); ++r) {
      if (report.runs[r].failed) continue;
      for (const auto& e : report.runs[r].epochs) {
        std::ostringstream os;
        e.trace.write_csv(os);
        write_file(dir / "traces" /
                       ("run" + std::to_string(r) + "_epoch" + std::to_string(e.epoch) + ".csv"),
                   os.str());
      }
    }
  }
}

void emit_comparison(const MaSaComparison& comparison, const std::string& directory) {
  fs::create_directories(directory);
  emit_report(comparison.ma, directory + "/ma");
  emit_report(comparison.sa, directory + "/sa");
  json j{{"accuracy_delta", comparison.accuracy_delta},
         {"train_seconds_delta", comparison.train_seconds_delta},
         {"accuracy_delta_median", median_of(comparison.accuracy_delta)}};
  write_file(fs::path(directory) / "comparison.json", j.dump(2) + "\n");
}

}  // namespace cnnma

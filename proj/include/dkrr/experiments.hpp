#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "dkrr/common.hpp"
#include "dkrr/data.hpp"
#include "dkrr/distributed.hpp"
#include "dkrr/kernel.hpp"
#include "dkrr/krr.hpp"
#include "dkrr/metrics.hpp"

namespace dkrr {

// ---------------------------------------------------------------------------
// Table-level complexity model (abstract flop units).

struct ComplexityModel {
  double tau = 1.0;  // cost of one kernel evaluation, in fused-multiply-adds
  double n = 0.0;
  double m = 0.0;
  double ell = 0.0;
};

inline double omega_dkrr(double n, double m, double tau) {
  return n * n * tau / m + n * n * n / (m * m * m);
}

inline double omega_dkrr_ell(double n, double m, double tau, double ell) {
  return omega_dkrr(n, m, tau) + n * n * ell / m + m * n * ell;
}

inline std::pair<double, double> complexity(const ComplexityModel& c) {
  return {omega_dkrr(c.n, c.m, c.tau), omega_dkrr_ell(c.n, c.m, c.tau, c.ell)};
}

// Closed-form real minimizer of omega_dkrr_ell over m.
inline double m_star(double n, double tau, double ell) {
  if (ell < 1.0) throw InvalidInput("m_star: ell must be >= 1");
  const double t = tau + ell;
  return std::sqrt((std::sqrt(t * t + 12.0 * ell) + t) / (2.0 * ell)) *
         std::sqrt(n);
}

// Practical machine-count estimate: m_star when the admissible bound exceeds
// it, otherwise the bound itself. Real-valued counts are rounded onto the
// scanned grid toward the smaller grid point.
inline long long round_to_grid(double value, const std::vector<long long>& grid) {
  if (grid.empty()) throw InvalidInput("round_to_grid: empty grid");
  long long best = grid.front();
  for (const auto g : grid)
    if (static_cast<double>(g) <= value && g > best) best = g;
  return best;
}

inline long long m_star_hat(double m_star_value,
                            std::optional<long long> m_b_hat,
                            const std::vector<long long>& grid) {
  if (!m_b_hat)
    throw ConfigError("m_star_hat: no feasible machine count on the grid");
  if (static_cast<double>(*m_b_hat) > m_star_value)
    return round_to_grid(m_star_value, grid);
  return *m_b_hat;
}

// Ratio of one kernel evaluation to one fused multiply-add, timed over 1e6
// operations each.
inline double calibrate_tau(const Kernel& kernel, int dim) {
  Rng rng(12345);
  constexpr int kOps = 1'000'000;
  const int pairs = 1024;
  Matrix xs(pairs, dim), ys(pairs, dim);
  for (int i = 0; i < pairs; ++i)
    for (int j = 0; j < dim; ++j) {
      xs(i, j) = rng.uniform();
      ys(i, j) = rng.uniform();
    }
  volatile double sink = 0.0;
  auto t0 = std::chrono::steady_clock::now();
  double acc = 0.0;
  for (int i = 0; i < kOps; ++i)
    acc += kernel.eval(xs.row(i % pairs), ys.row(i % pairs));
  sink = acc;
  const double t_kernel =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  t0 = std::chrono::steady_clock::now();
  double a = 1.0000001, b = 0.999999, c = 0.0;
  for (int i = 0; i < kOps; ++i) c = std::fma(a, b, c);
  sink = sink + c;
  const double t_fma =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  (void)sink;
  return std::max(1.0, t_kernel / std::max(t_fma, 1e-12));
}

// ---------------------------------------------------------------------------
// Configuration.

struct ExperimentConfig {
  std::string simulation = "single";  // motivation|sim1|sim2|sim3|single
  std::string task = "g1";
  std::string kernel = "min";
  std::vector<long long> n_grid = {1000};
  std::vector<long long> m_grid = {4};
  std::vector<int> ell_grid = {0};
  std::vector<double> lambda_grid;  // empty -> default log grid
  int trials = 10;
  long long seed = 1;
  double epsilon = 0.05;
  double noise_variance = 0.2;
  long long test_size = 1000;
  bool tune_per_cell = false;  // default: tune lambda once per (task, N)
  double tau = 0.0;            // 0 -> calibrate at runtime
  std::string out = "results.csv";

  std::vector<double> lambdas() const {
    if (!lambda_grid.empty()) return lambda_grid;
    std::vector<double> grid(20);
    const double lo = std::log(1e-8), hi = std::log(1.0);
    for (int i = 0; i < 20; ++i)
      grid[i] = std::exp(lo + (hi - lo) * i / 19.0);
    return grid;
  }

  void validate() const {
    if (n_grid.empty() || m_grid.empty() || ell_grid.empty())
      throw ConfigError("config: grids must be nonempty");
    if (trials < 1) throw ConfigError("config: trials must be >= 1");
    if (epsilon <= 0.0) throw ConfigError("config: epsilon must be positive");
    target_by_name(task);
    Kernel::by_name(kernel);
  }
};

namespace detail {
template <typename T>
std::vector<T> parse_list(const std::string& text) {
  std::vector<T> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::stringstream vs(item);
    T v;
    if (!(vs >> v)) throw ConfigError("config: cannot parse list item: " + item);
    out.push_back(v);
  }
  return out;
}
}  // namespace detail

// Key-value config file: one `key = value` per line, '#' starts a comment.
// Grid values are comma-separated.
inline ExperimentConfig parse_config(std::istream& in) {
  ExperimentConfig cfg;
  std::string line;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t\r");
      const auto b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty()) continue;
    if (key == "simulation") cfg.simulation = value;
    else if (key == "task") cfg.task = value;
    else if (key == "kernel") cfg.kernel = value;
    else if (key == "N" || key == "N_grid") cfg.n_grid = detail::parse_list<long long>(value);
    else if (key == "m" || key == "m_grid") cfg.m_grid = detail::parse_list<long long>(value);
    else if (key == "ell" || key == "ell_grid") cfg.ell_grid = detail::parse_list<int>(value);
    else if (key == "lambda" || key == "lambda_grid") cfg.lambda_grid = detail::parse_list<double>(value);
    else if (key == "trials") cfg.trials = std::stoi(value);
    else if (key == "seed") cfg.seed = std::stoll(value);
    else if (key == "epsilon") cfg.epsilon = std::stod(value);
    else if (key == "noise_variance") cfg.noise_variance = std::stod(value);
    else if (key == "test_size") cfg.test_size = std::stoll(value);
    else if (key == "tune") cfg.tune_per_cell = (value == "per_cell");
    else if (key == "tau") cfg.tau = std::stod(value);
    else if (key == "out") cfg.out = value;
    else throw ConfigError("config: unknown key: " + key);
  }
  cfg.validate();
  return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  return parse_config(in);
}

// ---------------------------------------------------------------------------
// CSV emission. Reals are printed with 17 significant digits so a re-read
// reproduces them bit-exactly.

inline std::string format_real(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline void emit_csv(const std::vector<MetricsRecord>& records,
                     const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open output file: " + path);
  out << "simulation,task,kernel,N,m,ell,lambda,trial,seed,criterion,value,"
         "wall_time_s,diverged,comm_floats\n";
  for (const auto& r : records) {
    out << r.simulation << ',' << r.task << ',' << r.kernel << ',' << r.n
        << ',' << r.m << ',' << r.ell << ',' << format_real(r.lambda) << ','
        << r.trial << ',' << r.seed << ',' << r.criterion << ','
        << format_real(r.value) << ',' << format_real(r.wall_time_s) << ','
        << (r.diverged ? 1 : 0) << ',' << r.comm_floats << '\n';
  }
}

inline std::vector<MetricsRecord> read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open csv: " + path);
  std::string line;
  std::getline(in, line);  // header
  std::vector<MetricsRecord> records;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string f[14];
    for (auto& field : f) std::getline(ss, field, ',');
    MetricsRecord r;
    r.simulation = f[0];
    r.task = f[1];
    r.kernel = f[2];
    r.n = std::stoll(f[3]);
    r.m = std::stoll(f[4]);
    r.ell = std::stoi(f[5]);
    r.lambda = std::stod(f[6]);
    r.trial = std::stoi(f[7]);
    r.seed = std::stoll(f[8]);
    r.criterion = f[9];
    r.value = std::stod(f[10]);
    r.wall_time_s = std::stod(f[11]);
    r.diverged = f[12] == "1";
    r.comm_floats = std::stoll(f[13]);
    records.push_back(r);
  }
  return records;
}

// ---------------------------------------------------------------------------
// Lambda selection on a held-out validation split.

// `estimator` maps a lambda to validation predictions, or nothing when the
// candidate diverged. Ties break toward the larger lambda.
template <typename Estimator>
double grid_search_lambda(const Vector& validation_truth,
                          const std::vector<double>& grid,
                          Estimator&& estimator) {
  if (grid.empty()) throw ConfigError("grid_search_lambda: empty grid");
  std::optional<double> best_lambda;
  double best_mse = std::numeric_limits<double>::infinity();
  for (const double lambda : grid) {
    const std::optional<Vector> pred = estimator(lambda);
    if (!pred) continue;
    const double err = mse(*pred, validation_truth);
    if (!best_lambda || err < best_mse ||
        (err == best_mse && lambda > *best_lambda)) {
      best_lambda = lambda;
      best_mse = err;
    }
  }
  if (!best_lambda)
    throw ConfigError("grid_search_lambda: all candidates diverged");
  return *best_lambda;
}

inline double grid_search_lambda_krr(const Dataset& train,
                                     const Dataset& validation,
                                     const Kernel& kernel,
                                     const std::vector<double>& grid) {
  return grid_search_lambda(
      validation.outputs, grid,
      [&](double lambda) -> std::optional<Vector> {
        try {
          return predict(fit(train, kernel, lambda), validation.inputs, kernel);
        } catch (const NumericalFailure&) {
          return std::nullopt;
        }
      });
}

// ---------------------------------------------------------------------------
// Trial plumbing shared by the simulation drivers.

struct TrialData {
  Dataset train;
  Dataset validation;
  Dataset test;
};

inline TrialData make_trial(const ExperimentConfig& cfg, long long n,
                            int trial) {
  SyntheticTask task{target_by_name(cfg.task), cfg.noise_variance};
  Rng rng(static_cast<std::uint64_t>(cfg.seed + trial));
  TrialData t;
  t.train = generate(task, n, true, rng);
  t.validation = generate(task, cfg.test_size, true, rng);
  t.test = generate(task, cfg.test_size, false, rng);  // noiseless truths
  return t;
}

inline Partition trial_partition(const ExperimentConfig& cfg, long long n,
                                 long long m, int trial) {
  // Separate stream so the split does not perturb the data draws.
  Rng rng(static_cast<std::uint64_t>(cfg.seed + trial) * 0x9e3779b97f4a7c15ULL + 1);
  return partition_even(n, static_cast<std::size_t>(m), rng);
}

inline MetricsRecord base_record(const ExperimentConfig& cfg, long long n,
                                 long long m, int ell, double lambda,
                                 int trial) {
  MetricsRecord r;
  r.simulation = cfg.simulation;
  r.task = cfg.task;
  r.kernel = cfg.kernel;
  r.n = n;
  r.m = m;
  r.ell = ell;
  r.lambda = lambda;
  r.trial = trial;
  r.seed = cfg.seed + trial;
  return r;
}

// One distributed cell: AEC for every round 0..rounds (index 0 is the plain
// averaging estimator), with timing and communication totals.
struct CellResult {
  std::vector<double> aec;  // indexed by round; truncated at divergence
  bool diverged = false;
  int completed_rounds = 0;
  double train_time = 0.0;
  CommLog log;
};

inline CellResult run_cell(const Dataset& train, const Partition& part,
                           const Dataset& test, const Kernel& kernel,
                           double lambda, int rounds) {
  CellResult cell;
  const DkrrRun run = run_dkrr(train, part, kernel, lambda, rounds);
  cell.diverged = run.model.diverged;
  cell.completed_rounds = run.model.rounds;
  cell.train_time = run.timing.total();
  cell.log = run.log;
  const auto preds = predict_dkrr_rounds(run.model, run.locals, test.inputs,
                                         kernel, run.model.rounds);
  cell.aec.reserve(preds.size());
  for (const auto& p : preds) cell.aec.push_back(mse(p, test.outputs));
  return cell;
}

// ---------------------------------------------------------------------------
// Simulation drivers. Each returns the emitted records (also written to
// cfg.out).

std::vector<MetricsRecord> run_motivation(const ExperimentConfig& cfg);
std::vector<MetricsRecord> run_simulation1(const ExperimentConfig& cfg);
std::vector<MetricsRecord> run_simulation2(const ExperimentConfig& cfg);
std::vector<MetricsRecord> run_simulation3(const ExperimentConfig& cfg);
std::vector<MetricsRecord> run_single(const ExperimentConfig& cfg);
std::vector<MetricsRecord> run_experiment(const ExperimentConfig& cfg);

}  // namespace dkrr

#include "dkrr/experiments_impl.hpp"

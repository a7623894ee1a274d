#pragma once

#include <nnhisd/cli.hpp>
#include <nnhisd/parallel.hpp>
#include <nnhisd/theory.hpp>

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

// Benchmark protocols: acceleration curves, eigensolver comparison and the surrogate noise table.
// The acceptance suite reuses the same protocol functions.

namespace nnhisd::bench {

using nlohmann::json;

struct CurveRun {
  std::string name;
  HisdConfig cfg;
  SaddleResult result;
  std::vector<double> errors;  ///< ||x_n - x*|| per iteration
};

/// First iteration with error <= threshold, or -1.
inline int first_below(const std::vector<double>& errors, double threshold) {
  for (std::size_t i = 0; i < errors.size(); ++i)
    if (errors[i] <= threshold) return static_cast<int>(i);
  return -1;
}

struct AccelReport {
  Vector x_star;
  bool reference_converged = false;
  std::vector<CurveRun> runs;
};

/**
 * Runs every variant from x0 recording the full trajectory. The reference point is either given or
 * obtained by Newton refinement of the first variant's end point.
 */
inline AccelReport compare_schemes(const EnergyOracle& oracle, const Vector& x0,
                                   std::vector<std::pair<std::string, HisdConfig>> variants,
                                   std::optional<Vector> x_star = std::nullopt) {
  AccelReport rep;
  for (auto& [name, cfg] : variants) {
    cfg.trajectory_stride = 1;
    rep.runs.push_back({name, cfg, run(oracle, x0, cfg), {}});
  }
  if (x_star) {
    rep.x_star = *x_star;
    rep.reference_converged = true;
  } else {
    const auto nr = theory::newton_stationary(oracle, rep.runs.front().result.x, 1e-12);
    rep.x_star = nr.x;
    rep.reference_converged = nr.converged && rep.runs.front().result.converged;
  }
  for (auto& r : rep.runs)
    for (const auto& p : r.result.trajectory) r.errors.push_back((p.x - rep.x_star).norm());
  return rep;
}

inline void write_curves_csv(const std::string& path, const AccelReport& rep) {
  auto os = cli::open_out(path);
  os << "iter";
  std::size_t len = 0;
  for (const auto& r : rep.runs) {
    os << ',' << r.name;
    len = std::max(len, r.errors.size());
  }
  os << '\n';
  for (std::size_t i = 0; i < len; ++i) {
    os << i;
    for (const auto& r : rep.runs) {
      os << ',';
      if (i < r.errors.size()) os << surrogate::format_double(r.errors[i]);
    }
    os << '\n';
  }
}

inline void write_summary_csv(const std::string& path, const AccelReport& rep, double threshold) {
  auto os = cli::open_out(path);
  os << "scheme,converged,iterations,iters_to_threshold,final_error,hvp_evals\n";
  for (const auto& r : rep.runs) {
    os << r.name << ',' << (r.result.converged ? 1 : 0) << ',' << r.result.iterations << ','
       << first_below(r.errors, threshold) << ','
       << surrogate::format_double(r.errors.empty() ? 0.0 : r.errors.back()) << ',' << r.result.hvp_evals << '\n';
  }
}

/// plain / heavy ball (gamma) / Nesterov with fixed restart, sharing beta and k.
inline std::vector<std::pair<std::string, HisdConfig>> standard_variants(HisdConfig base, double gamma, int restart) {
  HisdConfig plain = base;
  plain.scheme = Scheme::plain;
  HisdConfig hb = base;
  hb.scheme = Scheme::heavy_ball;
  hb.gamma = gamma;
  HisdConfig na = base;
  na.scheme = Scheme::nesterov;
  na.restart = restart;
  return {{"plain", plain}, {"heavy_ball", hb}, {"nesterov", na}};
}

/// Setup of one acceleration benchmark.
struct AccelCase {
  std::string oracle;
  Vector x0;
  HisdConfig base;
  double gamma = 0.8;
  int restart = 0;
};

inline AccelCase accel_case(const std::string& suite) {
  AccelCase c;
  c.base.hvp = HvpMode::exact;
  c.base.max_iters = 20000;
  c.base.tol = 1e-9;
  if (suite == "accel_mb") {
    c.oracle = "mb";
    c.x0 = (Vector(2) << 0.15, 1.5).finished();
    c.base.beta = 3e-4;
    c.restart = 5;
  } else if (suite == "accel_mmb") {
    c.oracle = "mmb";
    c.x0 = (Vector(2) << 0.15, 1.4).finished();
    c.base.beta = 3e-4;
    c.restart = 15;
  } else if (suite == "accel_rosenbrock") {
    c.oracle = "rosenbrock";
    c.x0 = Vector::Constant(7, 0.9);
    c.base.k = 3;
    c.base.beta = 1e-4;
    c.base.max_iters = 2000;
    c.restart = 40;
  } else {
    throw ArgumentError("unknown acceleration suite '" + suite + "'");
  }
  return c;
}

// ---------------------------------------------------------------------------
// Toy2D surrogate protocol (dataset -> training -> search)

inline Vector toy2d_reference_saddle() {
  const ToyPotential toy = ToyPotential::toy2d();
  HisdConfig cfg;
  cfg.hvp = HvpMode::exact;
  const auto r = run(toy, (Vector(2) << 0.7, 0.7).finished(), cfg);
  return theory::newton_stationary(toy, r.x).x;
}

struct Toy2dTrial {
  double ratio = 0.0;
  std::uint64_t seed = 0;
  bool converged = false;
  Vector x;
  double error = 0.0;
  double train_mse = 0.0;
  double seconds = 0.0;
};

inline cli::GenDataOptions toy2d_data_options(double ratio, double sigma, std::uint64_t seed) {
  cli::GenDataOptions g;
  g.potential = "toy2d";
  g.n = 5000;
  g.noise_ratio = ratio;
  g.noise_sigma = sigma;
  g.seed = seed;
  return g;
}

inline config::TrainJob toy2d_train_job(int epochs, std::uint64_t seed) {
  config::TrainJob job;
  job.hidden = {128, 128, 128};
  job.train.batch_size = 500;
  job.train.epochs = epochs;
  job.train.seed = seed;
  return job;
}

inline HisdConfig toy2d_search_config() {
  HisdConfig cfg;
  cfg.beta = 0.05;
  cfg.hvp = HvpMode::exact;
  return cfg;
}

inline Toy2dTrial toy2d_trial(double ratio, std::uint64_t seed, int epochs, const Vector& reference, double sigma = 0.1) {
  const auto t0 = std::chrono::steady_clock::now();
  Toy2dTrial out;
  out.ratio = ratio;
  out.seed = seed;
  const auto data = cli::generate_dataset(toy2d_data_options(ratio, sigma, seed));
  const auto job = toy2d_train_job(epochs, seed);
  std::vector<int> widths{2};
  widths.insert(widths.end(), job.hidden.begin(), job.hidden.end());
  widths.push_back(1);
  auto model = std::make_shared<surrogate::MlpSurrogate>(widths, false, derive_seed(seed, streams::init));
  surrogate::train(*model, data, job.train);
  out.train_mse = surrogate::evaluate_mse(*model, data);
  const surrogate::SurrogateOracle oracle(model);
  const auto r = run(oracle, (Vector(2) << 0.7, 0.7).finished(), toy2d_search_config());
  out.converged = r.converged;
  out.x = r.x;
  out.error = (r.x - reference).norm();
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

inline double median(std::vector<double> v) {
  require(!v.empty(), "median of an empty set");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// ---------------------------------------------------------------------------
// Suites

struct BenchOptions {
  std::string suite;
  std::string out_dir;
  std::uint64_t seed = 0;
  int workers = 1;
  int epochs = 10000;  ///< noise_table training length
  int seeds = 1;       ///< noise_table seeds per ratio
  std::string oracle;  ///< overrides the suite's analytic potential (e.g. a surrogate checkpoint)
  std::optional<double> alpha;
};

inline void run_accel_suite(const BenchOptions& o, cli::RunManifest& m) {
  AccelCase c = accel_case(o.suite);
  const std::string spec = o.oracle.empty() ? c.oracle : o.oracle;
  const OraclePtr oracle = cli::resolve_oracle(spec, o.alpha);
  c.base.seed = o.seed;
  const auto variants = standard_variants(c.base, c.gamma, c.restart);
  const AccelReport rep = compare_schemes(*oracle, c.x0, variants);
  const std::string curves = o.out_dir + "/" + o.suite + "_curves.csv";
  const std::string summary = o.out_dir + "/" + o.suite + "_summary.csv";
  write_curves_csv(curves, rep);
  write_summary_csv(summary, rep, 1e-6);
  m.config = {{"oracle", spec}, {"x0", config::to_std(c.x0)}, {"hisd", config::to_json(c.base)},
              {"gamma", c.gamma}, {"restart", c.restart}};
  m.outputs["curves"] = curves;
  m.outputs["summary"] = summary;
  m.outputs["x_star"] = config::to_std(rep.x_star);
  m.outputs["reference_converged"] = rep.reference_converged;
}

inline void run_eigsol_compare(const BenchOptions& o, cli::RunManifest& m) {
  const std::string path = o.out_dir + "/eigsol_compare.csv";
  auto os = cli::open_out(path);
  os << "case,method,converged,iterations,x_1,x_2,hvp_evals,seconds,distance_to_lobpcg\n";
  json cases = json::array();
  for (const std::string suite : {"accel_mb", "accel_mmb"}) {
    AccelCase c = accel_case(suite);
    const OraclePtr oracle = cli::resolve_oracle(o.oracle.empty() ? c.oracle : o.oracle, o.alpha);
    c.base.scheme = Scheme::plain;
    c.base.tol = 1e-8;
    c.base.seed = o.seed;
    Vector ref;
    for (auto method : {eig::Method::lobpcg, eig::Method::sirqit}) {
      HisdConfig cfg = c.base;
      cfg.eig_method = method;
      const auto t0 = std::chrono::steady_clock::now();
      const auto r = run(*oracle, c.x0, cfg);
      const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      if (method == eig::Method::lobpcg) ref = r.x;
      os << c.oracle << ',' << eig::to_string(method) << ',' << (r.converged ? 1 : 0) << ',' << r.iterations << ','
         << surrogate::format_double(r.x[0]) << ',' << surrogate::format_double(r.x[1]) << ',' << r.hvp_evals << ','
         << sec << ',' << surrogate::format_double((r.x - ref).norm()) << '\n';
    }
    cases.push_back(c.oracle);
  }
  m.config = {{"cases", cases}};
  m.outputs["table"] = path;
}

inline void run_noise_table(const BenchOptions& o, cli::RunManifest& m) {
  const Vector reference = toy2d_reference_saddle();
  std::vector<std::pair<double, std::uint64_t>> jobs;
  for (int i = 0; i <= 10; ++i)
    for (int s = 0; s < o.seeds; ++s) jobs.emplace_back(i / 10.0, o.seed + static_cast<std::uint64_t>(s));
  const auto trials = parallel_map(jobs.size(), o.workers, [&](std::size_t i) {
    return toy2d_trial(jobs[i].first, jobs[i].second, o.epochs, reference);
  });
  const std::string raw = o.out_dir + "/noise_table_runs.csv";
  {
    auto os = cli::open_out(raw);
    os << "ratio,seed,converged,x_1,x_2,error,train_mse,seconds\n";
    for (const auto& t : trials) {
      os << t.ratio << ',' << t.seed << ',' << (t.converged ? 1 : 0) << ',' << surrogate::format_double(t.x[0]) << ','
         << surrogate::format_double(t.x[1]) << ',' << surrogate::format_double(t.error) << ','
         << surrogate::format_double(t.train_mse) << ',' << t.seconds << '\n';
    }
  }
  const std::string table = o.out_dir + "/noise_table.csv";
  {
    auto os = cli::open_out(table);
    os << "ratio,median_error,seeds\n";
    for (int i = 0; i <= 10; ++i) {
      std::vector<double> errs;
      for (const auto& t : trials)
        if (std::abs(t.ratio - i / 10.0) < 1e-12) errs.push_back(t.error);
      os << i / 10.0 << ',' << surrogate::format_double(median(errs)) << ',' << errs.size() << '\n';
    }
  }
  m.config = {{"epochs", o.epochs}, {"seeds", o.seeds}, {"sigma", 0.1}, {"n", 5000}};
  m.outputs["runs"] = raw;
  m.outputs["table"] = table;
}

inline void cmd_bench(const BenchOptions& o, cli::RunManifest& m) {
  std::filesystem::create_directories(o.out_dir);
  m.seed = o.seed;
  cli::PhaseTimer t(m, o.suite);
  if (o.suite.rfind("accel_", 0) == 0) {
    run_accel_suite(o, m);
  } else if (o.suite == "eigsol_compare") {
    run_eigsol_compare(o, m);
  } else if (o.suite == "noise_table") {
    run_noise_table(o, m);
  } else {
    throw ArgumentError("unknown bench suite '" + o.suite + "'");
  }
  m.config["suite"] = o.suite;
}

}  // namespace nnhisd::bench

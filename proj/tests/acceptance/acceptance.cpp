// Acceptance suite: one PASS/FAIL line per criterion. Tolerances are fixed here.
// Usage: acceptance [criterion ids...]   (default: all)

#include <nnhisd/bench.hpp>
#include <nnhisd/cli.hpp>
#include <nnhisd/landscape.hpp>
#include <nnhisd/surrogate/mlp.hpp>
#include <nnhisd/surrogate/train.hpp>
#include <nnhisd/theory.hpp>

#include <Eigen/Eigenvalues>

#include <array>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

using namespace nnhisd;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  std::string name;
  std::function<Outcome()> check;
};

class Stopwatch {
 public:
  [[nodiscard]] double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
  }

 private:
  std::chrono::steady_clock::time_point t0_ = std::chrono::steady_clock::now();
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string vec_str(const Vector& x) {
  std::ostringstream os;
  os << '(';
  for (Eigen::Index i = 0; i < x.size(); ++i) os << (i ? ", " : "") << fmt("%.5f", x[i]);
  os << ')';
  return os.str();
}

Vector vec(std::initializer_list<double> v) {
  Vector x(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double a : v) x[i++] = a;
  return x;
}

fs::path work_dir() {
  const char* env = std::getenv("NNHISD_ACCEPTANCE_DIR");
  fs::path p = env ? fs::path(env) : fs::temp_directory_path() / "nnhisd_acceptance";
  fs::create_directories(p);
  return p;
}

// ---------------------------------------------------------------------------
// 1-3: analytic searches

const Vector toy2d_saddle = vec({1.2842, 3.4484});

Outcome toy2d_analytic() {
  const auto o = make_analytic("toy2d");
  HisdConfig cfg;
  cfg.beta = 0.05;
  const Stopwatch sw;
  const auto r = run(*o, vec({0.7, 0.7}), cfg);
  const double t = sw.seconds();
  const double err = (r.x - toy2d_saddle).cwiseAbs().maxCoeff();
  return {r.converged && err <= 1e-3 && r.iterations <= 2000 && t < 1.0,
          "x=" + vec_str(r.x) + " err_inf=" + fmt("%.2e", err) + " iters=" + std::to_string(r.iterations) +
              " time=" + fmt("%.3f", t) + "s"};
}

Outcome mb_analytic() {
  const auto o = make_analytic("mb");
  HisdConfig cfg;
  cfg.beta = 3e-4;
  cfg.max_iters = 100000;
  const Stopwatch sw;
  const auto r = run(*o, vec({0.15, 0.25}), cfg);
  const auto idx = classify_index(*o, r.x);
  const double t = sw.seconds();
  const double err = (r.x - vec({-0.8220, 0.6243})).cwiseAbs().maxCoeff();
  return {r.converged && err <= 1e-3 && idx.index == 1 && t < 5.0,
          "x=" + vec_str(r.x) + " err_inf=" + fmt("%.2e", err) + " index=" + std::to_string(idx.index) +
              " iters=" + std::to_string(r.iterations) + " time=" + fmt("%.3f", t) + "s"};
}

Outcome rosenbrock_analytic() {
  const auto o = make_analytic("rosenbrock");
  const int d = o->dim();
  HisdConfig cfg;
  cfg.k = 3;
  cfg.beta = 1e-4;
  cfg.scheme = Scheme::nesterov;
  cfg.restart = 40;
  cfg.max_iters = 2000;
  const auto r = run(*o, Vector::Constant(d, 0.9), cfg);
  const double err = all_finite(r.x) ? (r.x - Vector::Ones(d)).cwiseAbs().maxCoeff() : INFINITY;
  const auto idx = all_finite(r.x) ? classify_index(*o, r.x) : IndexInfo{};
  const auto anchor = classify_index(*o, Vector::Ones(d));
  return {r.converged && err <= 5e-3 && r.iterations <= 2000 && idx.index == 3,
          "diverged=" + std::to_string(r.diverged) + " reason=" + r.reason + " err_inf=" + fmt("%.2e", err) +
              " iters=" + std::to_string(r.iterations) + " index=" + std::to_string(idx.index) +
              " index_at_anchor=" + std::to_string(anchor.index)};
}

// ---------------------------------------------------------------------------
// 4-5: Toy2D surrogate pipeline and noise trend

constexpr int toy2d_epochs = 10000;
const std::array<std::uint64_t, 3> toy2d_seeds{1, 2, 3};
std::vector<double> clean_errors;  // shared with the noise trend

double toy2d_pipeline(std::uint64_t seed, const fs::path& dir) {
  const std::string tag = "seed" + std::to_string(seed);
  cli::RunManifest m;
  auto g = bench::toy2d_data_options(0.0, 0.1, seed);
  g.out = (dir / (tag + ".csv")).string();
  cli::cmd_gen_data(g, m);
  cli::TrainOptions t;
  t.data = g.out;
  t.job = bench::toy2d_train_job(toy2d_epochs, seed);
  t.out = (dir / (tag + ".model.json")).string();
  cli::cmd_train(t, m);
  cli::SearchOptions s;
  s.oracle = t.out;
  s.x0 = vec({0.7, 0.7});
  s.hisd = bench::toy2d_search_config();
  s.out = (dir / (tag + ".search.json")).string();
  const auto r = cli::cmd_search(s, m);
  return r.converged ? (r.x - toy2d_saddle).norm() : INFINITY;
}

Outcome toy2d_surrogate() {
  const fs::path dir = work_dir() / "toy2d";
  fs::create_directories(dir);
  std::string detail;
  double worst_time = 0.0;
  clean_errors.clear();
  for (auto seed : toy2d_seeds) {
    const Stopwatch sw;
    clean_errors.push_back(toy2d_pipeline(seed, dir));
    worst_time = std::max(worst_time, sw.seconds());
    detail += "seed" + std::to_string(seed) + "=" + fmt("%.4g", clean_errors.back()) + " ";
  }
  const double med = bench::median(clean_errors);
  const double worst = *std::max_element(clean_errors.begin(), clean_errors.end());
  return {worst <= 5e-2 && med <= 2e-2 && worst_time < 900.0,
          detail + "median=" + fmt("%.4g", med) + " max_seed_time=" + fmt("%.0f", worst_time) + "s"};
}

Outcome noise_trend() {
  if (clean_errors.size() != toy2d_seeds.size()) (void)toy2d_surrogate();
  std::map<double, double> med{{0.0, bench::median(clean_errors)}};
  std::string detail = "ratio0=" + fmt("%.4g", med[0.0]);
  for (double ratio : {0.5, 1.0}) {
    std::vector<double> errs;
    for (auto seed : toy2d_seeds)
      errs.push_back(bench::toy2d_trial(ratio, seed, toy2d_epochs, toy2d_saddle, 0.1).error);
    med[ratio] = bench::median(errs);
    detail += " ratio" + fmt("%g", ratio) + "=" + fmt("%.4g", med[ratio]);
  }
  return {med[0.0] <= med[0.5] && med[0.5] <= med[1.0] && med[1.0] <= 1.0, "medians " + detail};
}

// ---------------------------------------------------------------------------
// 6: parametric landscape

struct TableRow {
  int index;
  Vector x;
};

std::vector<TableRow> table_alpha6() {
  return {{2, vec({2.89, 2.94, 1.25})}, {1, vec({6.61, 3.26, 5.92})}, {1, vec({3.10, 1.35, 1.82})},
          {1, vec({1.82, 3.10, 0.58})}, {0, vec({6.43, 0.80, 6.01})}, {0, vec({1.10, 0.80, 0.69})},
          {0, vec({6.85, 6.06, 5.81})}};
}

std::vector<TableRow> table_alpha3() {
  return {{2, vec({4.17, 3.97, 1.52})},  {2, vec({5.91, 4.19, 4.48})},  {1, vec({1.22, 4.20, -0.12})},
          {1, vec({4.34, 1.21, 2.28})},  {1, vec({4.05, 5.60, 1.09})},  {1, vec({5.48, 3.86, 2.34})},
          {1, vec({5.55, 1.05, 3.83})},  {1, vec({6.05, 4.26, 5.13})},  {1, vec({6.07, 5.47, 4.72})},
          {0, vec({0.42, 0.32, 0.28})},  {0, vec({1.51, 5.50, -0.24})}, {0, vec({5.43, 1.36, 3.09})},
          {0, vec({5.53, 5.65, 1.92})},  {0, vec({5.79, 0.43, 5.40})},  {0, vec({6.12, 5.45, 4.97})}};
}

// One-to-one match of nodes to rows of the same index within tol (infinity norm).
std::pair<int, double> match_table(const landscape::LandscapeGraph& g, const std::vector<TableRow>& table, double tol) {
  std::set<int> used;
  int matched = 0;
  double worst = 0.0;
  for (const auto& row : table) {
    int best = -1;
    double best_d = INFINITY;
    for (const auto& n : g.nodes) {
      if (n.index != row.index || used.count(n.id)) continue;
      const double d = (n.x - row.x).cwiseAbs().maxCoeff();
      if (d < best_d) {
        best_d = d;
        best = n.id;
      }
    }
    if (best >= 0 && best_d <= tol) {
      used.insert(best);
      ++matched;
      worst = std::max(worst, best_d);
    }
  }
  return {matched, worst};
}

Outcome landscape_case(double alpha, const Vector& seed, int seed_index, const std::vector<TableRow>& table) {
  const auto o = make_analytic("toy3d:" + fmt("%g", alpha));
  landscape::SearchPolicy p;
  p.seed_index = seed_index;
  p.max_index = 2;
  const Stopwatch sw;
  const auto g = landscape::build_landscape(*o, seed, p);
  const double t = sw.seconds();
  const auto [matched, worst] = match_table(g, table, 5e-2);
  std::map<int, int> want;
  for (const auto& r : table) ++want[r.index];
  const auto counts = g.index_counts();
  std::string c;
  for (const auto& [k, v] : counts) c += std::to_string(k) + ":" + std::to_string(v) + " ";
  const bool ok = g.nodes.size() == table.size() && std::map<int, int>(counts.begin(), counts.end()) == want &&
                  matched == static_cast<int>(table.size()) && t < 60.0;
  return {ok, "alpha=" + fmt("%g", alpha) + " nodes=" + std::to_string(g.nodes.size()) + " {" + c + "} matched=" +
                  std::to_string(matched) + "/" + std::to_string(table.size()) + " worst=" + fmt("%.3f", worst) +
                  " time=" + fmt("%.2f", t) + "s"};
}

Outcome landscape_toy3d() {
  const auto a = landscape_case(6.0, vec({2.9, 2.9, 1.2}), 2, table_alpha6());
  const auto b = landscape_case(3.0, vec({0.4, 0.3, 0.3}), 0, table_alpha3());
  return {a.pass && b.pass, a.detail + "; " + b.detail};
}

// ---------------------------------------------------------------------------
// 7-8: theory suites

Matrix random_orthogonal(int d, Rng& rng) {
  std::normal_distribution<double> n01;
  Matrix g(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) g(i, j) = n01(rng);
  return eig::orthonormalize(g);
}

Outcome convergence_bound() {
  Rng rng(2024);
  std::normal_distribution<double> n01;
  std::uniform_real_distribution<double> mag(0.5, 10.0);
  int violations = 0, checked = 0;
  double worst = 0.0;
  for (int c = 0; c < 20; ++c) {
    const int d = 2 + c % 6;
    const int k = 1 + c % (d - 1);
    const Matrix q = random_orthogonal(d, rng);
    Vector lam(d);
    for (int i = 0; i < d; ++i) lam[i] = (i < k ? -1.0 : 1.0) * mag(rng);
    const QuadraticPotential pot(q * lam.asDiagonal() * q.transpose(), Vector::Zero(d));
    theory::TheoryCheck t;
    t.mu = lam.cwiseAbs().minCoeff();
    t.L = lam.cwiseAbs().maxCoeff();
    HisdConfig cfg;
    cfg.k = k;
    cfg.hvp = HvpMode::exact;
    Vector x0(d);
    for (int i = 0; i < d; ++i) x0[i] = n01(rng);
    const auto rep = theory::check_convergence_bound(pot, Vector::Zero(d), x0, cfg, t, 500, 0.0);
    violations += rep.violations;
    checked += rep.steps_checked;
    worst = std::max(worst, rep.worst_ratio);
  }
  return {violations == 0, "cases=20 steps_checked=" + std::to_string(checked) + " violations=" +
                               std::to_string(violations) + " worst_ratio=" + fmt("%.3f", worst)};
}

Outcome displacement() {
  Rng rng(99);
  std::uniform_real_distribution<double> mag(0.5, 5.0), ph(0.0, 6.283185307179586);
  int violations = 0, entries = 0;
  double worst = 0.0;
  for (int c = 0; c < 6; ++c) {
    const int d = 2 + c % 3;
    const int k = 1 + c % (d - 1);
    const Matrix q = random_orthogonal(d, rng);
    Vector lam(d), phase(d), center(d);
    for (int i = 0; i < d; ++i) {
      lam[i] = (i < k ? -1.0 : 1.0) * mag(rng);
      phase[i] = ph(rng);
      center[i] = mag(rng) - 2.5;
    }
    OraclePtr base = std::make_shared<QuadraticPotential>(q * lam.asDiagonal() * q.transpose(), center);
    const double mu = lam.cwiseAbs().minCoeff();
    const auto rep = theory::check_surrogate_displacement(
        center, [&](double e) { return theory::sinusoidal_perturbation(base, e, phase); }, mu, {1e-2, 1e-3, 1e-4},
        1.0, 1.0);
    violations += rep.violations;
    for (const auto& e : rep.entries) {
      ++entries;
      worst = std::max(worst, e.displacement / e.bound);
    }
  }
  return {violations == 0, "entries=" + std::to_string(entries) + " violations=" + std::to_string(violations) +
                               " worst_ratio=" + fmt("%.3f", worst)};
}

// ---------------------------------------------------------------------------
// 9: numerical kernels

surrogate::MlpSurrogate random_model(const std::vector<int>& widths, std::uint64_t seed) {
  surrogate::MlpSurrogate m(widths, false, seed);
  Rng rng(seed + 7);
  std::uniform_real_distribution<double> u(0.5, 2.0);
  auto in = surrogate::Normalizer::identity(widths.front());
  for (int i = 0; i < widths.front(); ++i) {
    in.mean[i] = u(rng) - 1.0;
    in.stdev[i] = u(rng);
  }
  m.set_normalizers(in, {0.2, u(rng)});
  return m;
}

Vector gaussian(int d, Rng& rng) {
  std::normal_distribution<double> n01;
  Vector v(d);
  for (int i = 0; i < d; ++i) v[i] = n01(rng);
  return v;
}

Outcome kernels() {
  Rng rng(9);
  std::uniform_int_distribution<int> dim(1, 6), width(2, 32);
  double ad_worst = 0.0;
  for (int s = 0; s < 100; ++s) {
    const int d = dim(rng);
    std::vector<int> widths{d};
    for (int l = 0; l < 1 + s % 3; ++l) widths.push_back(width(rng));
    widths.push_back(1);
    const auto m = random_model(widths, 500 + static_cast<std::uint64_t>(s));
    const Vector x = gaussian(d, rng);
    const Vector g = surrogate::grad_input(m, x);
    const Vector fd = central_difference_gradient([&](const Vector& y) { return m.forward(y); }, x, 1e-5);
    ad_worst = std::max(ad_worst, (g - fd).norm() / std::max(1.0, g.norm()));
  }
  double hvp_worst = 0.0;
  for (int s = 0; s < 20; ++s) {
    const auto m = random_model({2, 16, 16, 1}, 900 + static_cast<std::uint64_t>(s));
    const Vector x = gaussian(2, rng);
    const Vector v = gaussian(2, rng).normalized();
    const Vector a = surrogate::hvp_input(m, x, v, surrogate::HvpMethod::nested_ad);
    const Vector b = surrogate::hvp_input(m, x, v, surrogate::HvpMethod::dimer, {1e-4});
    hvp_worst = std::max(hvp_worst, (a - b).cwiseAbs().maxCoeff());
  }
  double eig_worst = 0.0;
  bool eig_converged = true;
  std::uniform_int_distribution<int> edim(5, 60), ek(1, 5);
  for (int s = 0; s < 50; ++s) {
    const int d = edim(rng);
    Matrix g(d, d);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) g(i, j) = gaussian(1, rng)[0];
    const Matrix a = 0.5 * (g + g.transpose());
    eig::EigenRequest req;
    req.op = eig::matrix_operator(a);
    req.dim = d;
    req.k = std::min(d, ek(rng));
    req.tol = 1e-10;
    req.max_iter = 5000;
    req.seed = static_cast<std::uint64_t>(s);
    const auto res = eig::eigs_smallest(req);
    eig_converged = eig_converged && res.converged;
    const Eigen::SelfAdjointEigenSolver<Matrix> es(a);
    eig_worst = std::max(eig_worst, (res.values - es.eigenvalues().head(req.k)).cwiseAbs().maxCoeff());
  }
  const auto mb = make_analytic("mb");
  const Vector x = vec({0.0, 1.0}), e1 = vec({1.0, 0.0});
  const Vector exact = mb->hvp(x, e1);
  double rmin = INFINITY, rmax = 0.0;
  for (double l : {1e-2, 1e-3}) {
    const double r = (hvp_dimer(*mb, x, e1, {l}) - exact).norm() / (hvp_dimer(*mb, x, e1, {l / 2}) - exact).norm();
    rmin = std::min(rmin, r);
    rmax = std::max(rmax, r);
  }
  const bool ok = ad_worst <= 1e-6 && hvp_worst <= 1e-5 && eig_converged && eig_worst <= 1e-8 && rmin >= 3.5 &&
                  rmax <= 4.5;
  return {ok, "ad_vs_fd=" + fmt("%.2e", ad_worst) + " nested_vs_dimer=" + fmt("%.2e", hvp_worst) +
                  " eig_vs_dense=" + fmt("%.2e", eig_worst) + " dimer_ratio=[" + fmt("%.3f", rmin) + "," +
                  fmt("%.3f", rmax) + "]"};
}

// ---------------------------------------------------------------------------
// 10: acceleration benefit

struct AccelOutcome {
  bool pass;
  std::string detail;
};

AccelOutcome accel_compare(const EnergyOracle& o, const Vector& x0, HisdConfig base, double gamma, int restart,
                           std::optional<Vector> x_star, const std::string& csv) {
  const auto rep = bench::compare_schemes(o, x0, bench::standard_variants(base, gamma, restart), x_star);
  bench::write_curves_csv(csv, rep);
  std::map<std::string, int> it;
  std::string detail;
  for (const auto& r : rep.runs) {
    it[r.name] = bench::first_below(r.errors, 1e-6);
    detail += r.name + "=" + std::to_string(it[r.name]) + " ";
  }
  auto reached = [&](const std::string& n) { return it[n] >= 0; };
  const bool ok = rep.reference_converged && reached("plain") && reached("heavy_ball") && reached("nesterov") &&
                  it["heavy_ball"] < it["plain"] && it["nesterov"] < it["plain"];
  return {ok, detail + "gamma=" + fmt("%.4f", gamma)};
}

Outcome acceleration() {
  const fs::path dir = work_dir() / "accel";
  fs::create_directories(dir);

  // Quadratic diag(-1, 10) with beta = 1 / L. At 2 / (L + mu) the stiff mode contracts by -0.82 per step
  // and Nesterov extrapolation makes it grow.
  const auto quad = make_analytic("quadratic:-1,10");
  theory::TheoryCheck tq;
  tq.mu = 1.0;
  tq.L = 10.0;
  HisdConfig bq;
  bq.beta = 1.0 / tq.L;
  bq.hvp = HvpMode::exact;
  bq.tol = 1e-10;
  bq.max_iters = 20000;
  const auto q = accel_compare(*quad, vec({1.0, 1.0}), bq, theory::heavy_ball_tuning(tq).gamma, 10,
                               Vector::Zero(2), (dir / "quadratic.csv").string());

  // MB surrogate.
  auto g = cli::GenDataOptions{};
  g.potential = "mb";
  g.n = 10000;
  g.seed = 11;
  const auto data = cli::generate_dataset(g);
  surrogate::TrainConfig tc;
  tc.batch_size = 1000;
  tc.epochs = 2000;
  tc.seed = 11;
  auto model = std::make_shared<surrogate::MlpSurrogate>(std::vector<int>{2, 128, 128, 128, 1}, false,
                                                          derive_seed(tc.seed, streams::init));
  surrogate::train(*model, data, tc);
  const surrogate::SurrogateOracle mb(model);
  auto c = bench::accel_case("accel_mb");
  // Momentum from local constants sampled around the surrogate saddle.
  auto probe = run(mb, c.x0, c.base);
  const auto nr = theory::newton_stationary(mb, probe.x, 1e-12);
  const auto tm = theory::estimate_local_constants(mb, nr.x, 0.02, 100, 3);
  const auto m = accel_compare(mb, c.x0, c.base, theory::heavy_ball_tuning(tm).gamma, c.restart, std::nullopt,
                               (dir / "mb_surrogate.csv").string());
  return {q.pass && m.pass, "quadratic: " + q.detail + "; mb_surrogate: " + m.detail + " saddle=" + vec_str(nr.x)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all{
      {1, "toy2d analytic saddle", toy2d_analytic},
      {2, "mueller-brown analytic saddle", mb_analytic},
      {3, "modified rosenbrock index-3 saddle", rosenbrock_analytic},
      {4, "toy2d surrogate pipeline", toy2d_surrogate},
      {5, "noise robustness trend", noise_trend},
      {6, "toy3d parametric landscape", landscape_toy3d},
      {7, "convergence bound on random quadratics", convergence_bound},
      {8, "surrogate displacement bound", displacement},
      {9, "numerical kernel oracles", kernels},
      {10, "acceleration benefit", acceleration},
  };
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));
  int failed = 0;
  for (const auto& c : all) {
    if (!wanted.empty() && !wanted.count(c.id)) continue;
    Outcome o;
    try {
      o = c.check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failed;
    std::cout << (o.pass ? "PASS" : "FAIL") << " [" << c.id << "] " << c.name << ": " << o.detail << std::endl;
  }
  std::cout << (failed ? "acceptance: " + std::to_string(failed) + " criterion(s) failed" : "acceptance: all passed")
            << std::endl;
  return failed ? 1 : 0;
}

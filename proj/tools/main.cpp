#include <nnhisd/bench.hpp>
#include <nnhisd/cli.hpp>
#include <nnhisd/config.hpp>

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>
#include <vector>

using namespace nnhisd;

namespace {

template <class T>
void set_if(const std::optional<T>& flag, T& target) {
  if (flag) target = *flag;
}

Box parse_region(const std::string& s) {
  // "lo1,hi1;lo2,hi2;..."
  std::vector<double> lo;
  std::vector<double> hi;
  std::size_t pos = 0;
  while (pos <= s.size()) {
    const auto semi = s.find(';', pos);
    const Vector pair = config::parse_vector(s.substr(pos, semi == std::string::npos ? std::string::npos : semi - pos));
    if (pair.size() != 2) throw ArgumentError("region: each axis needs lo,hi");
    if (!(pair[0] < pair[1])) throw ArgumentError("region: need lo < hi on every axis");
    lo.push_back(pair[0]);
    hi.push_back(pair[1]);
    if (semi == std::string::npos) break;
    pos = semi + 1;
  }
  return {Eigen::Map<const Vector>(lo.data(), static_cast<Eigen::Index>(lo.size())),
          Eigen::Map<const Vector>(hi.data(), static_cast<Eigen::Index>(hi.size()))};
}

struct HisdFlags {
  std::optional<int> k, restart, max_iters, eig_max_iter, trajectory_stride;
  std::optional<double> beta, gamma, tol, dimer_length;
  std::optional<std::string> scheme, hvp, eig_method, nesterov_rule;
  std::optional<std::uint64_t> seed;

  void add(CLI::App* app) {
    app->add_option("--k", k, "Target saddle index");
    app->add_option("--beta", beta, "Step size");
    app->add_option("--scheme", scheme, "plain | heavy_ball | nesterov");
    app->add_option("--gamma", gamma, "Heavy-ball momentum");
    app->add_option("--nesterov-rule", nesterov_rule, "choice1 | choice2");
    app->add_option("--restart", restart, "Nesterov restart period (0 = never)");
    app->add_option("--tol", tol, "Force-norm tolerance");
    app->add_option("--max-iters", max_iters, "Iteration cap");
    app->add_option("--hvp", hvp, "dimer | exact");
    app->add_option("--dimer-length", dimer_length, "Dimer half-length l");
    app->add_option("--eig-method", eig_method, "lobpcg | sirqit");
    app->add_option("--eig-max-iter", eig_max_iter, "Eigensolver iterations per step");
    app->add_option("--trajectory-stride", trajectory_stride, "Record every n-th iterate");
    app->add_option("--seed", seed, "Seed");
  }

  void apply(HisdConfig& c) const {
    set_if(k, c.k);
    set_if(beta, c.beta);
    if (scheme) c.scheme = scheme_from_string(*scheme);
    set_if(gamma, c.gamma);
    if (nesterov_rule) c.nesterov_rule = nesterov_rule_from_string(*nesterov_rule);
    set_if(restart, c.restart);
    set_if(tol, c.tol);
    set_if(max_iters, c.max_iters);
    if (hvp) c.hvp = hvp_mode_from_string(*hvp);
    set_if(dimer_length, c.dimer.length);
    if (eig_method) c.eig_method = eig::method_from_string(*eig_method);
    set_if(eig_max_iter, c.eig_max_iter);
    set_if(trajectory_stride, c.trajectory_stride);
    set_if(seed, c.seed);
  }
};

int dispatch(int argc, char** argv) {
  CLI::App app{"Saddle search and solution landscapes on analytic or neural-network surrogate energies"};
  app.set_version_flag("--version", cli::version());
  app.require_subcommand(1);

  cli::RunManifest manifest;
  manifest.argv.assign(argv, argv + argc);
  std::string manifest_path;

  // gen-data
  cli::GenDataOptions gd;
  std::string gd_region, gd_sampling = "uniform_random", gd_alpha;
  auto* gen = app.add_subcommand("gen-data", "Sample an analytic potential into a dataset CSV");
  gen->add_option("--potential", gd.potential, "Analytic potential (toy2d, toy3d, mb, mmb, rosenbrock, ...)")->required();
  gen->add_option("--region", gd_region, "Box lo1,hi1;lo2,hi2;... (default: the potential's domain)");
  gen->add_option("--n", gd.n, "Points (per axis for grid sampling, per alpha value if parametric)")->required();
  gen->add_option("--sampling", gd_sampling, "uniform_random | grid");
  gen->add_option("--alpha", gd_alpha, "Parametric dataset over alpha: lo,hi,count");
  gen->add_option("--gradient-fraction", gd.gradient_fraction, "Fraction of rows with gradient labels");
  gen->add_option("--noise-ratio", gd.noise_ratio, "Fraction of energy labels to perturb");
  gen->add_option("--noise-sigma", gd.noise_sigma, "Standard deviation of the label noise");
  gen->add_option("--seed", gd.seed, "Seed");
  gen->add_option("--out", gd.out, "Output CSV")->required();

  // train
  cli::TrainOptions tr;
  std::string tr_config;
  std::optional<int> tr_epochs, tr_batch, tr_lr_step;
  std::optional<double> tr_lr, tr_gw, tr_wd, tr_decay;
  std::optional<std::uint64_t> tr_seed;
  std::optional<std::vector<int>> tr_hidden;
  auto* train = app.add_subcommand("train", "Train a tanh MLP surrogate on a dataset");
  train->add_option("--data", tr.data, "Dataset CSV")->required()->check(CLI::ExistingFile);
  train->add_option("--config", tr_config, "Training config JSON")->check(CLI::ExistingFile);
  train->add_option("--hidden", tr_hidden, "Hidden widths")->delimiter(',');
  train->add_option("--epochs", tr_epochs, "Epochs");
  train->add_option("--batch-size", tr_batch, "Mini-batch size");
  train->add_option("--lr", tr_lr, "Learning rate");
  train->add_option("--lr-step", tr_lr_step, "Epochs per learning-rate decay");
  train->add_option("--lr-decay", tr_decay, "Learning-rate decay factor");
  train->add_option("--grad-weight", tr_gw, "Weight of the gradient-label loss");
  train->add_option("--weight-decay", tr_wd, "L2 weight regularization");
  train->add_option("--seed", tr_seed, "Seed");
  train->add_option("--resume", tr.resume, "Continue training this checkpoint")->check(CLI::ExistingFile);
  train->add_option("--out", tr.out, "Output checkpoint")->required();
  train->add_option("--history", tr.history, "Loss-history CSV (default <out>.history.csv)");

  // search
  cli::SearchOptions se;
  std::string se_config, se_x0;
  std::optional<double> se_alpha;
  HisdFlags se_flags;
  auto* search = app.add_subcommand("search", "Run HiSD from an initial point");
  search->add_option("--oracle", se.oracle, "Analytic potential or checkpoint path")->required();
  search->add_option("--alpha", se_alpha, "Parameter value for parametric oracles");
  search->add_option("--x0", se_x0, "Initial point x1,x2,...")->required();
  search->add_option("--config", se_config, "HiSD config JSON")->check(CLI::ExistingFile);
  se_flags.add(search);
  search->add_option("--out", se.out, "Result JSON")->required();
  search->add_option("--trajectory", se.trajectory, "Trajectory CSV");

  // landscape
  cli::LandscapeOptions la;
  std::string la_policy, la_seed_point;
  std::optional<double> la_alpha;
  std::optional<std::string> la_mode;
  std::optional<int> la_max_index, la_seed_index, la_workers, la_frontier;
  std::optional<double> la_perturb, la_dedup;
  std::optional<bool> la_exhaustive;
  auto* land = app.add_subcommand("landscape", "Build the solution landscape from a seed point");
  land->add_option("--oracle", la.oracle, "Analytic potential or checkpoint path")->required();
  land->add_option("--alpha", la_alpha, "Parameter value for parametric oracles");
  land->add_option("--seed-point", la_seed_point, "Seed point x1,x2,...")->required();
  land->add_option("--policy", la_policy, "Search policy JSON")->check(CLI::ExistingFile);
  land->add_option("--mode", la_mode, "down | up | both");
  land->add_option("--max-index", la_max_index, "Highest index for upward searches");
  land->add_option("--seed-index", la_seed_index, "Index targeted from the seed point");
  land->add_option("--perturbation", la_perturb, "Perturbation size along eigenvectors");
  land->add_option("--dedup-tol", la_dedup, "Deduplication tolerance");
  land->add_option("--frontier-limit", la_frontier, "Maximum number of child searches");
  land->add_option("--exhaustive", la_exhaustive, "Perturb along every unstable direction in downward searches");
  land->add_option("--workers", la_workers, "Parallel searches");
  land->add_option("--out", la.out_prefix, "Output prefix (.json, .dot, .verify.json)")->required();

  // bench
  bench::BenchOptions be;
  auto* benchc = app.add_subcommand("bench", "Run a benchmark suite");
  benchc->add_option("--suite", be.suite, "accel_mb | accel_mmb | accel_rosenbrock | eigsol_compare | noise_table")
      ->required();
  benchc->add_option("--out", be.out_dir, "Output directory")->required();
  benchc->add_option("--seed", be.seed, "Seed");
  benchc->add_option("--workers", be.workers, "Parallel runs");
  benchc->add_option("--epochs", be.epochs, "Training epochs (noise_table)");
  benchc->add_option("--seeds", be.seeds, "Seeds per noise ratio (noise_table)");
  benchc->add_option("--oracle", be.oracle, "Override the suite's potential (analytic name or checkpoint)");
  std::optional<double> be_alpha;
  benchc->add_option("--alpha", be_alpha, "Parameter value for parametric oracles");

  // replay
  std::string replay_path;
  auto* replay = app.add_subcommand("replay", "Re-run the command recorded in a manifest");
  replay->add_option("manifest", replay_path, "Manifest JSON")->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  if (*replay) {
    const auto j = config::load_file(replay_path);
    auto args = j.at("argv").get<std::vector<std::string>>();
    if (args.size() >= 2 && args[1] == "replay") throw ArgumentError("replay: manifest records a replay");
    std::vector<char*> ptrs;
    for (auto& a : args) ptrs.push_back(a.data());
    return dispatch(static_cast<int>(ptrs.size()), ptrs.data());
  }

  if (*gen) {
    manifest.command = "gen-data";
    gd.sampling = surrogate::sampling_from_string(gd_sampling);
    if (!gd_region.empty()) gd.region = parse_region(gd_region);
    if (!gd_alpha.empty()) {
      const Vector a = config::parse_vector(gd_alpha);
      if (a.size() != 3) throw ArgumentError("--alpha expects lo,hi,count");
      gd.alpha_values = cli::linspace(a[0], a[1], static_cast<int>(a[2]));
    }
    cli::cmd_gen_data(gd, manifest);
    manifest_path = gd.out + ".manifest.json";
  } else if (*train) {
    manifest.command = "train";
    tr.job = tr_config.empty() ? config::TrainJob{} : config::train_from_json(config::load_file(tr_config));
    manifest.config_path = tr_config;
    set_if(tr_hidden, tr.job.hidden);
    set_if(tr_epochs, tr.job.train.epochs);
    set_if(tr_batch, tr.job.train.batch_size);
    set_if(tr_lr, tr.job.train.learning_rate);
    set_if(tr_lr_step, tr.job.train.lr_step);
    set_if(tr_decay, tr.job.train.lr_decay);
    set_if(tr_gw, tr.job.train.grad_weight);
    set_if(tr_wd, tr.job.train.weight_decay);
    set_if(tr_seed, tr.job.train.seed);
    cli::cmd_train(tr, manifest);
    manifest_path = tr.out + ".manifest.json";
  } else if (*search) {
    manifest.command = "search";
    se.hisd = se_config.empty() ? HisdConfig{} : config::hisd_from_json(config::load_file(se_config));
    manifest.config_path = se_config;
    se_flags.apply(se.hisd);
    se.alpha = se_alpha;
    se.x0 = config::parse_vector(se_x0);
    const auto r = cli::cmd_search(se, manifest);
    manifest_path = se.out + ".manifest.json";
    std::cout << (r.converged ? "converged" : "not converged") << " after " << r.iterations
              << " iterations, index " << r.index << "\n";
  } else if (*land) {
    manifest.command = "landscape";
    la.policy = la_policy.empty() ? landscape::SearchPolicy{} : config::policy_from_json(config::load_file(la_policy));
    manifest.config_path = la_policy;
    if (la_mode) la.policy.mode = landscape::search_mode_from_string(*la_mode);
    set_if(la_max_index, la.policy.max_index);
    set_if(la_seed_index, la.policy.seed_index);
    set_if(la_perturb, la.policy.perturbation);
    set_if(la_dedup, la.policy.dedup_tol);
    set_if(la_frontier, la.policy.frontier_limit);
    set_if(la_exhaustive, la.policy.exhaustive);
    set_if(la_workers, la.policy.workers);
    la.alpha = la_alpha;
    la.seed_point = config::parse_vector(la_seed_point);
    const auto g = cli::cmd_landscape(la, manifest);
    manifest_path = la.out_prefix + ".manifest.json";
    std::cout << g.nodes.size() << " critical points, " << g.edges.size() << " edges\n";
  } else if (*benchc) {
    manifest.command = "bench";
    be.alpha = be_alpha;
    bench::cmd_bench(be, manifest);
    manifest_path = be.out_dir + "/" + be.suite + ".manifest.json";
  }
  manifest.write(manifest_path);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return dispatch(argc, argv);
  } catch (const ArgumentError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

#pragma once

#include <nnhisd/config.hpp>
#include <nnhisd/landscape.hpp>
#include <nnhisd/surrogate/checkpoint.hpp>
#include <nnhisd/surrogate/dataset.hpp>
#include <nnhisd/surrogate/train.hpp>

#include <json.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

// Command implementations behind the nnhisd executable. Each command reads its inputs, writes its
// outputs and fills a RunManifest; argument parsing lives in tools/main.cpp.

#ifndef NNHISD_VERSION
#define NNHISD_VERSION "0.1.0"
#endif

namespace nnhisd::cli {

using nlohmann::json;

inline std::string version() { return NNHISD_VERSION; }

struct RunManifest {
  std::string command;
  std::vector<std::string> argv;
  std::string config_path;
  json config = json::object();
  std::uint64_t seed = 0;
  json inputs = json::object();
  json outputs = json::object();
  json timings = json::object();

  [[nodiscard]] json to_json() const {
    return {{"command", command},   {"argv", argv},     {"config_path", config_path}, {"config", config},
            {"seed", seed},         {"inputs", inputs}, {"outputs", outputs},         {"version", version()},
            {"timings", timings}};
  }

  void write(const std::string& path) const {
    std::ofstream os(path);
    if (!os) throw ArgumentError("cannot write manifest: " + path);
    os << to_json().dump(2) << '\n';
  }
};

class PhaseTimer {
 public:
  PhaseTimer(RunManifest& m, std::string phase)
      : m_(m), phase_(std::move(phase)), t0_(std::chrono::steady_clock::now()) {}
  ~PhaseTimer() {
    m_.timings[phase_] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
  }
  PhaseTimer(const PhaseTimer&) = delete;
  PhaseTimer& operator=(const PhaseTimer&) = delete;

 private:
  RunManifest& m_;
  std::string phase_;
  std::chrono::steady_clock::time_point t0_;
};

inline std::ofstream open_out(const std::string& path) {
  if (const auto parent = std::filesystem::path(path).parent_path(); !parent.empty())
    std::filesystem::create_directories(parent);
  std::ofstream os(path);
  if (!os) throw ArgumentError("cannot open for writing: " + path);
  return os;
}

inline void write_text(const std::string& path, const std::string& text) {
  auto os = open_out(path);
  os << text;
  if (!os) throw ArgumentError("failed writing " + path);
}

/// Analytic potential name, or the path of a surrogate checkpoint (parametric ones need alpha).
inline OraclePtr resolve_oracle(const std::string& spec, std::optional<double> alpha = std::nullopt) {
  if (std::filesystem::is_regular_file(spec)) {
    auto model = std::make_shared<const surrogate::MlpSurrogate>(surrogate::load_checkpoint(spec));
    if (model->parametric() && !alpha) throw ArgumentError("checkpoint " + spec + " is parametric: pass --alpha");
    return std::make_shared<surrogate::SurrogateOracle>(model, model->parametric() ? alpha : std::nullopt);
  }
  if (alpha) {
    const auto colon = spec.find(':');
    return make_analytic(spec.substr(0, colon) + ":" + surrogate::format_double(*alpha));
  }
  return make_analytic(spec);
}

// ---------------------------------------------------------------------------
// gen-data

struct GenDataOptions {
  std::string potential;
  std::optional<Box> region;
  int n = 0;
  surrogate::Sampling sampling = surrogate::Sampling::uniform_random;
  std::vector<double> alpha_values;  ///< non-empty -> parametric dataset, n points per value
  double gradient_fraction = 0.0;
  double noise_ratio = 0.0;
  double noise_sigma = 0.1;
  std::uint64_t seed = 0;
  std::string out;
};

inline std::vector<double> linspace(double lo, double hi, int count) {
  require(count >= 1, "linspace: count must be >= 1");
  std::vector<double> v;
  for (int i = 0; i < count; ++i) v.push_back(count == 1 ? lo : lo + (hi - lo) * i / (count - 1));
  return v;
}

inline surrogate::Dataset generate_dataset(const GenDataOptions& o) {
  if (o.n <= 0) throw ArgumentError("gen-data: n must be positive");
  auto block = [&](const EnergyOracle& oracle, std::uint64_t seed) {
    const Box box = o.region ? *o.region : oracle.domain();
    require(box.dim() == oracle.dim(), "gen-data: region dimension does not match the potential");
    return surrogate::label_dataset(oracle, surrogate::sample_points(box, o.n, o.sampling, seed), o.gradient_fraction,
                                    seed);
  };
  surrogate::Dataset ds;
  if (o.alpha_values.empty()) {
    ds = block(*resolve_oracle(o.potential), o.seed);
  } else {
    std::vector<surrogate::Dataset> parts;
    for (std::size_t i = 0; i < o.alpha_values.size(); ++i) {
      const double a = o.alpha_values[i];
      auto part = block(*resolve_oracle(o.potential, a), derive_seed(o.seed, 100 + i));
      part.alpha = Vector::Constant(part.size(), a);
      parts.push_back(std::move(part));
    }
    ds = surrogate::concat(parts);
  }
  if (o.noise_ratio > 0.0)
    ds = surrogate::add_gaussian_noise(ds, o.noise_ratio, o.noise_sigma, derive_seed(o.seed, streams::noise)).data;
  return ds;
}

inline void cmd_gen_data(const GenDataOptions& o, RunManifest& m) {
  surrogate::Dataset ds;
  {
    PhaseTimer t(m, "generate");
    ds = generate_dataset(o);
  }
  {
    PhaseTimer t(m, "write");
    auto os = open_out(o.out);
    surrogate::write_dataset_csv(os, ds);
  }
  m.seed = o.seed;
  m.config = {{"potential", o.potential}, {"n", o.n},
              {"sampling", o.sampling == surrogate::Sampling::grid ? "grid" : "uniform_random"},
              {"alpha_values", o.alpha_values}, {"gradient_fraction", o.gradient_fraction},
              {"noise_ratio", o.noise_ratio}, {"noise_sigma", o.noise_sigma}};
  if (o.region) m.config["region"] = {{"lower", config::to_std(o.region->lower)}, {"upper", config::to_std(o.region->upper)}};
  m.outputs["dataset"] = o.out;
  m.outputs["rows"] = ds.size();
}

// ---------------------------------------------------------------------------
// train

struct TrainOptions {
  std::string data;
  config::TrainJob job;
  std::string resume;  ///< checkpoint to continue from
  std::string out;
  std::string history;  ///< loss-history CSV; defaults to <out>.history.csv
};

inline std::string history_path(const TrainOptions& o) { return o.history.empty() ? o.out + ".history.csv" : o.history; }

inline void cmd_train(const TrainOptions& o, RunManifest& m) {
  surrogate::Dataset ds;
  {
    PhaseTimer t(m, "read");
    std::ifstream is(o.data);
    if (!is) throw ArgumentError("cannot open dataset: " + o.data);
    ds = surrogate::read_dataset_csv(is);
  }
  surrogate::TrainConfig cfg = o.job.train;
  surrogate::MlpSurrogate model;
  if (!o.resume.empty()) {
    model = surrogate::load_checkpoint(o.resume);
    cfg.warm_start = true;
  } else {
    std::vector<int> widths{ds.input_dim()};
    widths.insert(widths.end(), o.job.hidden.begin(), o.job.hidden.end());
    widths.push_back(1);
    model = surrogate::MlpSurrogate(widths, ds.parametric(), derive_seed(cfg.seed, streams::init));
  }
  surrogate::TrainResult res;
  {
    PhaseTimer t(m, "train");
    res = surrogate::train(model, ds, cfg);
  }
  {
    PhaseTimer t(m, "write");
    surrogate::save_checkpoint(model, o.out);
    const std::string hp = history_path(o);
    if (const auto parent = std::filesystem::path(hp).parent_path(); !parent.empty())
      std::filesystem::create_directories(parent);
    // Resuming into a new checkpoint carries the earlier history along.
    const std::string previous = o.resume + ".history.csv";
    if (!o.resume.empty() && o.history.empty() && !std::filesystem::exists(hp) && std::filesystem::exists(previous))
      std::filesystem::copy_file(previous, hp);
    const bool append = !o.resume.empty() && std::filesystem::exists(hp);
    std::ofstream os(hp, append ? std::ios::app : std::ios::trunc);
    if (!os) throw ArgumentError("cannot write loss history: " + hp);
    if (!append) os << "epoch,loss\n";
    for (std::size_t i = 0; i < res.loss_history.size(); ++i)
      os << (res.first_epoch + static_cast<int>(i)) << ',' << surrogate::format_double(res.loss_history[i]) << '\n';
  }
  m.seed = cfg.seed;
  m.config = config::to_json(o.job);
  m.config["warm_start"] = cfg.warm_start;
  m.inputs["dataset"] = o.data;
  if (!o.resume.empty()) m.inputs["resume"] = o.resume;
  m.outputs["checkpoint"] = o.out;
  m.outputs["history"] = history_path(o);
  m.outputs["final_loss"] = res.loss_history.empty() ? json(nullptr) : json(res.loss_history.back());
  m.outputs["train_mse"] = surrogate::evaluate_mse(model, ds);
}

// ---------------------------------------------------------------------------
// search

struct SearchOptions {
  std::string oracle;
  std::optional<double> alpha;
  Vector x0;
  HisdConfig hisd;
  std::string out;
  std::string trajectory;
};

inline json result_to_json(const SaddleResult& r) {
  return {{"x", config::to_std(r.x)},
          {"index", r.index},
          {"converged", r.converged},
          {"diverged", r.diverged},
          {"reason", r.reason},
          {"iters", r.iterations},
          {"energy", r.energy},
          {"force_norm", r.force_norm},
          {"eigenvalues", config::to_std(r.eigenvalues)},
          {"hvp_evals", r.hvp_evals}};
}

inline SaddleResult cmd_search(const SearchOptions& o, RunManifest& m) {
  const OraclePtr oracle = resolve_oracle(o.oracle, o.alpha);
  if (o.x0.size() != oracle->dim())
    throw ArgumentError("search: x0 has " + std::to_string(o.x0.size()) + " components, oracle dimension is " +
                        std::to_string(oracle->dim()));
  HisdConfig cfg = o.hisd;
  if (!o.trajectory.empty() && cfg.trajectory_stride == 0) cfg.trajectory_stride = 1;
  SaddleResult r;
  {
    PhaseTimer t(m, "search");
    r = run(*oracle, o.x0, cfg);
  }
  write_text(o.out, result_to_json(r).dump(2) + "\n");
  if (!o.trajectory.empty()) {
    auto os = open_out(o.trajectory);
    write_trajectory_csv(os, r);
    m.outputs["trajectory"] = o.trajectory;
  }
  m.seed = cfg.seed;
  m.config = config::to_json(cfg);
  m.inputs["oracle"] = o.oracle;
  if (o.alpha) m.inputs["alpha"] = *o.alpha;
  m.inputs["x0"] = config::to_std(o.x0);
  m.outputs["result"] = o.out;
  return r;
}

// ---------------------------------------------------------------------------
// landscape

struct LandscapeOptions {
  std::string oracle;
  std::optional<double> alpha;
  Vector seed_point;
  landscape::SearchPolicy policy;
  std::string out_prefix;
};

inline landscape::LandscapeGraph cmd_landscape(const LandscapeOptions& o, RunManifest& m) {
  const OraclePtr oracle = resolve_oracle(o.oracle, o.alpha);
  if (o.seed_point.size() != oracle->dim()) throw ArgumentError("landscape: seed point dimension mismatch");
  landscape::LandscapeGraph g;
  {
    PhaseTimer t(m, "build");
    g = landscape::build_landscape(*oracle, o.seed_point, o.policy);
  }
  write_text(o.out_prefix + ".json", landscape::export_graph(g, "json"));
  write_text(o.out_prefix + ".dot", landscape::export_graph(g, "dot"));
  json report = json::array();
  for (const auto& v : landscape::verify_nodes(g, *oracle, o.policy.hisd.tol))
    report.push_back({{"id", v.id}, {"force_norm", v.force_norm}, {"ok", v.ok}});
  write_text(o.out_prefix + ".verify.json", report.dump(2) + "\n");
  m.seed = o.policy.hisd.seed;
  m.config = config::to_json(o.policy);
  m.inputs["oracle"] = o.oracle;
  if (o.alpha) m.inputs["alpha"] = *o.alpha;
  m.inputs["seed_point"] = config::to_std(o.seed_point);
  m.outputs["graph_json"] = o.out_prefix + ".json";
  m.outputs["graph_dot"] = o.out_prefix + ".dot";
  m.outputs["verification"] = o.out_prefix + ".verify.json";
  m.outputs["nodes"] = g.nodes.size();
  return g;
}

}  // namespace nnhisd::cli

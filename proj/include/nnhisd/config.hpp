#pragma once

#include <nnhisd/hisd.hpp>
#include <nnhisd/landscape.hpp>
#include <nnhisd/surrogate/train.hpp>

#include <json.hpp>

#include <fstream>
#include <set>
#include <string>
#include <vector>

// JSON configuration for the CLI. Readers are strict: an unknown key is an error, and a value of
// the wrong type names the offending key.

namespace nnhisd::config {

using nlohmann::json;

class StrictReader {
 public:
  StrictReader(const json& j, std::string context) : j_(j), context_(std::move(context)) {
    if (!j_.is_object()) throw ArgumentError(context_ + ": expected a JSON object");
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ArgumentError(context_ + "." + key + ": " + e.what());
    }
  }

  /// Enum-like string fields.
  template <class T, class Parse>
  void get_enum(const char* key, T& out, Parse parse) {
    std::string s;
    seen_.insert(key);
    if (!j_.contains(key)) return;
    get(key, s);
    out = parse(s);
  }

  [[nodiscard]] const json* sub(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.count(k)) throw ArgumentError(context_ + ": unknown key '" + k + "'");
    }
  }

 private:
  const json& j_;
  std::string context_;
  std::set<std::string> seen_;
};

inline json load_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ArgumentError("cannot open config file: " + path);
  try {
    return json::parse(is);
  } catch (const json::exception& e) {
    throw ArgumentError(path + ": " + e.what());
  }
}

inline Matrix directions_from_json(const json& j) {
  // list of k direction vectors, each of length d
  const auto cols = j.get<std::vector<std::vector<double>>>();
  if (cols.empty()) return {};
  Matrix m(static_cast<Eigen::Index>(cols[0].size()), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t c = 0; c < cols.size(); ++c) {
    require(cols[c].size() == cols[0].size(), "initial_directions: ragged vectors");
    for (std::size_t r = 0; r < cols[c].size(); ++r) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = cols[c][r];
  }
  return m;
}

inline HisdConfig hisd_from_json(const json& j, HisdConfig c = {}) {
  StrictReader r(j, "hisd");
  r.get("k", c.k);
  r.get("beta", c.beta);
  r.get_enum("scheme", c.scheme, scheme_from_string);
  r.get("gamma", c.gamma);
  r.get_enum("nesterov_rule", c.nesterov_rule, nesterov_rule_from_string);
  r.get("restart", c.restart);
  r.get("dimer_length", c.dimer.length);
  r.get_enum("hvp", c.hvp, hvp_mode_from_string);
  r.get_enum("eig_method", c.eig_method, eig::method_from_string);
  r.get("eig_tol", c.eig_tol);
  r.get("eig_max_iter", c.eig_max_iter);
  r.get("eig_max_iter_initial", c.eig_max_iter_initial);
  r.get("refresh_every", c.refresh_every);
  r.get("tol", c.tol);
  r.get("max_iters", c.max_iters);
  r.get("trajectory_stride", c.trajectory_stride);
  r.get("index_threshold", c.index_threshold);
  r.get("guard_factor", c.guard_factor);
  r.get("seed", c.seed);
  if (const json* d = r.sub("initial_directions")) {
    try {
      c.initial_directions = directions_from_json(*d);
    } catch (const json::exception& e) {
      throw ArgumentError(std::string("hisd.initial_directions: ") + e.what());
    }
  }
  r.finish();
  return c;
}

inline json to_json(const HisdConfig& c) {
  json j = {{"k", c.k},
            {"beta", c.beta},
            {"scheme", to_string(c.scheme)},
            {"gamma", c.gamma},
            {"nesterov_rule", c.nesterov_rule == NesterovRule::choice1 ? "choice1" : "choice2"},
            {"restart", c.restart},
            {"dimer_length", c.dimer.length},
            {"hvp", c.hvp == HvpMode::exact ? "exact" : "dimer"},
            {"eig_method", eig::to_string(c.eig_method)},
            {"eig_tol", c.eig_tol},
            {"eig_max_iter", c.eig_max_iter},
            {"eig_max_iter_initial", c.eig_max_iter_initial},
            {"refresh_every", c.refresh_every},
            {"tol", c.tol},
            {"max_iters", c.max_iters},
            {"trajectory_stride", c.trajectory_stride},
            {"index_threshold", c.index_threshold},
            {"guard_factor", c.guard_factor},
            {"seed", c.seed}};
  if (c.initial_directions.size() != 0) {
    std::vector<std::vector<double>> cols;
    for (Eigen::Index k = 0; k < c.initial_directions.cols(); ++k) {
      const Vector v = c.initial_directions.col(k);
      cols.emplace_back(v.data(), v.data() + v.size());
    }
    j["initial_directions"] = cols;
  }
  return j;
}

/// Training job: architecture plus optimizer settings.
struct TrainJob {
  std::vector<int> hidden{128, 128, 128};
  surrogate::TrainConfig train;
};

inline TrainJob train_from_json(const json& j, TrainJob t = {}) {
  StrictReader r(j, "train");
  r.get("hidden", t.hidden);
  r.get("learning_rate", t.train.learning_rate);
  r.get("batch_size", t.train.batch_size);
  r.get("epochs", t.train.epochs);
  r.get("lr_step", t.train.lr_step);
  r.get("lr_decay", t.train.lr_decay);
  r.get("grad_weight", t.train.grad_weight);
  r.get("weight_decay", t.train.weight_decay);
  r.get("seed", t.train.seed);
  r.finish();
  return t;
}

inline json to_json(const TrainJob& t) {
  return {{"hidden", t.hidden},
          {"learning_rate", t.train.learning_rate},
          {"batch_size", t.train.batch_size},
          {"epochs", t.train.epochs},
          {"lr_step", t.train.lr_step},
          {"lr_decay", t.train.lr_decay},
          {"grad_weight", t.train.grad_weight},
          {"weight_decay", t.train.weight_decay},
          {"seed", t.train.seed}};
}

inline landscape::SearchPolicy policy_from_json(const json& j, landscape::SearchPolicy p = {}) {
  StrictReader r(j, "policy");
  r.get("perturbation", p.perturbation);
  r.get("dedup_tol", p.dedup_tol);
  r.get("max_index", p.max_index);
  r.get("seed_index", p.seed_index);
  r.get_enum("mode", p.mode, landscape::search_mode_from_string);
  r.get("frontier_limit", p.frontier_limit);
  r.get("exhaustive", p.exhaustive);
  r.get("workers", p.workers);
  if (const json* h = r.sub("hisd")) p.hisd = hisd_from_json(*h, p.hisd);
  r.finish();
  return p;
}

inline json to_json(const landscape::SearchPolicy& p) {
  return {{"perturbation", p.perturbation},
          {"dedup_tol", p.dedup_tol},
          {"max_index", p.max_index},
          {"seed_index", p.seed_index},
          {"mode", landscape::to_string(p.mode)},
          {"frontier_limit", p.frontier_limit},
          {"exhaustive", p.exhaustive},
          {"workers", p.workers},
          {"hisd", to_json(p.hisd)}};
}

/// "a,b,c" -> vector.
inline Vector parse_vector(const std::string& s) {
  std::vector<double> v;
  std::size_t pos = 0;
  while (pos <= s.size()) {
    const auto comma = s.find(',', pos);
    const std::string item = s.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
    try {
      std::size_t used = 0;
      v.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ArgumentError("bad number '" + item + "' in '" + s + "'");
    }
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace nnhisd::config

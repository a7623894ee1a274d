#pragma once

#include <nnhisd/hisd.hpp>
#include <nnhisd/parallel.hpp>

#include <json.hpp>

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

/**
 * @file landscape.hpp
 * @brief Solution landscape construction: critical points linked by downward and upward HiSD searches.
 *
 * From a parent of index m, a downward search towards index k < m starts at x +- eps v_{k+1} with
 * initial directions v_1..v_k; an upward search towards index k > m starts at x +- eps v_k with
 * v_1..v_k. Searches are organised in breadth-first waves. Runs within a wave are independent and
 * may execute in parallel; their results are merged in task order, so the graph does not depend on
 * scheduling.
 *
 * Every edge points from the higher-index point to the lower-index one and is tagged with the search
 * direction that produced it.
 */

namespace nnhisd::landscape {

enum class SearchMode { down, up, both };

inline SearchMode search_mode_from_string(const std::string& s) {
  if (s == "down") return SearchMode::down;
  if (s == "up") return SearchMode::up;
  if (s == "both") return SearchMode::both;
  throw ArgumentError("unknown landscape mode '" + s + "'");
}

inline const char* to_string(SearchMode m) {
  switch (m) {
    case SearchMode::down: return "down";
    case SearchMode::up: return "up";
    case SearchMode::both: return "both";
  }
  return "?";
}

struct Provenance {
  int parent = -1;  ///< -1 for the seed
  std::string direction = "seed";  ///< seed | down | up
  int eigvec = 0;  ///< 1-based index of the perturbation eigenvector
  int sign = 0;
};

struct CriticalPoint {
  int id = -1;
  Vector x;
  int index = 0;
  double energy = 0.0;
  double force_norm = 0.0;
  Vector eigenvalues;   ///< smallest first
  Matrix eigenvectors;  ///< d x eigenvalues.size()
  Provenance provenance;
};

struct Edge {
  int from = -1;  ///< higher index
  int to = -1;    ///< lower index
  std::string direction;  ///< down | up
  int eigvec = 0;
  int sign = 0;
};

struct LandscapeGraph {
  std::vector<CriticalPoint> nodes;
  std::vector<Edge> edges;
  int searches = 0;
  int misses = 0;  ///< searches that did not converge

  [[nodiscard]] std::map<int, int> index_counts() const {
    std::map<int, int> c;
    for (const auto& n : nodes) ++c[n.index];
    return c;
  }
};

struct SearchPolicy {
  double perturbation = 0.1;
  double dedup_tol = 1e-2;   ///< infinity norm in normalized coordinates
  int max_index = 2;         ///< K for upward searches
  int seed_index = 0;        ///< index targeted by the preliminary run from the seed point
  SearchMode mode = SearchMode::both;
  int frontier_limit = 200;  ///< maximum number of child searches
  bool exhaustive = false;   ///< downward: perturb along every v_i, i > k, that is unstable at the parent
  int workers = 1;
  HisdConfig hisd = default_hisd();

  static HisdConfig default_hisd() {
    HisdConfig c;
    c.beta = 0.05;
    c.scheme = Scheme::nesterov;
    c.restart = 20;
    c.hvp = HvpMode::exact;
    c.max_iters = 5000;
    return c;
  }

  void validate() const {
    require(perturbation > 0.0, "SearchPolicy: perturbation must be positive");
    require(dedup_tol > 0.0, "SearchPolicy: dedup tolerance must be positive");
    require(max_index >= 0 && seed_index >= 0, "SearchPolicy: indices must be >= 0");
    require(frontier_limit >= 0, "SearchPolicy: frontier limit must be >= 0");
    require(workers >= 1, "SearchPolicy: workers must be >= 1");
  }
};

namespace detail {

/// Smallest `count` eigenpairs at x, with a deterministic sign (largest component positive).
inline std::pair<Vector, Matrix> local_spectrum(const EnergyOracle& oracle, const Vector& x, int count,
                                                const HisdConfig& cfg) {
  const int d = oracle.dim();
  count = std::clamp(count, 1, d);
  Vector vals;
  Matrix vecs;
  if (d <= 32) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(dense_hessian(oracle, x, cfg.hvp, cfg.dimer));
    if (es.info() != Eigen::Success) throw NumericError("landscape: dense eigensolver failed");
    vals = es.eigenvalues().head(count);
    vecs = es.eigenvectors().leftCols(count);
  } else {
    eig::EigenRequest req;
    req.op = [&](const Vector& u) { return hessian_action(oracle, x, u, cfg.hvp, cfg.dimer); };
    req.dim = d;
    req.k = count;
    req.tol = 1e-8 * std::max(1.0, req.op(Vector::Unit(d, 0)).norm());
    req.max_iter = 1000;
    req.seed = cfg.seed;
    const auto res = eig::eigs_smallest(req);
    vals = res.values;
    vecs = res.vectors;
  }
  for (Eigen::Index j = 0; j < vecs.cols(); ++j) {
    Eigen::Index imax = 0;
    vecs.col(j).cwiseAbs().maxCoeff(&imax);
    if (vecs(imax, j) < 0.0) vecs.col(j) *= -1.0;
  }
  return {vals, vecs};
}

struct Task {
  int parent = -1;
  int target = 0;
  int eigvec = 0;
  int sign = 0;
  bool upward = false;
};

inline Vector normalized(const EnergyOracle& oracle, const Vector& x) {
  return (x.array() / oracle.coordinate_scale().array()).matrix();
}

}  // namespace detail

/// Builds a node from a converged HiSD result, computing enough eigenpairs for later searches.
inline CriticalPoint make_point(const EnergyOracle& oracle, const SaddleResult& r, const SearchPolicy& policy,
                                Provenance prov) {
  CriticalPoint p;
  p.x = r.x;
  p.index = r.index;
  p.energy = r.energy;
  p.force_norm = r.force_norm;
  const int count = std::max(p.index, policy.max_index) + 1;
  std::tie(p.eigenvalues, p.eigenvectors) = detail::local_spectrum(oracle, p.x, count, policy.hisd);
  p.provenance = std::move(prov);
  return p;
}

/// Merge into an existing node of the same index within dedup_tol (infinity norm, normalized
/// coordinates) or insert. Returns {node id, inserted}.
inline std::pair<int, bool> dedup_insert(LandscapeGraph& g, const EnergyOracle& oracle, CriticalPoint candidate,
                                         const SearchPolicy& policy) {
  const Vector zc = detail::normalized(oracle, candidate.x);
  int best = -1;
  double best_dist = 0.0;
  for (const auto& n : g.nodes) {
    if (n.index != candidate.index) continue;
    const double dist = (detail::normalized(oracle, n.x) - zc).cwiseAbs().maxCoeff();
    if (dist < policy.dedup_tol && (best < 0 || dist < best_dist)) {
      best = n.id;
      best_dist = dist;
    }
  }
  if (best >= 0) return {best, false};
  candidate.id = static_cast<int>(g.nodes.size());
  g.nodes.push_back(std::move(candidate));
  return {g.nodes.back().id, true};
}

namespace detail {

inline std::vector<Task> tasks_for(const CriticalPoint& p, const SearchPolicy& policy, int dim, bool down, bool up) {
  std::vector<Task> out;
  if (down) {
    for (int k = 0; k < p.index; ++k) {
      const int last = policy.exhaustive ? p.index : k + 1;
      for (int i = k + 1; i <= last; ++i)
        for (int sign : {1, -1}) out.push_back({p.id, k, i, sign, false});
    }
  }
  if (up) {
    for (int k = p.index + 1; k <= std::min(policy.max_index, dim); ++k)
      for (int sign : {1, -1}) out.push_back({p.id, k, k, sign, true});
  }
  return out;
}

inline SaddleResult run_task(const EnergyOracle& oracle, const CriticalPoint& p, const Task& t,
                             const SearchPolicy& policy) {
  HisdConfig cfg = policy.hisd;
  cfg.k = t.target;
  const Vector scale = oracle.coordinate_scale();
  const Vector dir = p.eigenvectors.col(t.eigvec - 1);
  const Vector x0 = p.x + t.sign * policy.perturbation * (scale.array() * dir.array()).matrix();
  cfg.initial_directions = p.eigenvectors.leftCols(t.target);
  return run(oracle, x0, cfg);
}

}  // namespace detail

/// One wave of searches from the given parents; returns the ids of newly inserted nodes.
inline std::vector<int> search_wave(LandscapeGraph& g, const EnergyOracle& oracle, const std::vector<int>& parents,
                                    const SearchPolicy& policy, bool down, bool up) {
  std::vector<detail::Task> tasks;
  for (int id : parents) {
    auto t = detail::tasks_for(g.nodes[static_cast<std::size_t>(id)], policy, oracle.dim(), down, up);
    tasks.insert(tasks.end(), t.begin(), t.end());
  }
  const int budget = std::max(0, policy.frontier_limit - g.searches);
  if (static_cast<int>(tasks.size()) > budget) tasks.resize(static_cast<std::size_t>(budget));
  const auto results = parallel_map(tasks.size(), policy.workers, [&](std::size_t i) {
    return detail::run_task(oracle, g.nodes[static_cast<std::size_t>(tasks[i].parent)], tasks[i], policy);
  });
  g.searches += static_cast<int>(tasks.size());

  std::vector<int> fresh;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const auto& t = tasks[i];
    const auto& r = results[i];
    if (!r.converged) {
      ++g.misses;
      continue;
    }
    Provenance prov{t.parent, t.upward ? "up" : "down", t.eigvec, t.sign};
    auto [id, inserted] = dedup_insert(g, oracle, make_point(oracle, r, policy, prov), policy);
    if (inserted) fresh.push_back(id);
    const int pi = g.nodes[static_cast<std::size_t>(t.parent)].index;
    const int ci = g.nodes[static_cast<std::size_t>(id)].index;
    if (id == t.parent) continue;
    const bool consistent = t.upward ? ci > pi : ci < pi;
    if (!consistent) continue;
    Edge e{t.upward ? id : t.parent, t.upward ? t.parent : id, t.upward ? "up" : "down", t.eigvec, t.sign};
    const bool dup = std::any_of(g.edges.begin(), g.edges.end(), [&](const Edge& o) {
      return o.from == e.from && o.to == e.to && o.direction == e.direction;
    });
    if (!dup) g.edges.push_back(e);
  }
  return fresh;
}

/// Downward searches from one node (no recursion).
inline std::vector<int> downward_search(LandscapeGraph& g, const EnergyOracle& oracle, int parent,
                                        const SearchPolicy& policy) {
  return search_wave(g, oracle, {parent}, policy, true, false);
}

/// Upward searches from one node up to policy.max_index (no recursion).
inline std::vector<int> upward_search(LandscapeGraph& g, const EnergyOracle& oracle, int start,
                                      const SearchPolicy& policy) {
  return search_wave(g, oracle, {start}, policy, false, true);
}

/// Converges the seed point at policy.seed_index, then alternates the selected searches breadth-first
/// until no new nodes appear or the frontier limit is reached.
inline LandscapeGraph build_landscape(const EnergyOracle& oracle, const Vector& seed, const SearchPolicy& policy) {
  policy.validate();
  HisdConfig cfg = policy.hisd;
  cfg.k = policy.seed_index;
  const SaddleResult r = run(oracle, seed, cfg);
  if (!r.converged) {
    throw NumericError("build_landscape: seed run did not converge (" +
                       (r.reason.empty() ? std::string("unknown") : r.reason) + ")");
  }
  LandscapeGraph g;
  dedup_insert(g, oracle, make_point(oracle, r, policy, {}), policy);
  const bool down = policy.mode != SearchMode::up;
  const bool up = policy.mode != SearchMode::down;
  std::vector<int> frontier{0};
  while (!frontier.empty() && g.searches < policy.frontier_limit) {
    frontier = search_wave(g, oracle, frontier, policy, down, up);
  }
  return g;
}

/// Node ids whose stored point no longer satisfies ||F|| <= tol against the oracle.
struct VerificationEntry {
  int id;
  double force_norm;
  bool ok;
};

inline std::vector<VerificationEntry> verify_nodes(const LandscapeGraph& g, const EnergyOracle& oracle, double tol) {
  std::vector<VerificationEntry> out;
  for (const auto& n : g.nodes) {
    const double f = eval_force(oracle, n.x).norm();
    out.push_back({n.id, f, f <= tol});
  }
  return out;
}

/// "M" for index 2, "S" for index 1, "Z" for minima, "I<k>-" above; ordinal by discovery within index.
inline std::vector<std::string> node_labels(const LandscapeGraph& g) {
  std::map<int, int> seen;
  std::vector<std::string> out;
  for (const auto& n : g.nodes) {
    const int ord = ++seen[n.index];
    std::string prefix;
    switch (n.index) {
      case 0: prefix = "Z"; break;
      case 1: prefix = "S"; break;
      case 2: prefix = "M"; break;
      default: prefix = "I" + std::to_string(n.index) + "-"; break;
    }
    out.push_back(prefix + std::to_string(ord));
  }
  return out;
}

inline constexpr int graph_schema_version = 1;

inline nlohmann::json graph_to_json(const LandscapeGraph& g) {
  using nlohmann::json;
  const auto labels = node_labels(g);
  json nodes = json::array();
  for (const auto& n : g.nodes) {
    nodes.push_back({{"id", n.id},
                     {"label", labels[static_cast<std::size_t>(n.id)]},
                     {"x", std::vector<double>(n.x.data(), n.x.data() + n.x.size())},
                     {"index", n.index},
                     {"energy", n.energy},
                     {"force_norm", n.force_norm},
                     {"eigenvalues", std::vector<double>(n.eigenvalues.data(), n.eigenvalues.data() + n.eigenvalues.size())},
                     {"provenance",
                      {{"parent", n.provenance.parent},
                       {"direction", n.provenance.direction},
                       {"eigvec", n.provenance.eigvec},
                       {"sign", n.provenance.sign}}}});
  }
  json edges = json::array();
  for (const auto& e : g.edges)
    edges.push_back({{"from", e.from}, {"to", e.to}, {"direction", e.direction}, {"eigvec", e.eigvec}, {"sign", e.sign}});
  return {{"schema_version", graph_schema_version}, {"nodes", nodes}, {"edges", edges},
          {"searches", g.searches}, {"misses", g.misses}};
}

inline std::string graph_to_dot(const LandscapeGraph& g) {
  const auto labels = node_labels(g);
  std::ostringstream os;
  os.precision(6);
  os << "digraph landscape {\n  rankdir=TB;\n";
  std::map<int, std::vector<int>, std::greater<>> ranks;
  for (const auto& n : g.nodes) ranks[n.index].push_back(n.id);
  for (const auto& [index, ids] : ranks) {
    os << "  { rank=same;";
    for (int id : ids) os << " n" << id << ";";
    os << " }  // index " << index << "\n";
  }
  for (const auto& n : g.nodes) {
    os << "  n" << n.id << " [label=\"" << labels[static_cast<std::size_t>(n.id)] << "\", index=" << n.index
       << ", energy=" << n.energy << "];\n";
  }
  for (const auto& e : g.edges)
    os << "  n" << e.from << " -> n" << e.to << " [direction=" << e.direction << "];\n";
  os << "}\n";
  return os.str();
}

inline std::string export_graph(const LandscapeGraph& g, const std::string& format) {
  if (format == "json") return graph_to_json(g).dump(2) + "\n";
  if (format == "dot") return graph_to_dot(g);
  throw ArgumentError("unknown graph format '" + format + "'");
}

}  // namespace nnhisd::landscape

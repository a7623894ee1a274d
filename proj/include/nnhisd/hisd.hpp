#pragma once

#include <nnhisd/eigensolver.hpp>
#include <nnhisd/energy.hpp>

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

/**
 * @file hisd.hpp
 * @brief Discrete high-index saddle dynamics and its momentum-accelerated variants.
 *
 * One outer step moves x along the reflected force (I - 2 V V^T) F, where V holds the k
 * eigenvectors of the smallest Hessian eigenvalues, and then refreshes V at the new point with a
 * warm-started eigensolver:
 *
 *   plain       x+ = x + beta R(V) F(x)
 *   heavy ball  x+ = x + beta R(V) F(x) + gamma (x - x-)
 *   Nesterov    w  = x + gamma_n (x - x-),  x+ = w + beta R(V) F(w)
 *
 * The V used in the x-update is always the one computed at the previous iterate.
 */

namespace nnhisd {

enum class Scheme { plain, heavy_ball, nesterov };
enum class NesterovRule { choice1, choice2 };

inline const char* to_string(Scheme s) {
  switch (s) {
    case Scheme::plain: return "plain";
    case Scheme::heavy_ball: return "heavy_ball";
    case Scheme::nesterov: return "nesterov";
  }
  return "?";
}

inline Scheme scheme_from_string(const std::string& s) {
  if (s == "plain") return Scheme::plain;
  if (s == "heavy_ball") return Scheme::heavy_ball;
  if (s == "nesterov") return Scheme::nesterov;
  throw ArgumentError("unknown scheme '" + s + "'");
}

inline NesterovRule nesterov_rule_from_string(const std::string& s) {
  if (s == "choice1") return NesterovRule::choice1;
  if (s == "choice2") return NesterovRule::choice2;
  throw ArgumentError("unknown nesterov rule '" + s + "'");
}

inline HvpMode hvp_mode_from_string(const std::string& s) {
  if (s == "dimer") return HvpMode::dimer;
  if (s == "exact") return HvpMode::exact;
  throw ArgumentError("unknown hvp mode '" + s + "'");
}

struct HisdConfig {
  int k = 1;
  double beta = 0.05;
  Scheme scheme = Scheme::plain;
  double gamma = 0.8;  ///< heavy-ball momentum
  NesterovRule nesterov_rule = NesterovRule::choice1;
  int restart = 0;  ///< Nesterov fixed-restart period in steps; 0 = never
  DimerSpec dimer;
  HvpMode hvp = HvpMode::dimer;
  eig::Method eig_method = eig::Method::lobpcg;
  double eig_tol = 1e-8;  ///< residual tolerance relative to the spectral scale
  int eig_max_iter = 20;  ///< inner iterations per refresh
  int eig_max_iter_initial = 500;
  int refresh_every = 1;
  double tol = 1e-6;  ///< convergence: ||F(x)||_2 <= tol
  int max_iters = 10000;
  int trajectory_stride = 0;  ///< 0 disables trajectory recording
  double index_threshold = 1e-6;  ///< relative to the largest |eigenvalue|
  double guard_factor = 10.0;
  std::uint64_t seed = 0;
  Matrix initial_directions;  ///< d x k; empty -> seeded random block

  void validate(int dim) const {
    require(k >= 0 && k <= dim, "HisdConfig: need 0 <= k <= dim");
    require(beta > 0.0, "HisdConfig: beta must be positive");
    require(gamma >= 0.0 && gamma < 1.0, "HisdConfig: gamma must lie in [0, 1)");
    require(restart >= 0, "HisdConfig: restart period must be >= 0");
    require(dimer.length > 0.0, "HisdConfig: dimer length must be positive");
    require(refresh_every >= 1, "HisdConfig: refresh_every must be >= 1");
    require(max_iters >= 0, "HisdConfig: max_iters must be >= 0");
    require(tol > 0.0, "HisdConfig: tol must be positive");
    if (initial_directions.size() != 0)
      require(initial_directions.rows() == dim && initial_directions.cols() == k,
              "HisdConfig: initial directions must be dim x k");
  }
};

struct TrajectoryPoint {
  int iter;
  Vector x;
  double force_norm;
};

struct IndexInfo {
  int index = 0;
  Vector eigenvalues;   ///< ascending
  Matrix eigenvectors;  ///< matching columns
  double threshold = 0.0;
};

struct SaddleResult {
  bool converged = false;
  bool diverged = false;
  std::string reason;
  Vector x;
  double energy = 0.0;
  double force_norm = 0.0;
  int index = -1;  ///< Morse index, computed at the final point when converged
  Vector eigenvalues;
  Matrix eigenvectors;
  int iterations = 0;
  std::vector<double> force_norms;
  std::vector<TrajectoryPoint> trajectory;
  std::vector<int> eig_iterations;  ///< inner eigensolver iterations per refresh
  long hvp_evals = 0;
};

/// Mutable iteration state shared by the step functions.
struct HisdState {
  Vector x;
  Vector x_prev;
  Matrix v;  ///< d x k eigen block current for x
  Vector lambda;
  int step = 0;           ///< global step counter n
  int since_restart = 0;  ///< Nesterov counter reset by fixed restart
  double theta = 1.0;     ///< Nesterov choice-2 sequence
  std::optional<Vector> force;  ///< cached F(x)
  long hvp_evals = 0;
  int last_eig_iterations = 0;
};

/// (I - 2 V V^T) F without forming the d x d matrix.
inline Vector reflect_force(const Vector& f, const Matrix& v) {
  if (v.cols() == 0) {
    if (v.rows() != 0 && v.rows() != f.size()) throw ArgumentError("reflect_force: shape mismatch");
    return f;
  }
  if (v.rows() != f.size()) throw ArgumentError("reflect_force: shape mismatch");
  return f - 2.0 * v * (v.transpose() * f);
}

inline double nesterov_gamma_choice1(int n) { return static_cast<double>(n) / (n + 3.0); }
inline double nesterov_next_theta(double theta) { return 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * theta * theta)); }
/// gamma_n = (theta_n - 1) / theta_{n+1}.
inline double nesterov_gamma_choice2(double theta) { return (theta - 1.0) / nesterov_next_theta(theta); }

namespace detail {

inline eig::Operator hessian_operator(const EnergyOracle& oracle, const Vector& x, const HisdConfig& cfg,
                                      long& counter) {
  return [&oracle, x, mode = cfg.hvp, dimer = cfg.dimer, &counter](const Vector& u) {
    ++counter;
    return hessian_action(oracle, x, u, mode, dimer);
  };
}

inline double spectral_scale(const Vector& lambda) {
  return lambda.size() == 0 ? 1.0 : std::max(1.0, lambda.cwiseAbs().maxCoeff());
}

inline eig::EigenResult refresh(const EnergyOracle& oracle, const Vector& x, const Matrix& warm, double scale,
                                int max_iter, const HisdConfig& cfg, long& counter) {
  eig::EigenRequest req;
  req.op = hessian_operator(oracle, x, cfg, counter);
  req.dim = oracle.dim();
  req.k = static_cast<int>(warm.cols());
  req.initial = warm;
  req.tol = cfg.eig_tol * scale;
  req.max_iter = max_iter;
  req.method = cfg.eig_method;
  req.seed = derive_seed(cfg.seed, streams::eigen_init);
  return eig::eigs_smallest(req);
}

inline Vector force_at(const EnergyOracle& oracle, HisdState& s) {
  if (!s.force) s.force = eval_force(oracle, s.x);
  return *s.force;
}

/// Accept x_next and refresh the eigen block there (warm start from the current block).
inline void advance(HisdState& s, const EnergyOracle& oracle, const HisdConfig& cfg, Vector x_next) {
  s.x_prev = s.x;
  s.x = std::move(x_next);
  s.force.reset();
  ++s.step;
  if (s.v.cols() > 0 && s.step % cfg.refresh_every == 0 && s.x.allFinite()) {
    const auto res = refresh(oracle, s.x, s.v, spectral_scale(s.lambda), cfg.eig_max_iter, cfg, s.hvp_evals);
    s.v = res.vectors;
    s.lambda = res.values;
    s.last_eig_iterations = res.iterations;
  } else {
    s.last_eig_iterations = 0;
  }
}

}  // namespace detail

/// Initial state at x0: the configured (or random) directions refined by a cold eigensolve at x0.
inline HisdState init_state(const EnergyOracle& oracle, const Vector& x0, const HisdConfig& cfg) {
  require_dim(x0, oracle.dim(), "hisd");
  if (!x0.allFinite()) throw ArgumentError("hisd: x0 must be finite");
  cfg.validate(oracle.dim());
  HisdState s;
  s.x = x0;
  s.x_prev = x0;
  if (cfg.k > 0) {
    Matrix warm = cfg.initial_directions.size() != 0
                      ? cfg.initial_directions
                      : eig::detail::random_block(oracle.dim(), cfg.k, derive_seed(cfg.seed, streams::eigen_init));
    warm = eig::orthonormalize(warm);
    const double scale =
        std::max(1.0, hessian_action(oracle, x0, warm.col(0), cfg.hvp, cfg.dimer).norm());
    ++s.hvp_evals;
    const auto res = detail::refresh(oracle, x0, warm, scale, cfg.eig_max_iter_initial, cfg, s.hvp_evals);
    s.v = res.vectors;
    s.lambda = res.values;
    s.last_eig_iterations = res.iterations;
  } else {
    s.v.resize(oracle.dim(), 0);
  }
  return s;
}

inline HisdState step_plain(HisdState s, const EnergyOracle& oracle, const HisdConfig& cfg) {
  const Vector f = detail::force_at(oracle, s);
  Vector next = s.x + cfg.beta * reflect_force(f, s.v);
  detail::advance(s, oracle, cfg, std::move(next));
  return s;
}

inline HisdState step_heavy_ball(HisdState s, const EnergyOracle& oracle, const HisdConfig& cfg) {
  const Vector f = detail::force_at(oracle, s);
  Vector next = s.x + cfg.beta * reflect_force(f, s.v) + cfg.gamma * (s.x - s.x_prev);
  detail::advance(s, oracle, cfg, std::move(next));
  return s;
}

inline HisdState step_nesterov(HisdState s, const EnergyOracle& oracle, const HisdConfig& cfg) {
  if (cfg.restart > 0 && s.step % cfg.restart == 0) {
    s.since_restart = 0;
    s.theta = 1.0;
    s.x_prev = s.x;
  }
  double g = 0.0;
  if (cfg.nesterov_rule == NesterovRule::choice1) {
    g = nesterov_gamma_choice1(s.since_restart);
  } else {
    g = nesterov_gamma_choice2(s.theta);
    s.theta = nesterov_next_theta(s.theta);
  }
  Vector next;
  if (g == 0.0) {
    next = s.x + cfg.beta * reflect_force(detail::force_at(oracle, s), s.v);
  } else {
    const Vector w = s.x + g * (s.x - s.x_prev);
    next = w + cfg.beta * reflect_force(eval_force(oracle, w), s.v);
  }
  ++s.since_restart;
  detail::advance(s, oracle, cfg, std::move(next));
  return s;
}

inline HisdState step(HisdState s, const EnergyOracle& oracle, const HisdConfig& cfg) {
  switch (cfg.scheme) {
    case Scheme::plain: return step_plain(std::move(s), oracle, cfg);
    case Scheme::heavy_ball: return step_heavy_ball(std::move(s), oracle, cfg);
    case Scheme::nesterov: return step_nesterov(std::move(s), oracle, cfg);
  }
  return s;
}

/**
 * Morse index at x: number of Hessian eigenvalues below -threshold * (largest |eigenvalue|).
 *
 * dim <= 32 uses a dense sweep of Hessian-vector products; above that a blocked eigensolver is
 * run with a growing block until a positive eigenvalue has been bracketed.
 */
inline IndexInfo classify_index(const EnergyOracle& oracle, const Vector& x, double rel_threshold = 1e-6,
                                HvpMode mode = HvpMode::exact, DimerSpec dimer = {}, std::uint64_t seed = 0) {
  require_dim(x, oracle.dim(), "classify_index");
  const int d = oracle.dim();
  IndexInfo info;
  if (d <= 32) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(dense_hessian(oracle, x, mode, dimer));
    if (es.info() != Eigen::Success) throw NumericError("classify_index: dense eigensolver failed");
    info.eigenvalues = es.eigenvalues();
    info.eigenvectors = es.eigenvectors();
  } else {
    long evals = 0;
    eig::Operator op = [&](const Vector& u) {
      ++evals;
      return hessian_action(oracle, x, u, mode, dimer);
    };
    int block = std::min(d, 4);
    for (;;) {
      eig::EigenRequest req;
      req.op = op;
      req.dim = d;
      req.k = block;
      req.tol = 1e-8 * std::max(1.0, op(Vector::Unit(d, 0)).norm());
      req.max_iter = 1000;
      req.seed = seed;
      auto res = eig::eigs_smallest(req);
      info.eigenvalues = res.values;
      info.eigenvectors = res.vectors;
      if (block == d || res.values[block - 1] > 0.0) break;
      block = std::min(d, 2 * block);
    }
  }
  const double scale = info.eigenvalues.size() ? info.eigenvalues.cwiseAbs().maxCoeff() : 0.0;
  info.threshold = rel_threshold * scale;
  info.index = static_cast<int>((info.eigenvalues.array() < -info.threshold).count());
  return info;
}

/// Iterate until ||F|| <= tol, divergence, or max_iters.
inline SaddleResult run(const EnergyOracle& oracle, const Vector& x0, const HisdConfig& cfg) {
  SaddleResult out;
  HisdState s = init_state(oracle, x0, cfg);
  const Box guard = oracle.domain().inflated(cfg.guard_factor);
  out.eig_iterations.push_back(s.last_eig_iterations);

  auto record = [&](int iter, double fn) {
    if (cfg.trajectory_stride > 0 && (iter % cfg.trajectory_stride == 0))
      out.trajectory.push_back({iter, s.x, fn});
  };

  int iter = 0;
  for (; iter < cfg.max_iters; ++iter) {
    const double fn = detail::force_at(oracle, s).norm();
    out.force_norms.push_back(fn);
    record(iter, fn);
    if (fn <= cfg.tol) {
      out.converged = true;
      break;
    }
    try {
      s = step(std::move(s), oracle, cfg);
    } catch (const NumericError& e) {
      out.diverged = true;
      out.reason = e.what();
      ++iter;
      break;
    }
    out.eig_iterations.push_back(s.last_eig_iterations);
    if (!s.x.allFinite() || !guard.contains(s.x)) {
      out.diverged = true;
      out.reason = "iterate left the guarded domain";
      ++iter;
      break;
    }
  }
  out.iterations = iter;
  out.x = s.x;
  out.hvp_evals = s.hvp_evals;
  if (!out.diverged && s.x.allFinite()) {
    out.force_norm = detail::force_at(oracle, s).norm();
    if (!out.converged && iter == cfg.max_iters && cfg.max_iters > 0 && out.force_norm <= cfg.tol) {
      out.converged = true;
    }
    out.energy = eval_energy(oracle, s.x);
    if (cfg.trajectory_stride > 0 && (out.trajectory.empty() || out.trajectory.back().iter != iter))
      out.trajectory.push_back({iter, s.x, out.force_norm});
  }
  if (out.converged) {
    const IndexInfo info = classify_index(oracle, s.x, cfg.index_threshold, cfg.hvp, cfg.dimer, cfg.seed);
    out.index = info.index;
    out.eigenvalues = info.eigenvalues;
    out.eigenvectors = info.eigenvectors;
  } else if (!out.diverged && out.reason.empty()) {
    out.reason = "max_iters reached";
  }
  return out;
}

/// CSV with columns iter,x_1..x_d,force_norm.
inline void write_trajectory_csv(std::ostream& os, const SaddleResult& r) {
  const auto d = r.x.size();
  os << "iter";
  for (Eigen::Index i = 0; i < d; ++i) os << ",x_" << (i + 1);
  os << ",force_norm\n";
  os.precision(17);
  for (const auto& p : r.trajectory) {
    os << p.iter;
    for (Eigen::Index i = 0; i < p.x.size(); ++i) os << ',' << p.x[i];
    os << ',' << p.force_norm << '\n';
  }
}

}  // namespace nnhisd

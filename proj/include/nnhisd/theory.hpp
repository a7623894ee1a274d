#pragma once

#include <nnhisd/hisd.hpp>

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

// Empirical checks of the local convergence theory for (surrogate-based) HiSD. These are test
// harness utilities: they run the iteration and compare against the closed-form rate bounds.

namespace nnhisd::theory {

/// Constants of the local analysis around an index-k saddle.
///   |lambda_i| in [mu, L] on the neighbourhood, M = Hessian Lipschitz constant, delta = radius,
///   eps = C^2 distance between surrogate and true energy (0 for the exact energy).
struct TheoryCheck {
  double mu = 0.0;
  double L = 0.0;
  double M = 0.0;
  double delta = std::numeric_limits<double>::infinity();
  double eps = 0.0;

  void validate() const {
    require(mu > 0.0 && mu <= L, "TheoryCheck: need 0 < mu <= L");
    require(M >= 0.0 && delta > 0.0 && eps >= 0.0, "TheoryCheck: M, delta, eps must be non-negative");
    require(eps < mu, "TheoryCheck: eps must be below mu");
  }

  [[nodiscard]] double kappa() const { return L / mu; }
  [[nodiscard]] double kappa_tilde() const { return (L + eps) / (mu - eps); }

  /// r-hat: 2 mu / M for the exact energy, mu / (2 M) for a surrogate (eps > 0). Infinite when M = 0.
  [[nodiscard]] double r_hat() const {
    if (M == 0.0) return std::numeric_limits<double>::infinity();
    return eps > 0.0 ? mu / (2.0 * M) : 2.0 * mu / M;
  }

  /// 1 - 2 / (kappa + 3), with kappa-tilde when eps > 0.
  [[nodiscard]] double rate_factor() const {
    const double k = eps > 0.0 ? kappa_tilde() : kappa();
    return 1.0 - 2.0 / (k + 3.0);
  }

  [[nodiscard]] double step_size() const { return 2.0 / (L + mu); }

  /// factor^n * r_hat r0 / (r_hat - r0); requires r0 < r_hat.
  [[nodiscard]] double bound(int n, double r0) const {
    const double rh = r_hat();
    const double amp = std::isinf(rh) ? r0 : rh * r0 / (rh - r0);
    return std::pow(rate_factor(), n) * amp;
  }
};

struct ConvergenceReport {
  int steps_checked = 0;
  int violations = 0;
  double worst_ratio = 0.0;  ///< max_n r_n / bound(n)
  double empirical_rate = 0.0;  ///< max_n r_{n+1} / r_n over the checked range
  double theoretical_factor = 0.0;
  bool admissible_start = false;  ///< r0 < min(delta, r_hat) (or the surrogate variant)
  std::vector<double> r;
  std::string detail;
};

/**
 * Run plain HiSD with beta = 2/(L+mu) from x0 and compare r_n = ||x_n - x*|| to the bound for
 * n = 0..steps. Checking stops once the bound drops below `floor`, by default the floating-point
 * resolution of x*; pass 0 to check every step.
 */
inline ConvergenceReport check_convergence_bound(const EnergyOracle& oracle, const Vector& x_star, const Vector& x0,
                                                 HisdConfig cfg, const TheoryCheck& theory, int steps,
                                                 std::optional<double> floor_override = std::nullopt) {
  theory.validate();
  cfg.scheme = Scheme::plain;
  cfg.beta = theory.step_size();
  ConvergenceReport rep;
  rep.theoretical_factor = theory.rate_factor();
  const double r0 = (x0 - x_star).norm();
  const double rh = theory.r_hat();
  rep.admissible_start = theory.eps > 0.0 ? r0 < std::min(2.0 * theory.delta / 3.0, rh) : r0 < std::min(theory.delta, rh);
  if (!rep.admissible_start) {
    rep.detail = "initial radius violates the neighbourhood condition";
    rep.violations = 1;
    return rep;
  }
  const double floor = floor_override.value_or(1e-12 * (1.0 + x_star.norm()));
  HisdState s = init_state(oracle, x0, cfg);
  double prev = r0;
  for (int n = 0; n <= steps; ++n) {
    const double rn = (s.x - x_star).norm();
    rep.r.push_back(rn);
    const double b = theory.bound(n, r0);
    if (b < floor) break;
    ++rep.steps_checked;
    rep.worst_ratio = std::max(rep.worst_ratio, rn / b);
    if (rn > b) {
      if (rep.violations == 0) rep.detail = "r_" + std::to_string(n) + " = " + std::to_string(rn) + " > bound " +
                                            std::to_string(b);
      ++rep.violations;
    }
    if (n > 0 && prev > floor) rep.empirical_rate = std::max(rep.empirical_rate, rn / prev);
    prev = rn;
    if (n < steps) s = step_plain(std::move(s), oracle, cfg);
  }
  return rep;
}

/// Accelerated heavy-ball tuning:
///   sqrt(beta) = 2 / (sqrt(L+eps) + sqrt(mu-eps)),  sqrt(gamma) = 1 - 3 / (2 (sqrt(kappa~) + 1)).
struct HeavyBallTuning {
  double beta;
  double gamma;
};

inline HeavyBallTuning heavy_ball_tuning(const TheoryCheck& t) {
  const double sb = 2.0 / (std::sqrt(t.L + t.eps) + std::sqrt(t.mu - t.eps));
  const double sg = 1.0 - 3.0 / (2.0 * (std::sqrt(t.kappa_tilde()) + 1.0));
  return {sb * sb, sg * sg};
}

/// E + eps/sqrt(d) * sum_i sin(x_i + phase_i): gradient, Hessian and Hessian-Lipschitz norms of
/// the perturbation are all bounded by eps.
inline std::shared_ptr<FunctionOracle> sinusoidal_perturbation(OraclePtr base, double eps, Vector phase) {
  const int d = base->dim();
  require(phase.size() == d, "sinusoidal_perturbation: phase length mismatch");
  const double c = eps / std::sqrt(static_cast<double>(d));
  auto energy = [base, c, phase](const Vector& x) {
    return base->energy(x) + c * (x + phase).array().sin().sum();
  };
  auto gradient = [base, c, phase](const Vector& x) -> Vector {
    return base->gradient(x) + c * (x + phase).array().cos().matrix();
  };
  FunctionOracle::HvpFn hvp;
  if (base->has_exact_hvp()) {
    hvp = [base, c, phase](const Vector& x, const Vector& v) -> Vector {
      return base->hvp(x, v) - c * ((x + phase).array().sin() * v.array()).matrix();
    };
  }
  return std::make_shared<FunctionOracle>(d, energy, gradient, base->domain(), base->name() + "+sin", hvp);
}

/// Newton iteration on grad E = 0 with the dense Hessian.
struct NewtonResult {
  Vector x;
  bool converged = false;
  int iterations = 0;
};

inline NewtonResult newton_stationary(const EnergyOracle& oracle, Vector x, double tol = 1e-13, int max_iter = 100) {
  NewtonResult out;
  for (int it = 0; it < max_iter; ++it) {
    const Vector g = oracle.gradient(x);
    if (g.norm() <= tol) {
      out.converged = true;
      out.iterations = it;
      break;
    }
    const Matrix h = dense_hessian(oracle, x, HvpMode::exact);
    x -= h.fullPivLu().solve(g);
    if (!x.allFinite()) break;
    out.iterations = it + 1;
  }
  if (!out.converged && x.allFinite() && oracle.gradient(x).norm() <= tol) out.converged = true;
  out.x = x;
  return out;
}

struct DisplacementEntry {
  double eps = 0.0;
  double displacement = 0.0;
  double bound = 0.0;  ///< 4 eps / mu
  bool assumptions_hold = false;
  bool newton_converged = false;
};

struct DisplacementReport {
  std::vector<DisplacementEntry> entries;
  int violations = 0;
};

/**
 * For each eps, build E + E_delta(eps), locate its stationary point near x* by Newton and compare the
 * displacement with 4 eps / mu. `hessian_lipschitz` and `delta` describe the unperturbed energy
 * and are used to check the smallness condition on eps.
 */
template <class Family>
DisplacementReport check_surrogate_displacement(const Vector& x_star, Family&& perturbed, double mu,
                                                const std::vector<double>& eps_values, double hessian_lipschitz,
                                                double delta) {
  DisplacementReport rep;
  for (double eps : eps_values) {
    DisplacementEntry e;
    e.eps = eps;
    e.bound = 4.0 * eps / mu;
    const double m = hessian_lipschitz;
    e.assumptions_hold =
        eps <= std::min({mu / 2.0, mu * mu / (32.0 * m), mu * delta / 12.0, m}) || eps == 0.0;
    OraclePtr oracle = perturbed(eps);
    const NewtonResult nr = newton_stationary(*oracle, x_star);
    e.newton_converged = nr.converged;
    e.displacement = (nr.x - x_star).norm();
    if (!nr.converged) throw NumericError("check_surrogate_displacement: Newton did not converge");
    if (e.displacement > e.bound) ++rep.violations;
    rep.entries.push_back(e);
  }
  return rep;
}

/// Sampled estimates of mu, L and M on the ball B(center, radius).
inline TheoryCheck estimate_local_constants(const EnergyOracle& oracle, const Vector& center, double radius,
                                            int samples, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> n01(0.0, 1.0);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const int d = oracle.dim();
  std::vector<Vector> pts{center};
  for (int i = 0; i < samples; ++i) {
    Vector dir(d);
    for (int j = 0; j < d; ++j) dir[j] = n01(rng);
    dir.normalize();
    pts.push_back(center + radius * std::pow(u01(rng), 1.0 / d) * dir);
  }
  std::vector<Matrix> hs;
  TheoryCheck t;
  t.mu = std::numeric_limits<double>::infinity();
  t.L = 0.0;
  for (const auto& p : pts) {
    hs.push_back(dense_hessian(oracle, p, HvpMode::exact));
    Eigen::SelfAdjointEigenSolver<Matrix> es(hs.back());
    const Vector a = es.eigenvalues().cwiseAbs();
    t.mu = std::min(t.mu, a.minCoeff());
    t.L = std::max(t.L, a.maxCoeff());
  }
  for (std::size_t i = 0; i < pts.size(); ++i) {
    for (std::size_t j = i + 1; j < pts.size(); ++j) {
      const double dist = (pts[i] - pts[j]).norm();
      if (dist < 1e-9) continue;
      Eigen::SelfAdjointEigenSolver<Matrix> es(hs[i] - hs[j]);
      t.M = std::max(t.M, es.eigenvalues().cwiseAbs().maxCoeff() / dist);
    }
  }
  t.delta = radius;
  return t;
}

}  // namespace nnhisd::theory

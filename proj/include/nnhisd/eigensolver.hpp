#pragma once

#include <nnhisd/core.hpp>

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <functional>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

/**
 * @file eigensolver.hpp
 * @brief Smallest eigenpairs of a symmetric operator known only through its action on vectors.
 *
 * Two methods are provided:
 *  - LOBPCG without preconditioner: Rayleigh-Ritz on span{X, R, P}.
 *  - SIRQIT: one vector at a time, Rayleigh-quotient steepest descent with exact line search
 *    (2x2 Rayleigh-Ritz on span{v, r}), deflated against the vectors already computed.
 *
 * Both accept a warm-start block, which is how the saddle dynamics reuse the previous step's
 * eigenvectors.
 */

namespace nnhisd::eig {

using Operator = std::function<Vector(const Vector&)>;

enum class Method { lobpcg, sirqit };

inline const char* to_string(Method m) { return m == Method::lobpcg ? "lobpcg" : "sirqit"; }

inline Method method_from_string(const std::string& s) {
  if (s == "lobpcg") return Method::lobpcg;
  if (s == "sirqit") return Method::sirqit;
  throw ArgumentError("unknown eigensolver '" + s + "'");
}

struct EigenRequest {
  Operator op;
  int dim = 0;
  int k = 1;
  Matrix initial;  ///< dim x k warm start; empty means a seeded random block
  double tol = 1e-8;
  int max_iter = 500;
  Method method = Method::lobpcg;
  std::uint64_t seed = 0;
};

struct EigenResult {
  Vector values;     ///< ascending
  Matrix vectors;    ///< dim x k, orthonormal columns
  Vector residuals;  ///< ||A v_i - lambda_i v_i||_2
  int iterations = 0;
  bool converged = false;
  long op_evals = 0;
};

/// Modified Gram-Schmidt with one re-orthogonalization pass.
/// Throws ArgumentError naming the first column that is (numerically) in the span of the previous ones.
inline Matrix orthonormalize(const Matrix& block) {
  Matrix q = block;
  for (Eigen::Index j = 0; j < q.cols(); ++j) {
    const double original = q.col(j).norm();
    for (int pass = 0; pass < 2; ++pass) {
      for (Eigen::Index i = 0; i < j; ++i) q.col(j) -= q.col(i).dot(q.col(j)) * q.col(i);
    }
    const double n = q.col(j).norm();
    if (!(original > 0.0) || n <= 1e-10 * original) {
      throw ArgumentError("orthonormalize: column " + std::to_string(j) + " is linearly dependent");
    }
    q.col(j) /= n;
  }
  return q;
}

inline double rayleigh_quotient(const Operator& op, const Vector& v) { return v.dot(op(v)); }

namespace detail {

struct CountingOp {
  const Operator& op;
  long evals = 0;
  Vector operator()(const Vector& v) {
    ++evals;
    Vector out = op(v);
    if (!out.allFinite()) throw NumericError("eigensolver: operator returned non-finite values");
    return out;
  }
  Matrix apply(const Matrix& m) {
    Matrix out(m.rows(), m.cols());
    for (Eigen::Index j = 0; j < m.cols(); ++j) out.col(j) = (*this)(m.col(j));
    return out;
  }
};

/// Orthonormalize the columns of `w` against the orthonormal `basis` and each other; columns that
/// vanish under projection are dropped instead of raising.
inline Matrix extend_basis(const Matrix& basis, const Matrix& w) {
  std::vector<Vector> kept;
  for (Eigen::Index j = 0; j < w.cols(); ++j) {
    Vector c = w.col(j);
    const double original = c.norm();
    if (!(original > 0.0)) continue;
    for (int pass = 0; pass < 2; ++pass) {
      if (basis.cols() > 0) c -= basis * (basis.transpose() * c);
      for (const auto& q : kept) c -= q.dot(c) * q;
    }
    const double n = c.norm();
    if (n <= 1e-10 * original || n < 1e-300) continue;
    kept.emplace_back(c / n);
  }
  Matrix out(w.rows(), static_cast<Eigen::Index>(kept.size()));
  for (std::size_t j = 0; j < kept.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = kept[j];
  return out;
}

inline Matrix random_block(int dim, int k, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix m(dim, k);
  for (int j = 0; j < k; ++j)
    for (int i = 0; i < dim; ++i) m(i, j) = n(rng);
  return m;
}

inline Matrix initial_block(const EigenRequest& req) {
  if (req.initial.size() == 0) return orthonormalize(random_block(req.dim, req.k, req.seed));
  if (req.initial.rows() != req.dim || req.initial.cols() != req.k)
    throw ArgumentError("eigs_smallest: initial block must be dim x k");
  return orthonormalize(req.initial);
}

inline Vector residual_norms(const Matrix& x, const Matrix& ax, const Vector& lambda) {
  Vector r(x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j) r[j] = (ax.col(j) - lambda[j] * x.col(j)).norm();
  return r;
}

inline EigenResult lobpcg(const EigenRequest& req) {
  CountingOp op{req.op};
  const int k = req.k;
  Matrix x = initial_block(req);
  Matrix ax = op.apply(x);

  Vector lambda;
  auto rayleigh_ritz = [&](const Matrix& s, const Matrix& as) {
    Matrix g = s.transpose() * as;
    g = 0.5 * (g + g.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Matrix> es(g);
    if (es.info() != Eigen::Success) throw NumericError("lobpcg: Rayleigh-Ritz failed");
    return std::pair<Vector, Matrix>{es.eigenvalues().head(k), es.eigenvectors().leftCols(k)};
  };

  {
    auto [vals, c] = rayleigh_ritz(x, ax);
    lambda = vals;
    x = x * c;
    ax = ax * c;
  }
  Vector res = residual_norms(x, ax, lambda);
  Matrix p(req.dim, 0);
  int it = 0;
  while (res.maxCoeff() > req.tol && it < req.max_iter) {
    ++it;
    Matrix w(req.dim, 0);
    {
      std::vector<Eigen::Index> active;
      for (Eigen::Index j = 0; j < k; ++j)
        if (res[j] > req.tol) active.push_back(j);
      w.resize(req.dim, static_cast<Eigen::Index>(active.size()) + p.cols());
      for (std::size_t a = 0; a < active.size(); ++a)
        w.col(static_cast<Eigen::Index>(a)) = ax.col(active[a]) - lambda[active[a]] * x.col(active[a]);
      if (p.cols() > 0) w.rightCols(p.cols()) = p;
    }
    const Matrix q = extend_basis(x, w);
    if (q.cols() == 0) break;
    const Matrix aq = op.apply(q);
    Matrix s(req.dim, k + q.cols());
    s << x, q;
    Matrix as(req.dim, k + q.cols());
    as << ax, aq;
    auto [vals, c] = rayleigh_ritz(s, as);
    lambda = vals;
    p = q * c.bottomRows(q.cols());
    x = s * c;
    // Drift control: keep X exactly orthonormal and recompute AX directly.
    x = orthonormalize(x);
    ax = op.apply(x);
    Matrix g = x.transpose() * ax;
    g = 0.5 * (g + g.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Matrix> es(g);
    lambda = es.eigenvalues();
    x = x * es.eigenvectors();
    ax = ax * es.eigenvectors();
    res = residual_norms(x, ax, lambda);
  }

  EigenResult out;
  out.values = lambda;
  out.vectors = x;
  out.residuals = res;
  out.iterations = it;
  out.converged = res.maxCoeff() <= req.tol;
  out.op_evals = op.evals;
  return out;
}

inline EigenResult sirqit(const EigenRequest& req) {
  CountingOp op{req.op};
  const int k = req.k;
  const Matrix start = initial_block(req);
  Matrix found(req.dim, 0);
  Vector lambda(k);
  Vector res(k);
  int max_it = 0;

  for (int i = 0; i < k; ++i) {
    Vector v = start.col(i);
    for (int pass = 0; pass < 2; ++pass)
      if (found.cols() > 0) v -= found * (found.transpose() * v);
    double nv = v.norm();
    if (nv <= 1e-10) {
      // Warm start collapsed onto earlier vectors: pick any direction in the complement.
      const Matrix e = extend_basis(found, Matrix::Identity(req.dim, req.dim));
      v = e.col(0);
      nv = 1.0;
    }
    v /= nv;
    Vector av = op(v);
    double rho = v.dot(av);
    int it = 0;
    auto deflated_residual = [&]() {
      Vector r = av - rho * v;
      for (int pass = 0; pass < 2; ++pass) {
        if (found.cols() > 0) r -= found * (found.transpose() * r);
        r -= v.dot(r) * v;
      }
      return r;
    };
    Vector r = deflated_residual();
    while ((av - rho * v).norm() > req.tol && it < req.max_iter) {
      const double nr = r.norm();
      if (nr < 1e-300) break;
      const Vector pdir = r / nr;
      const Vector ap = op(pdir);
      const double off = 0.5 * (v.dot(ap) + pdir.dot(av));
      Eigen::Matrix2d g;
      g << rho, off, off, pdir.dot(ap);
      Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(g);
      const Eigen::Vector2d c = es.eigenvectors().col(0);
      v = c[0] * v + c[1] * pdir;
      for (int pass = 0; pass < 2; ++pass)
        if (found.cols() > 0) v -= found * (found.transpose() * v);
      v.normalize();
      av = op(v);
      rho = v.dot(av);
      r = deflated_residual();
      ++it;
    }
    max_it = std::max(max_it, it);
    found.conservativeResize(Eigen::NoChange, found.cols() + 1);
    found.col(found.cols() - 1) = v;
    lambda[i] = rho;
    res[i] = (av - rho * v).norm();
  }

  std::vector<int> order(static_cast<std::size_t>(k));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return lambda[a] < lambda[b]; });
  EigenResult out;
  out.values.resize(k);
  out.vectors.resize(req.dim, k);
  out.residuals.resize(k);
  for (int j = 0; j < k; ++j) {
    out.values[j] = lambda[order[static_cast<std::size_t>(j)]];
    out.vectors.col(j) = found.col(order[static_cast<std::size_t>(j)]);
    out.residuals[j] = res[order[static_cast<std::size_t>(j)]];
  }
  out.iterations = max_it;
  out.converged = k == 0 || out.residuals.maxCoeff() <= req.tol;
  out.op_evals = op.evals;
  return out;
}

}  // namespace detail

/// k smallest eigenpairs. Returns best-effort pairs with converged = false after max_iter.
inline EigenResult eigs_smallest(const EigenRequest& req) {
  if (!req.op) throw ArgumentError("eigs_smallest: operator not set");
  if (req.dim < 1) throw ArgumentError("eigs_smallest: dim must be positive");
  if (req.k < 0 || req.k > req.dim) throw ArgumentError("eigs_smallest: need 0 <= k <= dim");
  if (req.k == 0) {
    EigenResult out;
    out.vectors.resize(req.dim, 0);
    out.converged = true;
    return out;
  }
  return req.method == Method::lobpcg ? detail::lobpcg(req) : detail::sirqit(req);
}

/// Operator backed by an explicit symmetric matrix.
inline Operator matrix_operator(const Matrix& a) {
  return [a](const Vector& v) -> Vector { return a * v; };
}

/// Principal-angle distance between the column spaces of two orthonormal blocks (max sin angle).
inline double subspace_distance(const Matrix& a, const Matrix& b) {
  const Matrix proj = a - b * (b.transpose() * a);
  Eigen::JacobiSVD<Matrix> svd(proj);
  return svd.singularValues().size() == 0 ? 0.0 : svd.singularValues()(0);
}

}  // namespace nnhisd::eig

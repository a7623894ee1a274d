#pragma once

#include <nnhisd/core.hpp>

#include <array>
#include <functional>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

/**
 * @file energy.hpp
 * @brief Energy oracles: the uniform E / F / Hv interface and the analytic benchmark potentials.
 *
 * Hessians are never formed by consumers. Everything downstream talks to an oracle through energy,
 * gradient and Hessian-vector products; the latter come either from a closed form (`hvp`) or from
 * the central-difference dimer formula on the force (`hvp_dimer`).
 */

namespace nnhisd {

class EnergyOracle {
 public:
  virtual ~EnergyOracle() = default;

  [[nodiscard]] virtual int dim() const = 0;
  [[nodiscard]] virtual double energy(const Vector& x) const = 0;
  [[nodiscard]] virtual Vector gradient(const Vector& x) const = 0;

  [[nodiscard]] virtual bool has_exact_hvp() const { return false; }
  /// Exact G(x) v. Only valid when has_exact_hvp().
  [[nodiscard]] virtual Vector hvp(const Vector& /*x*/, const Vector& /*v*/) const {
    throw ArgumentError(name() + ": no exact Hessian-vector product");
  }

  /// Region the oracle is meant for (sampling, divergence guard). Evaluation outside is allowed.
  [[nodiscard]] virtual Box domain() const = 0;

  /// Per-coordinate length scale of the working coordinates (1 for analytic potentials).
  [[nodiscard]] virtual Vector coordinate_scale() const { return Vector::Ones(dim()); }

  [[nodiscard]] virtual std::string name() const = 0;
};

using OraclePtr = std::shared_ptr<const EnergyOracle>;

/// Dimer half-length, in the same units as x.
struct DimerSpec {
  double length = 1e-4;
};

inline double eval_energy(const EnergyOracle& oracle, const Vector& x) {
  require_dim(x, oracle.dim(), "eval_energy");
  double e = oracle.energy(x);
  if (!std::isfinite(e)) throw NumericError(oracle.name() + ": non-finite energy");
  return e;
}

/// F(x) = -grad E(x).
inline Vector eval_force(const EnergyOracle& oracle, const Vector& x) {
  require_dim(x, oracle.dim(), "eval_force");
  Vector f = -oracle.gradient(x);
  if (!f.allFinite()) throw NumericError(oracle.name() + ": non-finite force");
  return f;
}

/// (F(x - l v) - F(x + l v)) / (2 l); second-order accurate approximation of G(x) v.
inline Vector hvp_dimer(const EnergyOracle& oracle, const Vector& x, const Vector& v, DimerSpec spec = {}) {
  if (!(spec.length > 0.0)) throw ArgumentError("hvp_dimer: dimer length must be positive");
  require_dim(x, oracle.dim(), "hvp_dimer");
  require_dim(v, oracle.dim(), "hvp_dimer");
  const double l = spec.length;
  return (eval_force(oracle, x - l * v) - eval_force(oracle, x + l * v)) / (2.0 * l);
}

/// Central-difference gradient; shared by finite-difference oracles and by tests.
inline Vector central_difference_gradient(const std::function<double(const Vector&)>& f, const Vector& x,
                                          double h) {
  Vector g(x.size());
  Vector xp = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double xi = x[i];
    xp[i] = xi + h;
    const double fp = f(xp);
    xp[i] = xi - h;
    const double fm = f(xp);
    xp[i] = xi;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

// ---------------------------------------------------------------------------
// Analytic potentials

/// E(x) = 1/2 x^T M x - alpha * sum_i arctan(x_i - center).
class ToyPotential final : public EnergyOracle {
 public:
  ToyPotential(Matrix m, double alpha, double center = 5.0, std::optional<Box> box = std::nullopt)
      : m_(std::move(m)), alpha_(alpha), center_(center) {
    require(m_.rows() == m_.cols() && m_.rows() >= 1, "ToyPotential: M must be square");
    require((m_ - m_.transpose()).cwiseAbs().maxCoeff() == 0.0, "ToyPotential: M must be symmetric");
    box_ = box ? *box : Box::cube(dim(), -1.0, 7.0);
  }

  /// The 2D case, alpha = 5.
  static ToyPotential toy2d() {
    Matrix m(2, 2);
    m << 0.8, -0.2, -0.2, 0.5;
    return {m, 5.0};
  }

  /// The 3D parametric case.
  static ToyPotential toy3d(double alpha) {
    Matrix m(3, 3);
    m << 0.8, -0.2, -0.5, -0.2, 0.5, 0.2, -0.5, 0.2, 1.0;
    return {m, alpha};
  }

  [[nodiscard]] int dim() const override { return static_cast<int>(m_.rows()); }
  [[nodiscard]] double alpha() const { return alpha_; }
  [[nodiscard]] const Matrix& matrix() const { return m_; }

  [[nodiscard]] double energy(const Vector& x) const override {
    return 0.5 * x.dot(m_ * x) - alpha_ * (x.array() - center_).atan().sum();
  }

  [[nodiscard]] Vector gradient(const Vector& x) const override {
    const Eigen::ArrayXd u = x.array() - center_;
    return m_ * x - (alpha_ / (1.0 + u.square())).matrix();
  }

  [[nodiscard]] bool has_exact_hvp() const override { return true; }
  [[nodiscard]] Vector hvp(const Vector& x, const Vector& v) const override {
    const Eigen::ArrayXd u = x.array() - center_;
    const Eigen::ArrayXd curv = alpha_ * 2.0 * u / (1.0 + u.square()).square();
    return m_ * v + (curv * v.array()).matrix();
  }

  [[nodiscard]] Box domain() const override { return box_; }
  [[nodiscard]] std::string name() const override {
    std::ostringstream os;
    os << "toy" << dim() << "d(alpha=" << alpha_ << ")";
    return os.str();
  }

 private:
  Matrix m_;
  double alpha_;
  double center_;
  Box box_;
};

/// Mueller-Brown potential, optionally with the extra sin(xy) Gaussian bump (modified MB).
class MuellerBrown final : public EnergyOracle {
 public:
  explicit MuellerBrown(bool modified = false) : modified_(modified) {}

  [[nodiscard]] int dim() const override { return 2; }
  [[nodiscard]] bool modified() const { return modified_; }

  [[nodiscard]] double energy(const Vector& p) const override {
    double e = 0.0;
    for (int i = 0; i < 4; ++i) {
      const double dx = p[0] - kXb[i];
      const double dy = p[1] - kYb[i];
      e += kA[i] * std::exp(kSa[i] * dx * dx + kSb[i] * dx * dy + kSc[i] * dy * dy);
    }
    if (modified_) {
      const double dx = p[0] - kX5;
      const double dy = p[1] - kY5;
      e += kA5 * std::sin(p[0] * p[1]) * std::exp(kA5a * dx * dx + kA5c * dy * dy);
    }
    return e;
  }

  [[nodiscard]] Vector gradient(const Vector& p) const override {
    Vector g = Vector::Zero(2);
    for (int i = 0; i < 4; ++i) {
      const double dx = p[0] - kXb[i];
      const double dy = p[1] - kYb[i];
      const double e = kA[i] * std::exp(kSa[i] * dx * dx + kSb[i] * dx * dy + kSc[i] * dy * dy);
      g[0] += e * (2.0 * kSa[i] * dx + kSb[i] * dy);
      g[1] += e * (kSb[i] * dx + 2.0 * kSc[i] * dy);
    }
    if (modified_) {
      const Bump b = bump(p);
      g[0] += b.ex * (p[1] * b.co + b.s * b.px);
      g[1] += b.ex * (p[0] * b.co + b.s * b.py);
    }
    return g;
  }

  [[nodiscard]] bool has_exact_hvp() const override { return true; }
  [[nodiscard]] Vector hvp(const Vector& p, const Vector& v) const override {
    double hxx = 0.0;
    double hxy = 0.0;
    double hyy = 0.0;
    for (int i = 0; i < 4; ++i) {
      const double dx = p[0] - kXb[i];
      const double dy = p[1] - kYb[i];
      const double e = kA[i] * std::exp(kSa[i] * dx * dx + kSb[i] * dx * dy + kSc[i] * dy * dy);
      const double qx = 2.0 * kSa[i] * dx + kSb[i] * dy;
      const double qy = kSb[i] * dx + 2.0 * kSc[i] * dy;
      hxx += e * (qx * qx + 2.0 * kSa[i]);
      hxy += e * (qx * qy + kSb[i]);
      hyy += e * (qy * qy + 2.0 * kSc[i]);
    }
    if (modified_) {
      const Bump b = bump(p);
      const double x = p[0];
      const double y = p[1];
      hxx += b.ex * (-y * y * b.s + 2.0 * y * b.co * b.px + b.s * (b.px * b.px + 2.0 * kA5a));
      hyy += b.ex * (-x * x * b.s + 2.0 * x * b.co * b.py + b.s * (b.py * b.py + 2.0 * kA5c));
      hxy += b.ex * (b.py * (y * b.co + b.s * b.px) + b.co - x * y * b.s + x * b.co * b.px);
    }
    Vector out(2);
    out << hxx * v[0] + hxy * v[1], hxy * v[0] + hyy * v[1];
    return out;
  }

  [[nodiscard]] Box domain() const override {
    Box b;
    b.lower = Vector(2);
    b.upper = Vector(2);
    if (modified_) {
      b.lower << -2.8, 0.0;
      b.upper << 0.89, 2.2;
    } else {
      b.lower << -1.5, 0.0;
      b.upper << 0.25, 1.95;
    }
    return b;
  }

  [[nodiscard]] std::string name() const override { return modified_ ? "mmb" : "mb"; }

 private:
  struct Bump {
    double s, co, ex, px, py;
  };
  [[nodiscard]] static Bump bump(const Vector& p) {
    const double dx = p[0] - kX5;
    const double dy = p[1] - kY5;
    return {std::sin(p[0] * p[1]), std::cos(p[0] * p[1]), kA5 * std::exp(kA5a * dx * dx + kA5c * dy * dy),
            2.0 * kA5a * dx, 2.0 * kA5c * dy};
  }

  static constexpr std::array<double, 4> kA{-200.0, -100.0, -170.0, 15.0};
  static constexpr std::array<double, 4> kSa{-1.0, -1.0, -6.5, 0.7};
  static constexpr std::array<double, 4> kSb{0.0, 0.0, 11.0, 0.6};
  static constexpr std::array<double, 4> kSc{-10.0, -10.0, -6.5, 0.7};
  static constexpr std::array<double, 4> kXb{1.0, 0.0, -0.5, -1.0};
  static constexpr std::array<double, 4> kYb{0.0, 0.5, 1.5, 1.0};
  static constexpr double kA5 = 500.0;
  static constexpr double kA5a = -0.1;
  static constexpr double kA5c = -0.1;
  static constexpr double kX5 = -0.5582;
  static constexpr double kY5 = 1.4417;

  bool modified_;
};

/// R(x) + sum_i s_i arctan^2(x_i - x*_i) with R the d-dimensional Rosenbrock function.
class RosenbrockModified final : public EnergyOracle {
 public:
  RosenbrockModified(Vector s, Vector anchor) : s_(std::move(s)), anchor_(std::move(anchor)) {
    require(s_.size() >= 2, "RosenbrockModified: d must be >= 2");
    require(anchor_.size() == s_.size(), "RosenbrockModified: anchor and s lengths differ");
  }
  explicit RosenbrockModified(Vector s) : RosenbrockModified(s, Vector::Ones(s.size())) {}

  /// d = 7, s = (-50000 x5, 1, 1), anchor (1, ..., 1).
  static RosenbrockModified standard() {
    Vector s(7);
    s << -50000.0, -50000.0, -50000.0, -50000.0, -50000.0, 1.0, 1.0;
    return RosenbrockModified(s);
  }

  [[nodiscard]] int dim() const override { return static_cast<int>(s_.size()); }
  [[nodiscard]] const Vector& anchor() const { return anchor_; }

  [[nodiscard]] double energy(const Vector& x) const override {
    double r = 0.0;
    for (int i = 0; i + 1 < dim(); ++i) {
      const double a = x[i + 1] - x[i] * x[i];
      const double b = 1.0 - x[i];
      r += 100.0 * a * a + b * b;
    }
    const Eigen::ArrayXd t = (x - anchor_).array().atan();
    return r + (s_.array() * t.square()).sum();
  }

  [[nodiscard]] Vector gradient(const Vector& x) const override {
    Vector g = Vector::Zero(dim());
    for (int i = 0; i + 1 < dim(); ++i) {
      const double a = x[i + 1] - x[i] * x[i];
      g[i] += -400.0 * x[i] * a - 2.0 * (1.0 - x[i]);
      g[i + 1] += 200.0 * a;
    }
    const Eigen::ArrayXd u = (x - anchor_).array();
    g.array() += s_.array() * 2.0 * u.atan() / (1.0 + u.square());
    return g;
  }

  [[nodiscard]] bool has_exact_hvp() const override { return true; }
  [[nodiscard]] Vector hvp(const Vector& x, const Vector& v) const override {
    Vector out = Vector::Zero(dim());
    for (int i = 0; i + 1 < dim(); ++i) {
      const double hii = 1200.0 * x[i] * x[i] - 400.0 * x[i + 1] + 2.0;
      const double hij = -400.0 * x[i];
      out[i] += hii * v[i] + hij * v[i + 1];
      out[i + 1] += hij * v[i] + 200.0 * v[i + 1];
    }
    const Eigen::ArrayXd u = (x - anchor_).array();
    const Eigen::ArrayXd curv = s_.array() * (2.0 - 4.0 * u * u.atan()) / (1.0 + u.square()).square();
    out.array() += curv * v.array();
    return out;
  }

  [[nodiscard]] Box domain() const override { return Box::cube(dim(), 0.8, 1.2); }
  [[nodiscard]] std::string name() const override { return "rosenbrock" + std::to_string(dim()); }

 private:
  Vector s_;
  Vector anchor_;
};

/// E(x) = 1/2 (x - c)^T A (x - c).
class QuadraticPotential final : public EnergyOracle {
 public:
  QuadraticPotential(Matrix a, Vector c, std::optional<Box> box = std::nullopt) : a_(std::move(a)), c_(std::move(c)) {
    require(a_.rows() == a_.cols() && a_.rows() == c_.size() && c_.size() >= 1, "QuadraticPotential: shape mismatch");
    a_ = 0.5 * (a_ + a_.transpose()).eval();
    box_ = box ? *box : Box{c_.array() - 10.0, c_.array() + 10.0};
  }

  static QuadraticPotential diagonal(const Vector& d) {
    return {Matrix(d.asDiagonal()), Vector::Zero(d.size())};
  }

  [[nodiscard]] int dim() const override { return static_cast<int>(c_.size()); }
  [[nodiscard]] const Matrix& matrix() const { return a_; }
  [[nodiscard]] const Vector& center() const { return c_; }

  [[nodiscard]] double energy(const Vector& x) const override {
    const Vector d = x - c_;
    return 0.5 * d.dot(a_ * d);
  }
  [[nodiscard]] Vector gradient(const Vector& x) const override { return a_ * (x - c_); }
  [[nodiscard]] bool has_exact_hvp() const override { return true; }
  [[nodiscard]] Vector hvp(const Vector& /*x*/, const Vector& v) const override { return a_ * v; }
  [[nodiscard]] Box domain() const override { return box_; }
  [[nodiscard]] std::string name() const override { return "quadratic" + std::to_string(dim()); }

 private:
  Matrix a_;
  Vector c_;
  Box box_;
};

/// 1D double well x^4 - x^2: minima at +-1/sqrt(2), index-1 saddle at 0.
class DoubleWell final : public EnergyOracle {
 public:
  [[nodiscard]] int dim() const override { return 1; }
  [[nodiscard]] double energy(const Vector& x) const override {
    const double t = x[0] * x[0];
    return t * t - t;
  }
  [[nodiscard]] Vector gradient(const Vector& x) const override {
    return Vector::Constant(1, 4.0 * x[0] * x[0] * x[0] - 2.0 * x[0]);
  }
  [[nodiscard]] bool has_exact_hvp() const override { return true; }
  [[nodiscard]] Vector hvp(const Vector& x, const Vector& v) const override {
    return Vector::Constant(1, (12.0 * x[0] * x[0] - 2.0) * v[0]);
  }
  [[nodiscard]] Box domain() const override { return Box::cube(1, -2.0, 2.0); }
  [[nodiscard]] std::string name() const override { return "doublewell"; }
};

/// Oracle built from callables. A missing gradient falls back to central differences.
class FunctionOracle final : public EnergyOracle {
 public:
  using EnergyFn = std::function<double(const Vector&)>;
  using GradientFn = std::function<Vector(const Vector&)>;
  using HvpFn = std::function<Vector(const Vector&, const Vector&)>;

  FunctionOracle(int dim, EnergyFn e, GradientFn g, Box box, std::string name, HvpFn h = {},
                 double fd_step = 1e-6)
      : dim_(dim), e_(std::move(e)), g_(std::move(g)), h_(std::move(h)), box_(std::move(box)),
        name_(std::move(name)), fd_step_(fd_step) {}

  [[nodiscard]] int dim() const override { return dim_; }
  [[nodiscard]] double energy(const Vector& x) const override { return e_(x); }
  [[nodiscard]] Vector gradient(const Vector& x) const override {
    return g_ ? g_(x) : central_difference_gradient(e_, x, fd_step_);
  }
  [[nodiscard]] bool has_exact_hvp() const override { return static_cast<bool>(h_); }
  [[nodiscard]] Vector hvp(const Vector& x, const Vector& v) const override {
    if (!h_) return EnergyOracle::hvp(x, v);
    return h_(x, v);
  }
  [[nodiscard]] Box domain() const override { return box_; }
  [[nodiscard]] std::string name() const override { return name_; }

 private:
  int dim_;
  EnergyFn e_;
  GradientFn g_;
  HvpFn h_;
  Box box_;
  std::string name_;
  double fd_step_;
};

// ---------------------------------------------------------------------------

/// Hessian-vector product source used by the solvers.
enum class HvpMode { dimer, exact };

/// Undirected-norm Hessian action for the eigensolvers. Any vector length is accepted; the dimer is
/// applied to the normalized direction and rescaled.
inline Vector hessian_action(const EnergyOracle& oracle, const Vector& x, const Vector& u, HvpMode mode,
                             DimerSpec dimer) {
  if (mode == HvpMode::exact && oracle.has_exact_hvp()) return oracle.hvp(x, u);
  const double n = u.norm();
  if (n == 0.0) return Vector::Zero(u.size());
  return n * hvp_dimer(oracle, x, u / n, dimer);
}

/// Dense Hessian assembled column-by-column from Hessian-vector products, then symmetrized.
inline Matrix dense_hessian(const EnergyOracle& oracle, const Vector& x, HvpMode mode, DimerSpec dimer = {}) {
  const int d = oracle.dim();
  Matrix h(d, d);
  for (int j = 0; j < d; ++j) h.col(j) = hessian_action(oracle, x, Vector::Unit(d, j), mode, dimer);
  return 0.5 * (h + h.transpose());
}

/// Analytic potential by name: toy2d, toy3d:<alpha>, mb, mmb, rosenbrock, doublewell,
/// quadratic:<d1>,<d2>,... (diagonal, centered at 0).
inline OraclePtr make_analytic(const std::string& spec) {
  const auto colon = spec.find(':');
  const std::string head = spec.substr(0, colon);
  const std::string tail = colon == std::string::npos ? "" : spec.substr(colon + 1);
  auto parse_list = [](const std::string& s) {
    std::vector<double> v;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) v.push_back(std::stod(item));
    return v;
  };
  if (head == "toy2d") return std::make_shared<ToyPotential>(ToyPotential::toy2d());
  if (head == "toy3d") {
    if (tail.empty()) throw ArgumentError("toy3d requires alpha, e.g. toy3d:6");
    return std::make_shared<ToyPotential>(ToyPotential::toy3d(std::stod(tail)));
  }
  if (head == "mb") return std::make_shared<MuellerBrown>(false);
  if (head == "mmb") return std::make_shared<MuellerBrown>(true);
  if (head == "rosenbrock") return std::make_shared<RosenbrockModified>(RosenbrockModified::standard());
  if (head == "doublewell") return std::make_shared<DoubleWell>();
  if (head == "quadratic") {
    const auto d = parse_list(tail);
    if (d.empty()) throw ArgumentError("quadratic requires diagonal entries, e.g. quadratic:-1,1");
    return std::make_shared<QuadraticPotential>(
        QuadraticPotential::diagonal(Eigen::Map<const Vector>(d.data(), static_cast<Eigen::Index>(d.size()))));
  }
  throw ArgumentError("unknown analytic potential '" + spec + "'");
}

}  // namespace nnhisd

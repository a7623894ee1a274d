#pragma once

#include <nnhisd/energy.hpp>

#include <json.hpp>

#include <cmath>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

/**
 * @file mlp.hpp
 * @brief Fully connected tanh surrogate E_NN(x [, alpha]; theta) with input derivatives.
 *
 * The network acts in normalized coordinates: z = (u - mean_in) / std_in, y = N(z), and
 * E = mean_out + std_out * y. Input gradients are computed by reverse-mode sweeps through the
 * layers; Hessian-vector products by forward-over-reverse (the directional derivative of the
 * reverse sweep), so both are exact to rounding.
 *
 * For parametric models the last input component is the parameter alpha. The search variable is
 * the leading x-block; derivatives returned to the saddle search exclude alpha.
 */

namespace nnhisd::surrogate {

struct Normalizer {
  Vector mean;
  Vector stdev;

  static Normalizer identity(int dim) { return {Vector::Zero(dim), Vector::Ones(dim)}; }
  [[nodiscard]] Vector normalize(const Vector& x) const { return ((x - mean).array() / stdev.array()).matrix(); }
  [[nodiscard]] Vector denormalize(const Vector& z) const { return (z.array() * stdev.array()).matrix() + mean; }
};

struct OutputNormalizer {
  double mean = 0.0;
  double stdev = 1.0;
};

struct DenseLayer {
  Matrix w;  ///< out x in
  Vector b;  ///< out
};

enum class HvpMethod { nested_ad, dimer };

inline HvpMethod hvp_method_from_string(const std::string& s) {
  if (s == "nested_ad") return HvpMethod::nested_ad;
  if (s == "dimer") return HvpMethod::dimer;
  throw ArgumentError("unknown surrogate hvp mode '" + s + "'");
}

class MlpSurrogate {
 public:
  MlpSurrogate() = default;

  /// Widths are {input, hidden..., 1}. Weights and biases are drawn uniformly from
  /// [-1/sqrt(fan_in), 1/sqrt(fan_in)].
  MlpSurrogate(std::vector<int> widths, bool parametric, std::uint64_t seed) : widths_(std::move(widths)), parametric_(parametric) {
    validate_widths();
    Rng rng(seed);
    for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
      const int in = widths_[l];
      const int out = widths_[l + 1];
      const double bound = 1.0 / std::sqrt(static_cast<double>(in));
      std::uniform_real_distribution<double> u(-bound, bound);
      DenseLayer layer{Matrix(out, in), Vector(out)};
      for (int i = 0; i < out; ++i)
        for (int j = 0; j < in; ++j) layer.w(i, j) = u(rng);
      for (int i = 0; i < out; ++i) layer.b[i] = u(rng);
      layers_.push_back(std::move(layer));
    }
    in_norm_ = Normalizer::identity(input_dim());
    domain_ = Box::cube(search_dim(), -1.0, 1.0);
  }

  /// Assemble from explicit parameters (checkpoint loading, hand-built test models).
  MlpSurrogate(std::vector<DenseLayer> layers, bool parametric, Normalizer in_norm, OutputNormalizer out_norm)
      : parametric_(parametric), layers_(std::move(layers)), in_norm_(std::move(in_norm)), out_norm_(out_norm) {
    require(!layers_.empty(), "MlpSurrogate: at least one layer required");
    widths_.push_back(static_cast<int>(layers_.front().w.cols()));
    for (const auto& l : layers_) widths_.push_back(static_cast<int>(l.w.rows()));
    validate_widths();
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      require(layers_[l].w.cols() == widths_[l] && layers_[l].b.size() == widths_[l + 1],
              "MlpSurrogate: layer shapes do not chain");
    }
    require(in_norm_.mean.size() == input_dim() && in_norm_.stdev.size() == input_dim(),
            "MlpSurrogate: input normalizer dimension mismatch");
    require((in_norm_.stdev.array() > 0.0).all() && out_norm_.stdev > 0.0,
            "MlpSurrogate: normalizer std must be positive");
    domain_ = Box::cube(search_dim(), -1.0, 1.0);
  }

  [[nodiscard]] const std::vector<int>& widths() const { return widths_; }
  [[nodiscard]] int input_dim() const { return widths_.front(); }
  [[nodiscard]] int search_dim() const { return parametric_ ? input_dim() - 1 : input_dim(); }
  [[nodiscard]] bool parametric() const { return parametric_; }
  [[nodiscard]] const std::vector<DenseLayer>& layers() const { return layers_; }
  [[nodiscard]] std::vector<DenseLayer>& layers() { return layers_; }
  [[nodiscard]] const Normalizer& input_normalizer() const { return in_norm_; }
  [[nodiscard]] const OutputNormalizer& output_normalizer() const { return out_norm_; }
  [[nodiscard]] const Box& domain() const { return domain_; }
  [[nodiscard]] const nlohmann::json& metadata() const { return metadata_; }
  nlohmann::json& metadata() { return metadata_; }

  void set_normalizers(Normalizer in, OutputNormalizer out) {
    require(in.mean.size() == input_dim() && in.stdev.size() == input_dim(), "set_normalizers: dimension mismatch");
    require((in.stdev.array() > 0.0).all() && out.stdev > 0.0, "set_normalizers: std must be positive");
    in_norm_ = std::move(in);
    out_norm_ = out;
  }
  void set_domain(Box b) {
    require(b.dim() == search_dim(), "set_domain: dimension mismatch");
    domain_ = std::move(b);
  }

  [[nodiscard]] bool all_finite() const {
    for (const auto& l : layers_)
      if (!l.w.allFinite() || !l.b.allFinite()) return false;
    return true;
  }

  /// Denormalized E_NN(u); u is the full input (x, and alpha if parametric).
  [[nodiscard]] double forward(const Vector& u) const {
    check_input(u);
    Vector z = in_norm_.normalize(u);
    for (std::size_t l = 0; l + 1 < layers_.size(); ++l) z = (layers_[l].w * z + layers_[l].b).array().tanh().matrix();
    const auto& out = layers_.back();
    return out_norm_.mean + out_norm_.stdev * (out.w.row(0).dot(z) + out.b[0]);
  }

  /// d E_NN / d u over the full input.
  [[nodiscard]] Vector input_gradient(const Vector& u) const {
    check_input(u);
    std::vector<Vector> zs = activations(u);
    Vector g = layers_.back().w.row(0).transpose();
    for (std::size_t l = layers_.size() - 1; l-- > 0;) {
      const Vector& z = zs[l + 1];
      g = layers_[l].w.transpose() * (g.array() * (1.0 - z.array().square())).matrix();
    }
    return (out_norm_.stdev * g.array() / in_norm_.stdev.array()).matrix();
  }

  /// Forward-over-reverse Hessian-vector product over the full input; `v` is a full-input direction.
  [[nodiscard]] Vector input_hvp(const Vector& u, const Vector& v) const {
    check_input(u);
    require_dim(v, input_dim(), "input_hvp");
    const std::vector<Vector> zs = activations(u);
    // Tangents of the hidden activations along v.
    std::vector<Vector> dz(zs.size());
    dz[0] = (v.array() / in_norm_.stdev.array()).matrix();
    for (std::size_t l = 0; l + 1 < layers_.size(); ++l) {
      dz[l + 1] = ((layers_[l].w * dz[l]).array() * (1.0 - zs[l + 1].array().square())).matrix();
    }
    Vector g = layers_.back().w.row(0).transpose();
    Vector dg = Vector::Zero(g.size());
    for (std::size_t l = layers_.size() - 1; l-- > 0;) {
      const Eigen::ArrayXd z = zs[l + 1].array();
      const Eigen::ArrayXd s = 1.0 - z.square();
      const Eigen::ArrayXd ds = -2.0 * z * dz[l + 1].array();
      const Vector delta = (g.array() * s).matrix();
      const Vector ddelta = (dg.array() * s + g.array() * ds).matrix();
      g = layers_[l].w.transpose() * delta;
      dg = layers_[l].w.transpose() * ddelta;
    }
    return (out_norm_.stdev * dg.array() / in_norm_.stdev.array()).matrix();
  }

 private:
  void validate_widths() const {
    require(widths_.size() >= 2, "MlpSurrogate: need at least input and output widths");
    require(widths_.back() == 1, "MlpSurrogate: output width must be 1");
    for (int w : widths_) require(w >= 1, "MlpSurrogate: widths must be positive");
    require(!parametric_ || widths_.front() >= 2, "MlpSurrogate: parametric model needs x and alpha inputs");
  }

  void check_input(const Vector& u) const { require_dim(u, input_dim(), "MlpSurrogate"); }

  [[nodiscard]] std::vector<Vector> activations(const Vector& u) const {
    std::vector<Vector> zs;
    zs.reserve(layers_.size());
    zs.push_back(in_norm_.normalize(u));
    for (std::size_t l = 0; l + 1 < layers_.size(); ++l)
      zs.push_back((layers_[l].w * zs.back() + layers_[l].b).array().tanh().matrix());
    return zs;
  }

  std::vector<int> widths_;
  bool parametric_ = false;
  std::vector<DenseLayer> layers_;
  Normalizer in_norm_;
  OutputNormalizer out_norm_;
  Box domain_;
  nlohmann::json metadata_ = nlohmann::json::object();
};

inline double forward(const MlpSurrogate& model, const Vector& u) { return model.forward(u); }

/// Gradient over the search block (alpha excluded for parametric models).
inline Vector grad_input(const MlpSurrogate& model, const Vector& u) {
  return model.input_gradient(u).head(model.search_dim());
}

/// Hessian-vector product over the search block; v has length search_dim.
inline Vector hvp_input(const MlpSurrogate& model, const Vector& u, const Vector& v, HvpMethod mode,
                        DimerSpec dimer = {}) {
  const int d = model.search_dim();
  require_dim(v, d, "hvp_input");
  if (mode == HvpMethod::nested_ad) {
    Vector full = Vector::Zero(model.input_dim());
    full.head(d) = v;
    return model.input_hvp(u, full).head(d);
  }
  if (!(dimer.length > 0.0)) throw ArgumentError("hvp_input: dimer length must be positive");
  Vector up = u;
  Vector um = u;
  up.head(d) += dimer.length * v;
  um.head(d) -= dimer.length * v;
  // F = -grad, so (F(x - l v) - F(x + l v)) / 2l = (grad(x + l v) - grad(x - l v)) / 2l.
  return (grad_input(model, up) - grad_input(model, um)) / (2.0 * dimer.length);
}

/// A trained surrogate viewed as an energy oracle over the search block. Parametric models get a
/// fixed alpha.
class SurrogateOracle final : public EnergyOracle {
 public:
  explicit SurrogateOracle(std::shared_ptr<const MlpSurrogate> model, std::optional<double> alpha = std::nullopt)
      : model_(std::move(model)), alpha_(alpha) {
    require(model_ != nullptr, "SurrogateOracle: null model");
    require(model_->parametric() == alpha_.has_value(),
            model_->parametric() ? "SurrogateOracle: parametric model needs alpha" : "SurrogateOracle: model takes no alpha");
  }

  [[nodiscard]] int dim() const override { return model_->search_dim(); }
  [[nodiscard]] double energy(const Vector& x) const override { return model_->forward(full(x)); }
  [[nodiscard]] Vector gradient(const Vector& x) const override { return grad_input(*model_, full(x)); }
  [[nodiscard]] bool has_exact_hvp() const override { return true; }
  [[nodiscard]] Vector hvp(const Vector& x, const Vector& v) const override {
    return hvp_input(*model_, full(x), v, HvpMethod::nested_ad);
  }
  [[nodiscard]] Box domain() const override { return model_->domain(); }
  [[nodiscard]] Vector coordinate_scale() const override {
    return model_->input_normalizer().stdev.head(dim());
  }
  [[nodiscard]] std::string name() const override { return "surrogate"; }
  [[nodiscard]] const MlpSurrogate& model() const { return *model_; }

 private:
  [[nodiscard]] Vector full(const Vector& x) const {
    require_dim(x, dim(), "SurrogateOracle");
    if (!alpha_) return x;
    Vector u(x.size() + 1);
    u << x, *alpha_;
    return u;
  }

  std::shared_ptr<const MlpSurrogate> model_;
  std::optional<double> alpha_;
};

}  // namespace nnhisd::surrogate

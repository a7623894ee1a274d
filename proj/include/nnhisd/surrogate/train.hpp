#pragma once

#include <nnhisd/surrogate/dataset.hpp>
#include <nnhisd/surrogate/mlp.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

/**
 * @file train.hpp
 * @brief Adam training of the tanh surrogate on energy labels and optional gradient labels.
 *
 * Loss (in normalized units, per mini-batch):
 *
 *   mean_b (y_b - t_b)^2  +  lambda2 * mean_{b in masked} || d y / d z (b) - g_b ||^2
 *                         +  (weight_decay / 2) * ||theta||^2
 *
 * where g are the gradient labels mapped into normalized coordinates (g_j * std_in_j / std_out).
 * The gradient term needs derivatives of an input derivative with respect to the weights; these are
 * obtained by reversing the input-gradient sweep (double backpropagation).
 *
 * The learning rate follows a step schedule: lr * decay^floor(epoch / step).
 */

namespace nnhisd::surrogate {

struct TrainConfig {
  double learning_rate = 1e-3;
  int batch_size = 500;
  int epochs = 30000;
  int lr_step = 2000;
  double lr_decay = 0.7;
  double grad_weight = 0.0;  ///< lambda2
  double weight_decay = 0.0;
  std::uint64_t seed = 0;
  bool warm_start = false;  ///< keep normalizers and continue the epoch count of a trained model

  void validate(int n) const {
    require(learning_rate > 0.0, "TrainConfig: learning_rate must be positive");
    require(batch_size >= 1 && batch_size <= n, "TrainConfig: need 1 <= batch_size <= n");
    require(epochs >= 0, "TrainConfig: epochs must be >= 0");
    require(lr_step >= 1, "TrainConfig: lr_step must be >= 1");
    require(lr_decay > 0.0 && lr_decay <= 1.0, "TrainConfig: lr_decay must lie in (0, 1]");
    require(grad_weight >= 0.0 && weight_decay >= 0.0, "TrainConfig: penalty weights must be >= 0");
  }
};

struct TrainResult {
  std::vector<double> loss_history;  ///< per epoch, sample-weighted mean of batch losses
  int first_epoch = 0;
};

namespace detail {

/// tanh through the vectorized exp; absolute error ~1e-16, an order of magnitude faster than
/// the scalar tanh on batched activations.
inline Matrix fast_tanh(const Matrix& a) { return (1.0 - 2.0 / ((2.0 * a.array()).exp() + 1.0)).matrix(); }

struct ParamGrads {
  std::vector<Matrix> w;
  std::vector<Vector> b;

  static ParamGrads zeros_like(const MlpSurrogate& m) {
    ParamGrads g;
    for (const auto& l : m.layers()) {
      g.w.push_back(Matrix::Zero(l.w.rows(), l.w.cols()));
      g.b.push_back(Vector::Zero(l.b.size()));
    }
    return g;
  }
  void set_zero() {
    for (auto& m : w) m.setZero();
    for (auto& v : b) v.setZero();
  }
};

/// Energy MSE on a batch (columns of z); accumulates parameter gradients and returns the loss.
inline double energy_loss(const MlpSurrogate& model, const Matrix& z0, const Eigen::RowVectorXd& target,
                          ParamGrads& g) {
  const auto& layers = model.layers();
  const std::size_t nl = layers.size();
  const double bsz = static_cast<double>(z0.cols());
  std::vector<Matrix> z(nl);
  z[0] = z0;
  for (std::size_t l = 0; l + 1 < nl; ++l) {
    Matrix a = layers[l].w * z[l];
    a.colwise() += layers[l].b;
    z[l + 1] = fast_tanh(a);
  }
  Eigen::RowVectorXd y = layers[nl - 1].w * z[nl - 1];
  y.array() += layers[nl - 1].b[0];
  const Eigen::RowVectorXd diff = y - target;
  const double loss = diff.squaredNorm() / bsz;
  const Eigen::RowVectorXd dy = 2.0 * diff / bsz;

  g.w[nl - 1].noalias() += dy * z[nl - 1].transpose();
  g.b[nl - 1][0] += dy.sum();
  Matrix dz = layers[nl - 1].w.transpose() * dy;
  for (std::size_t l = nl - 1; l-- > 0;) {
    const Matrix da = (dz.array() * (1.0 - z[l + 1].array().square())).matrix();
    g.w[l].noalias() += da * z[l].transpose();
    g.b[l] += da.rowwise().sum();
    if (l > 0) dz = layers[l].w.transpose() * da;
  }
  return loss;
}

/// Gradient-label loss: mean over columns of || (dy/dz)_x - target ||^2, scaled by `weight`.
/// `target` has search_dim rows. Accumulates weight * d(loss)/d(theta).
inline double gradient_loss(const MlpSurrogate& model, const Matrix& z0, const Matrix& target, double weight,
                            ParamGrads& g) {
  const auto& layers = model.layers();
  const std::size_t nl = layers.size();
  const Eigen::Index bsz = z0.cols();
  const int ds = model.search_dim();

  std::vector<Matrix> z(nl);
  std::vector<Matrix> s(nl);
  z[0] = z0;
  for (std::size_t l = 0; l + 1 < nl; ++l) {
    Matrix a = layers[l].w * z[l];
    a.colwise() += layers[l].b;
    z[l + 1] = fast_tanh(a);
    s[l + 1] = (1.0 - z[l + 1].array().square()).matrix();
  }
  // Reverse sweep for the input gradient: gr[j] = dy/dz[j], dl[j] = gr[j] * s[j].
  std::vector<Matrix> gr(nl);
  std::vector<Matrix> dl(nl);
  gr[nl - 1] = layers[nl - 1].w.transpose().replicate(1, bsz);
  for (std::size_t j = nl - 1; j >= 1; --j) {
    dl[j] = (gr[j].array() * s[j].array()).matrix();
    gr[j - 1] = layers[j - 1].w.transpose() * dl[j];
  }
  const Matrix resid = gr[0].topRows(ds) - target;
  const double loss = resid.squaredNorm() / static_cast<double>(bsz);

  // Adjoint of the reverse sweep.
  Matrix gbar = Matrix::Zero(gr[0].rows(), bsz);
  gbar.topRows(ds) = (2.0 * weight / static_cast<double>(bsz)) * resid;
  std::vector<Matrix> zbar(nl);
  for (std::size_t j = 1; j < nl; ++j) {
    const Matrix dbar = layers[j - 1].w * gbar;
    g.w[j - 1].noalias() += dl[j] * gbar.transpose();
    gbar = (dbar.array() * s[j].array()).matrix();
    zbar[j] = (dbar.array() * gr[j].array() * (-2.0) * z[j].array()).matrix();
  }
  g.w[nl - 1] += gbar.rowwise().sum().transpose();
  // Adjoint of the forward activations.
  for (std::size_t j = nl - 1; j >= 1; --j) {
    const Matrix abar = (zbar[j].array() * s[j].array()).matrix();
    g.w[j - 1].noalias() += abar * z[j - 1].transpose();
    g.b[j - 1] += abar.rowwise().sum();
    if (j > 1) zbar[j - 1].noalias() += layers[j - 1].w.transpose() * abar;
  }
  return weight * loss;
}

struct Adam {
  ParamGrads m;
  ParamGrads v;
  long t = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  explicit Adam(const MlpSurrogate& model) : m(ParamGrads::zeros_like(model)), v(ParamGrads::zeros_like(model)) {}

  void update(MlpSurrogate& model, const ParamGrads& g, double lr) {
    ++t;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    auto& layers = model.layers();
    auto apply = [&](auto& param, auto& mm, auto& vv, const auto& gg) {
      mm = beta1 * mm + (1.0 - beta1) * gg;
      vv = beta2 * vv + (1.0 - beta2) * gg.cwiseProduct(gg);
      param.array() -= lr * (mm.array() / c1) / ((vv.array() / c2).sqrt() + eps);
    };
    for (std::size_t l = 0; l < layers.size(); ++l) {
      apply(layers[l].w, m.w[l], v.w[l], g.w[l]);
      apply(layers[l].b, m.b[l], v.b[l], g.b[l]);
    }
  }
};

}  // namespace detail

/// Gradient labels in the network's normalized coordinates.
inline Matrix normalized_gradient_labels(const MlpSurrogate& model, const Dataset& data) {
  const auto& in = model.input_normalizer();
  const double so = model.output_normalizer().stdev;
  Matrix g = data.gradients.transpose();  // d x n
  for (int j = 0; j < data.dim(); ++j) g.row(j) *= in.stdev[j] / so;
  return g;
}

/// Mean squared energy error of the model on the dataset, in original units.
inline double evaluate_mse(const MlpSurrogate& model, const Dataset& data) {
  const Matrix u = data.inputs();
  double s = 0.0;
  for (int r = 0; r < data.size(); ++r) {
    const double e = model.forward(u.row(r).transpose()) - data.energies[r];
    s += e * e;
  }
  return s / data.size();
}

inline TrainResult train(MlpSurrogate& model, const Dataset& data, const TrainConfig& cfg) {
  data.validate();
  cfg.validate(data.size());
  require(data.input_dim() == model.input_dim(), "train: dataset columns do not match the model input");
  require(data.parametric() == model.parametric(), "train: parametric mismatch between data and model");
  if (cfg.grad_weight > 0.0 && data.gradient_rows() == 0)
    throw ArgumentError("train: grad_weight > 0 but no gradient labels");

  TrainResult out;
  if (cfg.epochs == 0) return out;

  int first_epoch = 0;
  if (cfg.warm_start) {
    first_epoch = model.metadata().value("epochs_trained", 0);
  } else {
    auto [in, on] = fit_normalizers(data);
    model.set_normalizers(in, on);
    model.set_domain(bounding_box(data));
  }
  out.first_epoch = first_epoch;

  const int n = data.size();
  const auto& in_norm = model.input_normalizer();
  const auto& out_norm = model.output_normalizer();
  const Matrix inputs = data.inputs();
  Matrix z_all(model.input_dim(), n);
  for (int r = 0; r < n; ++r) z_all.col(r) = in_norm.normalize(inputs.row(r).transpose());
  const Eigen::RowVectorXd t_all = ((data.energies.array() - out_norm.mean) / out_norm.stdev).matrix().transpose();
  const bool use_grad = cfg.grad_weight > 0.0;
  Matrix g_all;
  if (use_grad) g_all = normalized_gradient_labels(model, data);

  detail::ParamGrads grads = detail::ParamGrads::zeros_like(model);
  detail::Adam adam(model);
  Rng rng(derive_seed(cfg.seed, streams::batches));
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);

  Matrix zb;
  Eigen::RowVectorXd tb;
  for (int e = 0; e < cfg.epochs; ++e) {
    const int epoch = first_epoch + e;
    const double lr = cfg.learning_rate * std::pow(cfg.lr_decay, static_cast<double>(epoch / cfg.lr_step));
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (int start = 0; start < n; start += cfg.batch_size) {
      const int bsz = std::min(cfg.batch_size, n - start);
      zb.resize(model.input_dim(), bsz);
      tb.resize(bsz);
      std::vector<int> masked;
      for (int i = 0; i < bsz; ++i) {
        const int r = order[static_cast<std::size_t>(start + i)];
        zb.col(i) = z_all.col(r);
        tb[i] = t_all[r];
        if (use_grad && data.grad_mask[static_cast<std::size_t>(r)]) masked.push_back(r);
      }
      grads.set_zero();
      double loss = detail::energy_loss(model, zb, tb, grads);
      if (!masked.empty()) {
        Matrix zg(model.input_dim(), static_cast<Eigen::Index>(masked.size()));
        Matrix tg(model.search_dim(), static_cast<Eigen::Index>(masked.size()));
        for (std::size_t i = 0; i < masked.size(); ++i) {
          zg.col(static_cast<Eigen::Index>(i)) = z_all.col(masked[i]);
          tg.col(static_cast<Eigen::Index>(i)) = g_all.col(masked[i]);
        }
        loss += detail::gradient_loss(model, zg, tg, cfg.grad_weight, grads);
      }
      if (cfg.weight_decay > 0.0) {
        auto& layers = model.layers();
        for (std::size_t l = 0; l < layers.size(); ++l) {
          loss += 0.5 * cfg.weight_decay * (layers[l].w.squaredNorm() + layers[l].b.squaredNorm());
          grads.w[l] += cfg.weight_decay * layers[l].w;
          grads.b[l] += cfg.weight_decay * layers[l].b;
        }
      }
      if (!std::isfinite(loss)) {
        throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch) + ", batch starting at " +
                           std::to_string(start) + " (lr=" + std::to_string(lr) + ")");
      }
      adam.update(model, grads, lr);
      epoch_loss += loss * bsz;
    }
    out.loss_history.push_back(epoch_loss / n);
  }
  auto& meta = model.metadata();
  meta["epochs_trained"] = first_epoch + cfg.epochs;
  meta["seed"] = cfg.seed;
  meta["train_config"] = {{"learning_rate", cfg.learning_rate}, {"batch_size", cfg.batch_size},
                          {"epochs", cfg.epochs},               {"lr_step", cfg.lr_step},
                          {"lr_decay", cfg.lr_decay},           {"grad_weight", cfg.grad_weight},
                          {"weight_decay", cfg.weight_decay},   {"warm_start", cfg.warm_start}};
  return out;
}

}  // namespace nnhisd::surrogate

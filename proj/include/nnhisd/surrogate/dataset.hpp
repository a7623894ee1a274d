#pragma once

#include <nnhisd/core.hpp>
#include <nnhisd/energy.hpp>
#include <nnhisd/surrogate/mlp.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <system_error>
#include <utility>
#include <vector>

namespace nnhisd::surrogate {

/// Sampled energies with optional gradient labels and optional parameter column.
struct Dataset {
  Matrix points;                 ///< n x d
  Vector energies;               ///< n
  Matrix gradients;              ///< n x d, or empty
  std::vector<char> grad_mask;   ///< n; rows with usable gradient labels
  std::optional<Vector> alpha;   ///< n, parametric datasets only

  [[nodiscard]] int size() const { return static_cast<int>(points.rows()); }
  [[nodiscard]] int dim() const { return static_cast<int>(points.cols()); }
  [[nodiscard]] bool parametric() const { return alpha.has_value(); }
  [[nodiscard]] bool has_gradients() const { return gradients.size() != 0; }
  [[nodiscard]] int input_dim() const { return dim() + (parametric() ? 1 : 0); }

  [[nodiscard]] int gradient_rows() const {
    return has_gradients() ? static_cast<int>(std::count(grad_mask.begin(), grad_mask.end(), 1)) : 0;
  }

  /// Network inputs, one row per sample: (x, alpha).
  [[nodiscard]] Matrix inputs() const {
    if (!parametric()) return points;
    Matrix u(size(), input_dim());
    u << points, *alpha;
    return u;
  }

  void validate() const {
    require(size() >= 1, "Dataset: at least one row required");
    require(energies.size() == size(), "Dataset: energies length mismatch");
    if (has_gradients()) {
      require(gradients.rows() == size() && gradients.cols() == dim(), "Dataset: gradient shape mismatch");
      require(static_cast<int>(grad_mask.size()) == size(), "Dataset: gradient mask length mismatch");
    }
    if (alpha) require(alpha->size() == size(), "Dataset: alpha length mismatch");
  }
};

struct NoiseResult {
  Dataset data;
  std::vector<int> perturbed_rows;  ///< sorted
};

/// Adds N(0, sigma^2) to the energy labels of floor(ratio * n) rows chosen without replacement.
inline NoiseResult add_gaussian_noise(const Dataset& data, double ratio, double sigma, std::uint64_t seed) {
  require(ratio >= 0.0 && ratio <= 1.0, "add_gaussian_noise: ratio must lie in [0, 1]");
  require(sigma >= 0.0, "add_gaussian_noise: sigma must be non-negative");
  NoiseResult out{data, {}};
  const int n = data.size();
  const int count = static_cast<int>(std::floor(ratio * n + 1e-9));
  std::vector<int> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  // Partial Fisher-Yates: the first `count` entries are a uniform sample without replacement.
  for (int i = 0; i < count; ++i) {
    std::uniform_int_distribution<int> pick(i, n - 1);
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(pick(rng))]);
  }
  idx.resize(static_cast<std::size_t>(count));
  std::sort(idx.begin(), idx.end());
  if (sigma > 0.0) {
    std::normal_distribution<double> noise(0.0, sigma);
    for (int r : idx) out.data.energies[r] += noise(rng);
  }
  out.perturbed_rows = std::move(idx);
  return out;
}

/// Per-feature mean / population std of the inputs and of the energies; std floored at 1e-12.
inline std::pair<Normalizer, OutputNormalizer> fit_normalizers(const Dataset& data) {
  data.validate();
  const Matrix u = data.inputs();
  const double n = static_cast<double>(u.rows());
  Normalizer in;
  in.mean = u.colwise().mean().transpose();
  in.stdev = ((u.rowwise() - in.mean.transpose()).array().square().colwise().sum() / n).sqrt().transpose();
  in.stdev = in.stdev.cwiseMax(1e-12);
  OutputNormalizer out;
  out.mean = data.energies.mean();
  out.stdev = std::max(1e-12, std::sqrt((data.energies.array() - out.mean).square().sum() / n));
  return {in, out};
}

/// Bounding box of the sampled points.
inline Box bounding_box(const Dataset& data) {
  return {data.points.colwise().minCoeff().transpose(), data.points.colwise().maxCoeff().transpose()};
}

enum class Sampling { uniform_random, grid };

inline Sampling sampling_from_string(const std::string& s) {
  if (s == "uniform_random") return Sampling::uniform_random;
  if (s == "grid") return Sampling::grid;
  throw ArgumentError("unknown sampling '" + s + "'");
}

/// Sample points in a box. Grid sampling takes `n` points per axis and enumerates them in
/// row-major order (last coordinate fastest).
inline Matrix sample_points(const Box& box, int n, Sampling mode, std::uint64_t seed) {
  require(n > 0, "sample_points: n must be positive");
  const int d = box.dim();
  if (mode == Sampling::uniform_random) {
    Rng rng(derive_seed(seed, streams::sampling));
    Matrix p(n, d);
    for (int r = 0; r < n; ++r) p.row(r) = uniform_in(box, rng).transpose();
    return p;
  }
  long total = 1;
  for (int i = 0; i < d; ++i) {
    total *= n;
    require(total <= 50'000'000, "sample_points: grid too large");
  }
  Matrix p(total, d);
  std::vector<int> idx(static_cast<std::size_t>(d), 0);
  for (long r = 0; r < total; ++r) {
    for (int i = 0; i < d; ++i) {
      const double t = n == 1 ? 0.5 : static_cast<double>(idx[static_cast<std::size_t>(i)]) / (n - 1);
      p(r, i) = box.lower[i] + t * (box.upper[i] - box.lower[i]);
    }
    for (int i = d - 1; i >= 0; --i) {
      if (++idx[static_cast<std::size_t>(i)] < n) break;
      idx[static_cast<std::size_t>(i)] = 0;
    }
  }
  return p;
}

/// Label points with an oracle. `gradient_fraction` in [0, 1] selects (seeded) the rows that keep
/// gradient labels; 0 omits gradient columns entirely.
inline Dataset label_dataset(const EnergyOracle& oracle, Matrix points, double gradient_fraction = 0.0,
                             std::uint64_t seed = 0) {
  require(points.cols() == oracle.dim(), "label_dataset: point dimension mismatch");
  require(gradient_fraction >= 0.0 && gradient_fraction <= 1.0, "label_dataset: gradient_fraction must lie in [0, 1]");
  Dataset ds;
  const int n = static_cast<int>(points.rows());
  ds.energies.resize(n);
  for (int r = 0; r < n; ++r) ds.energies[r] = eval_energy(oracle, points.row(r).transpose());
  if (gradient_fraction > 0.0) {
    ds.gradients = Matrix::Zero(n, points.cols());
    ds.grad_mask.assign(static_cast<std::size_t>(n), 0);
    const auto picked = add_gaussian_noise(Dataset{points, ds.energies, {}, {}, {}}, gradient_fraction, 0.0,
                                           derive_seed(seed, streams::gradient_mask)).perturbed_rows;
    for (int r : picked) {
      ds.gradients.row(r) = oracle.gradient(points.row(r).transpose()).transpose();
      ds.grad_mask[static_cast<std::size_t>(r)] = 1;
    }
  }
  ds.points = std::move(points);
  return ds;
}

/// Row-wise concatenation (e.g. one block per parameter value).
inline Dataset concat(const std::vector<Dataset>& parts) {
  require(!parts.empty(), "concat: no datasets");
  int n = 0;
  for (const auto& p : parts) {
    p.validate();
    require(p.dim() == parts[0].dim() && p.parametric() == parts[0].parametric() &&
                p.has_gradients() == parts[0].has_gradients(),
            "concat: incompatible datasets");
    n += p.size();
  }
  Dataset out;
  const int d = parts[0].dim();
  out.points.resize(n, d);
  out.energies.resize(n);
  if (parts[0].has_gradients()) out.gradients.resize(n, d);
  if (parts[0].parametric()) out.alpha = Vector(n);
  int r = 0;
  for (const auto& p : parts) {
    out.points.middleRows(r, p.size()) = p.points;
    out.energies.segment(r, p.size()) = p.energies;
    if (p.has_gradients()) {
      out.gradients.middleRows(r, p.size()) = p.gradients;
      out.grad_mask.insert(out.grad_mask.end(), p.grad_mask.begin(), p.grad_mask.end());
    }
    if (p.parametric()) out.alpha->segment(r, p.size()) = *p.alpha;
    r += p.size();
  }
  return out;
}

// ---------------------------------------------------------------------------
// CSV: header x_1..x_d[,alpha],E[,g_1..g_d]; unlabeled gradient rows leave the g fields empty.
// Numbers are written in shortest round-trip form so write -> read -> write is byte-identical.

inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  if (res.ec != std::errc()) throw NumericError("format_double failed");
  return {buf, res.ptr};
}

inline double parse_double(const std::string& s) {
  double v = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  while (first < last && *first == ' ') ++first;
  auto res = std::from_chars(first, last, v);
  if (res.ec != std::errc() || res.ptr != last) throw ArgumentError("dataset CSV: bad number '" + s + "'");
  return v;
}

inline void write_dataset_csv(std::ostream& os, const Dataset& data) {
  data.validate();
  const int d = data.dim();
  for (int i = 0; i < d; ++i) os << (i ? "," : "") << "x_" << (i + 1);
  if (data.parametric()) os << ",alpha";
  os << ",E";
  if (data.has_gradients())
    for (int i = 0; i < d; ++i) os << ",g_" << (i + 1);
  os << '\n';
  for (int r = 0; r < data.size(); ++r) {
    for (int i = 0; i < d; ++i) os << (i ? "," : "") << format_double(data.points(r, i));
    if (data.parametric()) os << ',' << format_double((*data.alpha)[r]);
    os << ',' << format_double(data.energies[r]);
    if (data.has_gradients()) {
      for (int i = 0; i < d; ++i) {
        os << ',';
        if (data.grad_mask[static_cast<std::size_t>(r)]) os << format_double(data.gradients(r, i));
      }
    }
    os << '\n';
  }
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

inline Dataset read_dataset_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw ArgumentError("dataset CSV: empty input");
  const auto header = split_csv_line(line);
  int d = 0;
  while (d < static_cast<int>(header.size()) && header[static_cast<std::size_t>(d)] == "x_" + std::to_string(d + 1)) ++d;
  require(d >= 1, "dataset CSV: header must start with x_1");
  std::size_t col = static_cast<std::size_t>(d);
  bool parametric = false;
  if (col < header.size() && header[col] == "alpha") {
    parametric = true;
    ++col;
  }
  require(col < header.size() && header[col] == "E", "dataset CSV: expected column E after coordinates");
  ++col;
  bool grads = false;
  if (col < header.size()) {
    for (int i = 0; i < d; ++i) {
      require(col + static_cast<std::size_t>(i) < header.size() &&
                  header[col + static_cast<std::size_t>(i)] == "g_" + std::to_string(i + 1),
              "dataset CSV: malformed gradient columns");
    }
    require(header.size() == col + static_cast<std::size_t>(d), "dataset CSV: unexpected extra columns");
    grads = true;
  }

  std::vector<std::vector<std::string>> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    rows.push_back(split_csv_line(line));
    require(rows.back().size() == header.size(), "dataset CSV: row " + std::to_string(rows.size()) + " has wrong arity");
  }
  const int n = static_cast<int>(rows.size());
  require(n >= 1, "dataset CSV: no data rows");
  Dataset ds;
  ds.points.resize(n, d);
  ds.energies.resize(n);
  if (parametric) ds.alpha = Vector(n);
  if (grads) {
    ds.gradients = Matrix::Zero(n, d);
    ds.grad_mask.assign(static_cast<std::size_t>(n), 0);
  }
  for (int r = 0; r < n; ++r) {
    const auto& f = rows[static_cast<std::size_t>(r)];
    std::size_t c = 0;
    for (int i = 0; i < d; ++i) ds.points(r, i) = parse_double(f[c++]);
    if (parametric) (*ds.alpha)[r] = parse_double(f[c++]);
    ds.energies[r] = parse_double(f[c++]);
    if (grads) {
      const bool empty = f[c].empty();
      for (int i = 0; i < d; ++i) {
        const auto& s = f[c + static_cast<std::size_t>(i)];
        require(s.empty() == empty, "dataset CSV: partially labeled gradient row " + std::to_string(r + 1));
        if (!empty) ds.gradients(r, i) = parse_double(s);
      }
      ds.grad_mask[static_cast<std::size_t>(r)] = empty ? 0 : 1;
    }
  }
  return ds;
}

}  // namespace nnhisd::surrogate

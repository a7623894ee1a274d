#pragma once

#include <nnhisd/surrogate/mlp.hpp>

#include <json.hpp>

#include <fstream>
#include <string>
#include <vector>

// Versioned JSON checkpoints. Doubles are written by nlohmann::json in shortest round-trip form, so
// save -> load reproduces every parameter bit for bit.

namespace nnhisd::surrogate {

inline constexpr const char* checkpoint_format = "nnhisd-mlp";
inline constexpr int checkpoint_version = 1;

namespace detail {

inline nlohmann::json vec_to_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline Vector vec_from_json(const nlohmann::json& j) {
  const auto s = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(s.data(), static_cast<Eigen::Index>(s.size()));
}

}  // namespace detail

inline nlohmann::json to_json(const MlpSurrogate& m) {
  using nlohmann::json;
  json layers = json::array();
  for (const auto& l : m.layers()) {
    std::vector<double> w;
    w.reserve(static_cast<std::size_t>(l.w.size()));
    for (Eigen::Index i = 0; i < l.w.rows(); ++i)
      for (Eigen::Index k = 0; k < l.w.cols(); ++k) w.push_back(l.w(i, k));
    layers.push_back({{"rows", l.w.rows()}, {"cols", l.w.cols()}, {"w", w}, {"b", detail::vec_to_json(l.b)}});
  }
  return {{"format", checkpoint_format},
          {"version", checkpoint_version},
          {"widths", m.widths()},
          {"parametric", m.parametric()},
          {"activation", "tanh"},
          {"layers", layers},
          {"input_normalizer",
           {{"mean", detail::vec_to_json(m.input_normalizer().mean)},
            {"std", detail::vec_to_json(m.input_normalizer().stdev)}}},
          {"output_normalizer", {{"mean", m.output_normalizer().mean}, {"std", m.output_normalizer().stdev}}},
          {"domain", {{"lower", detail::vec_to_json(m.domain().lower)}, {"upper", detail::vec_to_json(m.domain().upper)}}},
          {"metadata", m.metadata()}};
}

inline MlpSurrogate from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != checkpoint_format)
      throw ArgumentError("checkpoint: unrecognized format");
    const int version = j.at("version").get<int>();
    if (version != checkpoint_version)
      throw ArgumentError("checkpoint: unsupported version " + std::to_string(version));
    if (j.value("activation", std::string("tanh")) != "tanh") throw ArgumentError("checkpoint: only tanh is supported");
    std::vector<DenseLayer> layers;
    for (const auto& lj : j.at("layers")) {
      const auto rows = lj.at("rows").get<Eigen::Index>();
      const auto cols = lj.at("cols").get<Eigen::Index>();
      const auto w = lj.at("w").get<std::vector<double>>();
      require(static_cast<Eigen::Index>(w.size()) == rows * cols, "checkpoint: weight count mismatch");
      DenseLayer l{Matrix(rows, cols), detail::vec_from_json(lj.at("b"))};
      for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index k = 0; k < cols; ++k) l.w(i, k) = w[static_cast<std::size_t>(i * cols + k)];
      layers.push_back(std::move(l));
    }
    Normalizer in{detail::vec_from_json(j.at("input_normalizer").at("mean")),
                  detail::vec_from_json(j.at("input_normalizer").at("std"))};
    OutputNormalizer out{j.at("output_normalizer").at("mean").get<double>(),
                         j.at("output_normalizer").at("std").get<double>()};
    MlpSurrogate m(std::move(layers), j.at("parametric").get<bool>(), in, out);
    if (j.at("widths").get<std::vector<int>>() != m.widths()) throw ArgumentError("checkpoint: widths do not match layers");
    if (j.contains("domain"))
      m.set_domain({detail::vec_from_json(j["domain"].at("lower")), detail::vec_from_json(j["domain"].at("upper"))});
    if (j.contains("metadata")) m.metadata() = j["metadata"];
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ArgumentError(std::string("checkpoint: malformed JSON (") + e.what() + ")");
  }
}

inline void save_checkpoint(const MlpSurrogate& m, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw ArgumentError("cannot open checkpoint for writing: " + path);
  os << to_json(m).dump(1) << '\n';
  if (!os) throw ArgumentError("failed writing checkpoint: " + path);
}

inline MlpSurrogate load_checkpoint(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ArgumentError("cannot open checkpoint: " + path);
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ArgumentError("checkpoint " + path + ": " + e.what());
  }
  return from_json(j);
}

}  // namespace nnhisd::surrogate

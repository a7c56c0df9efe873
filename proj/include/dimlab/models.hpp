#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "dimlab/autodiff.hpp"
#include "dimlab/error.hpp"
#include "dimlab/tensor.hpp"

namespace dimlab {

enum class Architecture { ann, mlp3, mlp5, cnn1d };

inline const char* to_string(Architecture a) {
  switch (a) {
    case Architecture::ann: return "ann";
    case Architecture::mlp3: return "mlp3";
    case Architecture::mlp5: return "mlp5";
    case Architecture::cnn1d: return "cnn1d";
  }
  return "?";
}

inline Architecture parse_architecture(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  if (s == "ann") return Architecture::ann;
  if (s == "mlp3") return Architecture::mlp3;
  if (s == "mlp5") return Architecture::mlp5;
  if (s == "cnn1d" || s == "cnn") return Architecture::cnn1d;
  throw ConfigError("unknown architecture '" + s + "' (expected ann, mlp3, mlp5 or cnn1d)");
}

struct ModelConfig {
  Architecture architecture = Architecture::mlp3;
  std::size_t input_dim = 1;
  /// Dense widths, or conv filter counts for cnn1d.
  std::vector<std::size_t> hidden_sizes;
  double dropout_rate = 0.0;
  std::uint64_t seed = 0;

  bool operator==(const ModelConfig&) const = default;
};

/// Layer sizes and dropout used when nothing else is configured.
inline ModelConfig default_model_config(Architecture arch, std::size_t input_dim, std::uint64_t seed = 0) {
  ModelConfig c;
  c.architecture = arch;
  c.input_dim = input_dim;
  c.seed = seed;
  switch (arch) {
    case Architecture::ann: c.hidden_sizes = {128}; c.dropout_rate = 0.0; break;
    case Architecture::mlp3: c.hidden_sizes = {128, 64, 32}; c.dropout_rate = 0.2; break;
    case Architecture::mlp5: c.hidden_sizes = {256, 128, 64, 32, 16}; c.dropout_rate = 0.2; break;
    case Architecture::cnn1d: c.hidden_sizes = {128, 64, 32}; c.dropout_rate = 0.0; break;
  }
  return c;
}

struct Parameter {
  std::string name;
  Tensor value;
};

struct Model {
  ModelConfig config;
  std::vector<Parameter> parameters;

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : parameters) n += p.value.size();
    return n;
  }
};

/// Graph produced by one forward pass. `leaves[i]` wraps model.parameters[i],
/// so their grads are readable after backward_pass.
struct ForwardPass {
  ad::Var predictions;  // shape [N]
  std::vector<ad::Var> leaves;
};

namespace detail {

inline Tensor glorot_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Tensor t(std::move(shape), 0.0);
  for (double& v : t.data()) v = dist(rng);
  return t;
}

}  // namespace detail

inline Model build_model(const ModelConfig& config) {
  if (config.input_dim < 1) throw ConfigError("input_dim must be at least 1");
  if (config.hidden_sizes.empty()) throw ConfigError("hidden_sizes must not be empty");
  if (!(config.dropout_rate >= 0.0 && config.dropout_rate < 1.0)) {
    throw ConfigError("dropout_rate must lie in [0, 1)");
  }
  for (std::size_t h : config.hidden_sizes) {
    if (h == 0) throw ConfigError("hidden layer sizes must be positive");
  }
  Model m;
  m.config = config;
  std::mt19937_64 rng(config.seed);
  const auto& hs = config.hidden_sizes;
  if (config.architecture == Architecture::cnn1d) {
    std::size_t in_ch = 1;
    for (std::size_t l = 0; l < hs.size(); ++l) {
      const std::string tag = "conv" + std::to_string(l);
      m.parameters.push_back({tag + ".kernel", detail::glorot_uniform({hs[l], in_ch, 3}, in_ch * 3, hs[l] * 3, rng)});
      m.parameters.push_back({tag + ".bias", Tensor({hs[l]}, 0.0)});
      in_ch = hs[l];
    }
    m.parameters.push_back({"head.weight", detail::glorot_uniform({in_ch, 1}, in_ch, 1, rng)});
    m.parameters.push_back({"head.bias", Tensor({1}, 0.0)});
    return m;
  }
  if (config.architecture == Architecture::ann && hs.size() != 1) {
    throw ConfigError("ann takes exactly one hidden layer");
  }
  std::size_t in = config.input_dim;
  for (std::size_t l = 0; l < hs.size(); ++l) {
    const std::string tag = "dense" + std::to_string(l);
    m.parameters.push_back({tag + ".weight", detail::glorot_uniform({in, hs[l]}, in, hs[l], rng)});
    m.parameters.push_back({tag + ".bias", Tensor({hs[l]}, 0.0)});
    in = hs[l];
  }
  m.parameters.push_back({"head.weight", detail::glorot_uniform({in, 1}, in, 1, rng)});
  m.parameters.push_back({"head.bias", Tensor({1}, 0.0)});
  return m;
}

/// Builds a fresh graph for `batch` (N x input_dim). Dropout is active only
/// when `training` is set.
inline ForwardPass forward(const Model& model, const Tensor& batch, bool training, std::mt19937_64& rng) {
  const auto& cfg = model.config;
  if (batch.rank() != 2 || batch.dim(1) != cfg.input_dim) {
    throw DimensionError("forward: batch " + shape_str(batch.shape()) + " for model with input_dim " +
                         std::to_string(cfg.input_dim));
  }
  const std::size_t n = batch.dim(0);
  ForwardPass fp;
  fp.leaves.reserve(model.parameters.size());
  for (const auto& p : model.parameters) fp.leaves.push_back(ad::leaf(p.value, true));
  const auto& L = fp.leaves;
  ad::Var h = ad::constant(batch);
  std::size_t li = 0;
  if (cfg.architecture == Architecture::cnn1d) {
    h = ad::reshape(h, {n, cfg.input_dim, 1});
    for (std::size_t l = 0; l < cfg.hidden_sizes.size(); ++l, li += 2) {
      h = ad::relu(ad::conv1d_same(h, L[li], L[li + 1]));
    }
    h = ad::global_avg_pool(h);
  } else {
    for (std::size_t l = 0; l < cfg.hidden_sizes.size(); ++l, li += 2) {
      h = ad::relu(ad::add_bias(ad::matmul(h, L[li]), L[li + 1]));
      h = ad::dropout(h, cfg.dropout_rate, training, rng);
    }
  }
  h = ad::add_bias(ad::matmul(h, L[li]), L[li + 1]);
  fp.predictions = ad::reshape(h, {n});
  return fp;
}

/// Evaluation-mode predictions as plain values.
inline std::vector<double> predict(const Model& model, const Tensor& batch) {
  std::mt19937_64 unused(0);
  return forward(model, batch, false, unused).predictions.value().values();
}

// ---------------------------------------------------------------------------
// Checkpoints
//
// JSON document:
//   { "format": "dimlab-checkpoint", "version": 1,
//     "config": { "architecture", "input_dim", "hidden_sizes", "dropout_rate", "seed" },
//     "parameters": [ { "name", "shape": [..], "data": [..] }, ... ] }
// Doubles are written in shortest round-trip form, so reloading is exact.

inline constexpr int kCheckpointVersion = 1;

inline nlohmann::json model_config_to_json(const ModelConfig& c) {
  return {{"architecture", to_string(c.architecture)},
          {"input_dim", c.input_dim},
          {"hidden_sizes", c.hidden_sizes},
          {"dropout_rate", c.dropout_rate},
          {"seed", c.seed}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.architecture = parse_architecture(j.at("architecture").get<std::string>());
  c.input_dim = j.at("input_dim").get<std::size_t>();
  c.hidden_sizes = j.at("hidden_sizes").get<std::vector<std::size_t>>();
  c.dropout_rate = j.at("dropout_rate").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

inline nlohmann::json checkpoint_to_json(const Model& m) {
  nlohmann::json params = nlohmann::json::array();
  for (const auto& p : m.parameters) {
    params.push_back({{"name", p.name}, {"shape", p.value.shape()}, {"data", p.value.values()}});
  }
  return {{"format", "dimlab-checkpoint"},
          {"version", kCheckpointVersion},
          {"config", model_config_to_json(m.config)},
          {"parameters", std::move(params)}};
}

inline Model checkpoint_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "dimlab-checkpoint") throw DataError("not a dimlab checkpoint");
  if (j.value("version", 0) != kCheckpointVersion) throw DataError("unsupported checkpoint version");
  Model m = build_model(model_config_from_json(j.at("config")));
  const auto& params = j.at("parameters");
  if (params.size() != m.parameters.size()) throw DataError("checkpoint parameter count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& pj = params[i];
    Tensor t(pj.at("shape").get<Shape>(), pj.at("data").get<std::vector<double>>());
    if (pj.at("name").get<std::string>() != m.parameters[i].name || t.shape() != m.parameters[i].value.shape()) {
      throw DataError("checkpoint parameter '" + pj.at("name").get<std::string>() + "' does not match architecture");
    }
    m.parameters[i].value = std::move(t);
  }
  return m;
}

inline void save_checkpoint(const Model& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write checkpoint " + path);
  out << checkpoint_to_json(m).dump() << '\n';
}

inline Model load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read checkpoint " + path);
  return checkpoint_from_json(nlohmann::json::parse(in));
}

}  // namespace dimlab

#pragma once

#include <fstream>
#include <string>

#include <json.hpp>

#include "nadjust/mlp.hpp"

namespace nadjust {

namespace detail {

inline std::string activation_name(Activation a) {
  switch (a) {
    case Activation::sigmoid: return "sigmoid";
    case Activation::relu: return "relu";
    case Activation::linear: return "linear";
  }
  throw InvalidParams("activation_name: unknown activation");
}

inline Activation activation_from_name(const std::string& s) {
  if (s == "sigmoid") return Activation::sigmoid;
  if (s == "relu") return Activation::relu;
  if (s == "linear") return Activation::linear;
  throw ParseError("checkpoint: unknown activation \"" + s + "\"");
}

}  // namespace detail

// Model checkpoints as JSON: layer shapes plus row-major weight arrays and
// bias vectors. Round-trips bit-exactly through the decimal formatter used
// by the JSON library (shortest representation that parses back equal).
inline void save_checkpoint(const std::string& path, const MlpSpec& spec, const NetParams& params) {
  params.validate(spec);
  nlohmann::json j;
  j["format"] = "mlp-checkpoint";
  j["version"] = 1;
  j["layer_sizes"] = spec.layer_sizes;
  j["activation"] = detail::activation_name(spec.activation);
  j["include_input_layer_in_primary"] = spec.include_input_layer_in_primary;
  nlohmann::json weights = nlohmann::json::array();
  for (const Mat& w : params.weights) {
    nlohmann::json layer;
    layer["rows"] = w.rows;
    layer["cols"] = w.cols;
    layer["data"] = w.a;  // row-major
    weights.push_back(std::move(layer));
  }
  j["weights"] = std::move(weights);
  j["biases"] = params.biases;
  std::ofstream out(path);
  if (!out) throw IoError("cannot write checkpoint: " + path);
  out << j.dump(2) << "\n";
  if (!out) throw IoError("failed writing checkpoint: " + path);
}

inline std::pair<MlpSpec, NetParams> load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("checkpoint is not valid JSON: ") + e.what());
  }
  try {
    if (j.at("format") != "mlp-checkpoint")
      throw ParseError("not an mlp-checkpoint file: " + path);
    MlpSpec spec;
    spec.layer_sizes = j.at("layer_sizes").get<std::vector<std::size_t>>();
    spec.activation = detail::activation_from_name(j.at("activation").get<std::string>());
    spec.include_input_layer_in_primary = j.at("include_input_layer_in_primary").get<bool>();
    NetParams params;
    for (const auto& layer : j.at("weights")) {
      Mat w(layer.at("rows").get<std::size_t>(), layer.at("cols").get<std::size_t>());
      const auto data = layer.at("data").get<std::vector<double>>();
      if (data.size() != w.a.size()) throw ParseError("checkpoint weight size mismatch: " + path);
      w.a = data;
      params.weights.push_back(std::move(w));
    }
    params.biases = j.at("biases").get<std::vector<Vec>>();
    params.validate(spec);
    return {spec, params};
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed checkpoint: ") + e.what());
  }
}

}  // namespace nadjust

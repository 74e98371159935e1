#include "cepminer/nn_io.hpp"

#include <fstream>

namespace cepminer::nn {

const char* activation_name(Activation a) {
  switch (a) {
    case Activation::Relu: return "relu";
    case Activation::LeakyRelu: return "leaky_relu";
    case Activation::Linear: return "linear";
  }
  return "linear";
}

Activation activation_from_name(const std::string& name) {
  if (name == "relu") return Activation::Relu;
  if (name == "leaky_relu") return Activation::LeakyRelu;
  if (name == "linear") return Activation::Linear;
  throw std::runtime_error("unknown activation '" + name + "'");
}

std::vector<std::size_t> layer_dims(const DenseNet<double>& net) {
  std::vector<std::size_t> dims{static_cast<std::size_t>(net.input_dim())};
  for (const auto& l : net.layers()) dims.push_back(static_cast<std::size_t>(l.out_dim()));
  return dims;
}

nlohmann::json to_json(const DenseNet<double>& net) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : net.layers()) {
    std::vector<double> w;
    w.reserve(static_cast<std::size_t>(l.weight.size()));
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) w.push_back(l.weight(r, c));
    }
    layers.push_back({{"in", l.in_dim()},
                      {"out", l.out_dim()},
                      {"activation", activation_name(l.activation)},
                      {"weight", w},
                      {"bias", std::vector<double>(l.bias.data(), l.bias.data() + l.bias.size())}});
  }
  return {{"format", "cepminer-densenet"}, {"version", kCheckpointVersion}, {"dropout", net.dropout()}, {"layers", layers}};
}

DenseNet<double> net_from_json(const nlohmann::json& doc, const std::vector<std::size_t>& expected_dims) {
  try {
    if (doc.at("format") != "cepminer-densenet") throw std::runtime_error("not a network checkpoint");
    if (doc.at("version").get<int>() != kCheckpointVersion) throw std::runtime_error("unsupported checkpoint version");
    std::vector<DenseLayer<double>> layers;
    for (const auto& jl : doc.at("layers")) {
      const auto in = jl.at("in").get<Eigen::Index>();
      const auto out = jl.at("out").get<Eigen::Index>();
      const auto w = jl.at("weight").get<std::vector<double>>();
      const auto b = jl.at("bias").get<std::vector<double>>();
      if (static_cast<Eigen::Index>(w.size()) != in * out || static_cast<Eigen::Index>(b.size()) != out) {
        throw std::runtime_error("parameter array length does not match layer shape");
      }
      DenseLayer<double> layer{Eigen::MatrixXd(out, in), Eigen::VectorXd(out),
                               activation_from_name(jl.at("activation").get<std::string>())};
      for (Eigen::Index r = 0; r < out; ++r) {
        for (Eigen::Index c = 0; c < in; ++c) layer.weight(r, c) = w[static_cast<std::size_t>(r * in + c)];
      }
      for (Eigen::Index r = 0; r < out; ++r) layer.bias[r] = b[static_cast<std::size_t>(r)];
      layers.push_back(std::move(layer));
    }
    DenseNet<double> net(std::move(layers), doc.at("dropout").get<double>());
    if (!expected_dims.empty() && layer_dims(net) != expected_dims) {
      throw std::runtime_error("checkpoint layer shapes do not match the configured network");
    }
    if (!net.all_finite()) throw std::runtime_error("checkpoint holds non-finite parameters");
    return net;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("malformed network checkpoint: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error(std::string("malformed network checkpoint: ") + e.what());
  }
}

void write_json_file(const std::filesystem::path& path, const nlohmann::json& doc) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << doc.dump(1) << '\n';
}

nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

}  // namespace cepminer::nn

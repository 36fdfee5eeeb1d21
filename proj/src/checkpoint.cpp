#include "saddle/checkpoint.hpp"

#include "saddle/errors.hpp"

#include <fstream>
#include <map>

namespace saddle {

nlohmann::json architecture_json(const SaddleArchitecture& arch) {
  nlohmann::json j = {{"primitive", to_string(arch.primitive)}};
  if (arch.primitive == Primitive::Icnn) {
    j["hidden"] = arch.icnn.hidden;
    j["activation"] = to_string(arch.icnn.activation);
  } else {
    j["groups"] = arch.max_affine.groups;
    j["pieces"] = arch.max_affine.pieces;
  }
  return j;
}

SaddleArchitecture architecture_from_json(const nlohmann::json& j) {
  SaddleArchitecture a;
  try {
    a.primitive = parse_primitive(j.at("primitive").get<std::string>());
    if (a.primitive == Primitive::Icnn) {
      if (j.contains("hidden")) a.icnn.hidden = j.at("hidden").get<std::vector<Index>>();
      if (j.contains("activation")) a.icnn.activation = parse_activation(j.at("activation").get<std::string>());
    } else {
      if (j.contains("groups")) a.max_affine.groups = j.at("groups").get<Index>();
      if (j.contains("pieces")) a.max_affine.pieces = j.at("pieces").get<Index>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("architecture: ") + e.what());
  }
  return a;
}

namespace {

SaddleArchitecture architecture_of(const SaddleNet& net) {
  SaddleArchitecture a;
  a.primitive = net.u().primitive();
  if (const auto* ic = std::get_if<IcnnParams>(&net.u().params())) {
    a.icnn.activation = ic->activation;
    a.icnn.hidden.clear();
    for (std::size_t k = 0; k + 1 < ic->wx.size(); ++k) a.icnn.hidden.push_back(ic->wx[k].value().rows());
  } else {
    const auto& ma = std::get<MaxAffineParams>(net.u().params());
    a.max_affine.pieces = ma.pieces;
    a.max_affine.groups = ma.combine.value().cols();
  }
  return a;
}

}  // namespace

nlohmann::json checkpoint_json(const SaddleNet& net) {
  nlohmann::json params = nlohmann::json::array();
  for (const Parameter* p : net.parameters()) {
    const Matrix& v = p->value();
    params.push_back({{"name", p->name},
                      {"shape", {v.rows(), v.cols()}},
                      {"values", std::vector<double>(v.data(), v.data() + v.size())}});
  }
  return {{"kind", "saddle_net"},
          {"N", net.rank()},
          {"lambda", net.penalty_weight()},
          {"bilinear", net.bilinear()},
          {"input_dim", net.dim()},
          {"architecture", architecture_json(architecture_of(net))},
          {"parameters", params}};
}

SaddleNet net_from_checkpoint(const nlohmann::json& j) {
  try {
    if (j.value("kind", std::string()) != "saddle_net") throw InputError("checkpoint: kind must be 'saddle_net'");
    const Index n = j.at("N").get<Index>();
    const Index dim = j.at("input_dim").get<Index>();
    const bool bil = j.at("bilinear").get<bool>();
    const double lambda = j.at("lambda").get<double>();
    if (n <= 0 || dim <= 0) throw InputError("checkpoint: N and input_dim must be positive");
    const SaddleArchitecture arch = architecture_from_json(j.at("architecture"));
    Rng rng(0);
    SaddleNet net = SaddleNet::create(dim, n, arch, bil, lambda, rng);

    std::map<std::string, const nlohmann::json*> stored;
    for (const auto& p : j.at("parameters")) {
      const std::string name = p.at("name").get<std::string>();
      if (!stored.emplace(name, &p).second) throw InputError("checkpoint: duplicate parameter '" + name + "'");
    }
    for (Parameter* p : net.parameters()) {
      auto it = stored.find(p->name);
      if (it == stored.end()) throw InputError("checkpoint: missing parameter '" + p->name + "'");
      const auto& e = *it->second;
      const auto shape = e.at("shape").get<std::vector<Index>>();
      const auto values = e.at("values").get<std::vector<double>>();
      if (shape.size() != 2 || shape[0] != p->value().rows() || shape[1] != p->value().cols() ||
          static_cast<Index>(values.size()) != shape[0] * shape[1]) {
        throw InputError("checkpoint: parameter '" + p->name + "' has the wrong shape");
      }
      p->value() = Eigen::Map<const Matrix>(values.data(), shape[0], shape[1]);
      stored.erase(it);
    }
    if (!stored.empty()) throw InputError("checkpoint: unexpected parameter '" + stored.begin()->first + "'");
    return net;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("checkpoint: ") + e.what());
  }
}

void save_checkpoint(const SaddleNet& net, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write checkpoint '" + path + "'");
  out << checkpoint_json(net).dump(1) << '\n';
}

SaddleNet load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open checkpoint '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw InputError("checkpoint '" + path + "': " + e.what());
  }
  return net_from_checkpoint(j);
}

}  // namespace saddle

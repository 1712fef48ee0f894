#include "ace/serialization.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace ace {
namespace {

constexpr int kModelFormatVersion = 1;

const char* space_name(SpaceKind kind) {
  switch (kind) {
    case SpaceKind::image: return "image";
    case SpaceKind::regular: return "regular";
    case SpaceKind::set: return "set";
    case SpaceKind::vector: return "vector";
  }
  return "?";
}

SpaceKind space_from_name(const std::string& name) {
  if (name == "image") return SpaceKind::image;
  if (name == "regular") return SpaceKind::regular;
  if (name == "set") return SpaceKind::set;
  if (name == "vector") return SpaceKind::vector;
  throw std::invalid_argument("model manifest: unknown space kind '" + name + "'");
}

Json hex_array(std::span<const double> values) {
  Json out = Json::array();
  for (double v : values) out.push_back(format_hex(v));
  return out;
}

std::vector<double> parse_hex_array(const Json& json) {
  std::vector<double> out;
  out.reserve(json.size());
  for (const auto& v : json) out.push_back(parse_hex(v.get<std::string>()));
  return out;
}

}  // namespace

std::string format_hex(double value) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), value, std::chars_format::hex);
  if (ec != std::errc()) throw std::runtime_error("format_hex: conversion failed");
  return std::string(buf, end);
}

double parse_hex(const std::string& text) {
  double value = 0.0;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  auto [end, ec] = std::from_chars(first, last, value, std::chars_format::hex);
  if (ec != std::errc() || end != last) throw std::invalid_argument("parse_hex: malformed value '" + text + "'");
  return value;
}

std::string format_decimal(double value) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  return buf;
}

Json tensor_to_json(const Tensor& tensor) {
  return Json{{"shape", tensor.shape()}, {"values", hex_array(tensor.values())}};
}

Tensor tensor_from_json(const Json& json, bool requires_grad) {
  return Tensor(json.at("shape").get<Shape>(), parse_hex_array(json.at("values")), requires_grad);
}

Json representation_to_json(const Representation& rep) {
  return Json{{"kind", space_name(rep.kind)}, {"shape", rep.shape}};
}

Representation representation_from_json(const Json& json) {
  return Representation{space_from_name(json.at("kind").get<std::string>()), json.at("shape").get<Shape>()};
}

Json model_to_json(const HomotopicModel& model) {
  Json layers = Json::array();
  for (const auto& layer : model.layers()) {
    Json eq_weights = Json::array();
    for (const auto& w : layer.eq.weights()) eq_weights.push_back(tensor_to_json(w.tensor()));
    Json matrices = Json::array();
    for (const auto& m : layer.neq.matrices()) matrices.push_back(tensor_to_json(m.tensor()));
    Json power = Json::array();
    for (const auto& u : layer.neq.power_vectors()) power.push_back(hex_array(u));
    layers.push_back(Json{
        {"eq",
         {{"kind", to_string(layer.eq.kind())},
          {"input", representation_to_json(layer.eq.input_rep())},
          {"output", representation_to_json(layer.eq.output_rep())},
          {"weights", eq_weights}}},
        {"neq",
         {{"kind", to_string(layer.neq.kind())},
          {"input_shape", layer.neq.input_shape()},
          {"output_shape", layer.neq.output_shape()},
          {"matrices", matrices},
          {"power_vectors", power}}},
        {"gamma", format_hex(layer.gamma_value())},
    });
  }
  return Json{{"format", "ace-model"},
              {"version", kModelFormatVersion},
              {"readout", to_string(model.readout())},
              {"layers", layers}};
}

HomotopicModel model_from_json(const Json& json) {
  if (json.value("format", "") != "ace-model") throw std::invalid_argument("model manifest: not an ace-model document");
  if (json.value("version", -1) != kModelFormatVersion) {
    throw std::invalid_argument("model manifest: unsupported version " + json.value("version", Json(-1)).dump());
  }
  std::vector<HomotopicLayer> layers;
  for (const auto& lj : json.at("layers")) {
    const auto& ej = lj.at("eq");
    std::vector<Tensor> weights;
    for (const auto& w : ej.at("weights")) weights.push_back(tensor_from_json(w, true));
    EquivariantLayer eq(equivariant_kind_from_string(ej.at("kind").get<std::string>()),
                        representation_from_json(ej.at("input")), representation_from_json(ej.at("output")),
                        std::move(weights));

    const auto& nj = lj.at("neq");
    std::vector<Tensor> matrices;
    for (const auto& m : nj.at("matrices")) matrices.push_back(tensor_from_json(m, true));
    NonEquivariantLayer neq(non_equivariant_kind_from_string(nj.at("kind").get<std::string>()),
                            nj.at("input_shape").get<Shape>(), nj.at("output_shape").get<Shape>(),
                            std::move(matrices));
    for (const auto& u : nj.at("power_vectors")) neq.power_vectors().push_back(parse_hex_array(u));

    Tensor gamma = Tensor::scalar(parse_hex(lj.at("gamma").get<std::string>()), true);
    layers.push_back(HomotopicLayer{std::move(eq), std::move(neq), Parameter(std::move(gamma))});
  }
  return HomotopicModel(std::move(layers), readout_from_string(json.at("readout").get<std::string>()));
}

void save_model(const HomotopicModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("save_model: cannot write " + path.string());
  out << model_to_json(model).dump(1) << '\n';
}

HomotopicModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_model: cannot read " + path.string());
  return model_from_json(Json::parse(in));
}

}  // namespace ace

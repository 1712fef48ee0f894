#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "ace/layers.hpp"

namespace ace {

using Json = nlohmann::json;

/// Lossless text form of a double (hexadecimal significand), and its inverse.
std::string format_hex(double value);
double parse_hex(const std::string& text);

/// Shortest-round-trip-safe decimal with 17 significant digits.
std::string format_decimal(double value);

Json tensor_to_json(const Tensor& tensor);
Tensor tensor_from_json(const Json& json, bool requires_grad);

Json representation_to_json(const Representation& rep);
Representation representation_from_json(const Json& json);

/// Model manifest: layer kinds, spaces, weights, gammas and power-iteration
/// state, with every double stored in hexadecimal so reloading is bit-exact.
Json model_to_json(const HomotopicModel& model);
HomotopicModel model_from_json(const Json& json);

void save_model(const HomotopicModel& model, const std::filesystem::path& path);
HomotopicModel load_model(const std::filesystem::path& path);

}  // namespace ace

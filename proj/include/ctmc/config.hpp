#pragma once

// JSON forms of every configuration type. Readers are strict: unknown keys
// and wrong types are errors naming the offending path. Missing keys take
// the type's defaults. Writers emit every field, so write -> read is exact.

#include "ctmc/experiments.hpp"

#include <json.hpp>

#include <string>

namespace ctmc {

using Json = nlohmann::json;

struct ConfigError : DomainError {
  using DomainError::DomainError;
};

void to_json(Json& j, const NoiseSchedule& v);
void from_json(const Json& j, NoiseSchedule& v);
void to_json(Json& j, const ProcessSpec& v);
void from_json(const Json& j, ProcessSpec& v);
void to_json(Json& j, const OracleMode& v);
void from_json(const Json& j, OracleMode& v);
/// A string when the sampler has a round-trippable name, else an object.
void to_json(Json& j, const SamplerChoice& v);
void from_json(const Json& j, SamplerChoice& v);
void to_json(Json& j, const RestartWindow& v);
void from_json(const Json& j, RestartWindow& v);
void to_json(Json& j, const DcrsConfig& v);
void from_json(const Json& j, DcrsConfig& v);
void to_json(Json& j, const Experiment1DConfig& v);
void from_json(const Json& j, Experiment1DConfig& v);
void to_json(Json& j, const MoGConfig& v);
void from_json(const Json& j, MoGConfig& v);
void to_json(Json& j, const SampleConfig& v);
void from_json(const Json& j, SampleConfig& v);

/// Parses text as T, rethrowing every failure as ConfigError.
template <class T>
T parse_config(const std::string& text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  try {
    return j.get<T>();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
}

std::string read_text_file(const std::string& path);

template <class T>
T load_config(const std::string& path) {
  return parse_config<T>(read_text_file(path));
}

template <class T>
std::string dump_config(const T& value) {
  return Json(value).dump(2);
}

}  // namespace ctmc

#include "akid/experiment.hpp"

namespace akid {

Json ExperimentConfig::to_json() const {
  Json sensor_json = sensor.to_json();
  if (!sensor_seed_given) sensor_json.erase("seed");
  return Json{{"source", source.to_json()}, {"sensor", sensor_json}, {"brain", brain},     {"kongfu", kongfu.to_json()},
              {"engine", engine.to_json()}, {"kid", kid.to_json()},  {"seed", seed}};
}

ExperimentConfig ExperimentConfig::from_json(const Json& config) {
  ObjectReader r(config, "config");
  ExperimentConfig c;
  c.seed = r.get<std::uint64_t>("seed", 0);
  c.source = SourceConfig::from_json(r.required("source"), "source");
  const Json sensor = object_or_empty(r, "sensor");
  c.sensor = SensorConfig::from_json(sensor, "sensor");
  c.sensor_seed_given = sensor.contains("seed");
  if (!c.sensor_seed_given) c.sensor.seed = c.seed;
  // Building the brain validates every block and reference.
  c.brain = Brain::from_config(r.required("brain"), "brain")->config();
  c.kongfu = KongFu::from_json(object_or_empty(r, "kongfu"), "kongfu");
  c.engine = EngineConfig::from_json(object_or_empty(r, "engine"), "engine");
  c.kid = KidConfig::from_json(r.required("kid"), "kid");
  r.finish();
  return c;
}

ExperimentConfig ExperimentConfig::from_file(const std::string& path) { return from_json(parse_json_file(path)); }

void apply_override(Json& doc, const std::string& dotted, const std::string& value) {
  if (dotted.empty()) throw ConfigError("override: empty key");
  Json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const std::size_t dot = dotted.find('.', start);
    const std::string key = dotted.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) throw ConfigError("override " + dotted + ": empty path component");
    if (!node->is_object()) throw ConfigError("override " + dotted + ": " + key + " is not inside an object");
    if (dot == std::string::npos) {
      Json parsed = Json::parse(value, nullptr, false);
      (*node)[key] = parsed.is_discarded() ? Json(value) : parsed;
      return;
    }
    node = &(*node)[key];
    if (node->is_null()) *node = Json::object();
    start = dot + 1;
  }
}

Json metrics_json(const Metrics& m) {
  Json j{{"clock", m.clock}, {"train_loss", m.train_loss}, {"train_accuracy", m.train_accuracy}};
  if (m.val) {
    j["val_loss"] = m.val->loss;
    j["val_accuracy"] = m.val->accuracy;
  }
  return j;
}

std::unique_ptr<Kid> build_kid(const ExperimentConfig& config) {
  return std::make_unique<Kid>(std::make_shared<Source>(config.source), config.sensor,
                               Brain::from_config(config.brain, "brain"), config.kongfu, config.engine, config.kid,
                               config.seed);
}

}  // namespace akid

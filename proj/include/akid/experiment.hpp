#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>

#include "akid/kid.hpp"

namespace akid {

// Declarative description of one training run. Sections: source, sensor,
// brain, kongfu, engine, kid, seed. Unknown keys are rejected with their path.
struct ExperimentConfig {
  SourceConfig source;
  SensorConfig sensor;
  bool sensor_seed_given = false;  // otherwise the sensor follows the global seed
  Json brain;
  KongFu kongfu;
  EngineConfig engine;
  KidConfig kid;
  std::uint64_t seed = 0;

  // Normalized document; parsing it again yields the same document.
  Json to_json() const;
  static ExperimentConfig from_json(const Json& config);
  static ExperimentConfig from_file(const std::string& path);
};

// Sets `dotted` (e.g. "engine.num_towers") in `doc`. The value is read as a
// JSON literal, falling back to a plain string.
void apply_override(Json& doc, const std::string& dotted, const std::string& value);

std::unique_ptr<Kid> build_kid(const ExperimentConfig& config);

// clock, train_loss, train_accuracy and, after a validation, val_loss and
// val_accuracy.
Json metrics_json(const Metrics& m);

}  // namespace akid

#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "akid/brain.hpp"
#include "akid/engine.hpp"
#include "akid/kongfu.hpp"
#include "akid/observer.hpp"
#include "akid/sensor.hpp"

namespace akid {

// --- checkpoint files ---
// "AKCK", u32 version, u32 entry count, then per entry: u16 name length, name,
// u8 rank, u32 extents, f32 values. All integers and values little-endian.

inline constexpr std::uint32_t kCheckpointVersion = 1;

using CheckpointEntries = std::vector<std::pair<std::string, Tensor>>;

void write_checkpoint(const std::string& path, const CheckpointEntries& entries);
CheckpointEntries read_checkpoint(const std::string& path);

// Copies checkpointed parameters and running statistics into `brain`. Missing
// tensors raise LookupError, shape mismatches raise ShapeError; both name the
// tensor.
void load_brain_tensors(Brain& brain, const CheckpointEntries& entries);

// --- driver ---

struct KidConfig {
  std::optional<std::uint64_t> max_steps;
  std::optional<std::uint64_t> max_epoch;
  std::uint64_t val_interval = 50;
  std::string log_dir;  // empty: summaries stay in memory, no checkpoint file
  bool distributions = true;  // parameter percentiles at every validation

  Json to_json() const;
  // Exactly one of max_steps and max_epoch.
  static KidConfig from_json(const Json& config, const std::string& path = "kid");
};

struct ValResult {
  double loss = 0.0;
  double accuracy = 0.0;
};

struct Metrics {
  std::uint64_t clock = 0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  std::optional<ValResult> val;
};

class Kid {
 public:
  Kid(std::shared_ptr<Source> source, SensorConfig sensor, std::unique_ptr<Brain> brain, KongFu kongfu,
      EngineConfig engine, KidConfig config, std::uint64_t seed);

  // Source (when not yet loaded), sensor, brain, validation clone, towers.
  void setup(const Fetcher& fetcher = {});
  bool is_setup() const { return setup_done_; }

  // Trains until the clock reaches `until` (default: the configured budget).
  // Validates every val_interval steps and at the end.
  Metrics practice(std::optional<std::uint64_t> until = std::nullopt);
  // Full pass over the validation split with the inference clone.
  ValResult validate() const;

  std::uint64_t clock() const { return clock_; }
  std::uint64_t total_steps() const;

  void save_checkpoint(const std::string& path) const;
  void load_checkpoint(const std::string& path);

  const Brain& brain() const { return *brain_; }
  Brain& brain() { return *brain_; }
  const FeedSensor& sensor() const { return *sensor_; }
  const KongFu& kongfu() const { return kongfu_; }
  KongFu& kongfu() { return kongfu_; }
  const Engine& engine() const { return engine_; }
  const SummarySink& summaries() const { return *sink_; }
  const KidConfig& config() const { return config_; }

 private:
  void require_setup() const;
  void record_validation();

  std::shared_ptr<Source> source_;
  SensorConfig sensor_config_;
  std::unique_ptr<FeedSensor> sensor_;
  std::unique_ptr<Brain> brain_;
  std::unique_ptr<Brain> val_brain_;
  KongFu kongfu_;
  Engine engine_;
  KidConfig config_;
  std::uint64_t seed_;
  std::uint64_t clock_ = 0;
  std::optional<std::uint64_t> last_val_clock_;
  std::unique_ptr<SummarySink> sink_;
  bool setup_done_ = false;
};

}  // namespace akid

#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "akid/brain.hpp"
#include "akid/kongfu.hpp"

namespace akid {

struct EngineConfig {
  std::string name = "single";  // single | data_parallel
  std::size_t num_towers = 1;

  // "single" always means one tower.
  std::size_t towers() const { return name == "single" ? 1 : num_towers; }

  Json to_json() const;
  // Accepts "num_gpu" as a synonym of "num_towers".
  static EngineConfig from_json(const Json& config, const std::string& path = "engine");
};

struct SubBatch {
  Tensor data;
  Tensor labels;
  std::size_t offset = 0;
};

// Sizes differ by at most one; the first B mod k parts get the extra example.
std::vector<SubBatch> split_batch(const Tensor& data, const Tensor& labels, std::size_t k);

struct StepResult {
  double loss = 0.0;       // size-weighted mean of tower total losses
  double task_loss = 0.0;  // same, without weight decay
  double accuracy = 0.0;
  GradientMap grads;       // size-weighted mean of tower gradients
};

// Data-parallel trainer: every tower is a replica brain that receives a copy
// of the master parameters before each step, computes the loss and gradients
// of its sub-batch on its own thread, and the coordinator applies the weighted
// average to the master with a single optimizer step. Batch norm running
// statistics come from tower 0.
class Engine {
 public:
  explicit Engine(EngineConfig config = {});

  void setup(const Brain& master);
  bool is_setup() const { return !towers_.empty(); }
  const EngineConfig& config() const { return config_; }
  std::size_t num_towers() const { return config_.towers(); }

  // Forward and backward on every tower; nothing is applied to the master.
  StepResult compute(Brain& master, const Tensor& data, const Tensor& labels, std::uint64_t seed, std::uint64_t clock);
  // compute, then one optimizer step on the master parameters.
  StepResult step(Brain& master, const Tensor& data, const Tensor& labels, KongFu& kongfu, std::uint64_t seed,
                  std::uint64_t clock);

  // Copies master parameters and running statistics into every tower.
  void sync_replicas(const Brain& master);

  const Brain& tower(std::size_t i) const { return *towers_.at(i); }
  // Parameter tensors copied by sync_replicas so far.
  std::uint64_t sync_copies() const { return sync_copies_; }
  // Master parameter version; bumped on every optimizer step.
  std::uint64_t generation() const { return generation_.load(); }
  // Towers that saw the master generation change while they computed.
  std::uint64_t torn_reads() const { return torn_reads_.load(); }

 private:
  EngineConfig config_;
  std::vector<std::unique_ptr<Brain>> towers_;
  std::uint64_t synced_generation_ = 0;
  std::uint64_t sync_copies_ = 0;
  std::atomic<std::uint64_t> generation_{0};
  std::atomic<std::uint64_t> torn_reads_{0};
};

}  // namespace akid

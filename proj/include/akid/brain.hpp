#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "akid/blocks.hpp"

namespace akid {

inline constexpr const char* kSystemIn = "system_in";

// Where a block reads one group of inputs from. A delayed reference reads the
// producer's output from the previous pass (zeros before the first) and never
// carries a gradient. It may name any block in the brain, including later
// ones and the consumer itself.
struct InputRef {
  std::string name;
  std::vector<std::size_t> idxs{0};
  bool delayed = false;
  // Per-example shape of a delayed input, used before the producer has run.
  // Defaults to the shape of the consumer's first non-delayed input.
  std::optional<Shape> shape;
};

struct BrainOutput {
  Variable loss;       // task loss plus every block's weight-decay loss
  Variable task_loss;  // the loss block's output 0
  double accuracy = 0.0;
};

// Blocks attached in order form a DAG. Forward order is attach order.
class Brain {
 public:
  explicit Brain(std::string name = "brain");
  Brain(Brain&&) = default;
  Brain& operator=(Brain&&) = default;

  const std::string& name() const { return name_; }

  // Without `inputs` the block consumes every output of the previously attached
  // block; the first block consumes system_in output 0.
  void attach(std::unique_ptr<Block> block, std::optional<std::vector<InputRef>> inputs = std::nullopt);

  void setup(const std::vector<Tensor>& system_inputs, std::uint64_t seed);
  bool is_setup() const { return setup_done_; }

  // Runs every block; call inside a TapeScope to record for backward. Delayed
  // buffers advance after the pass.
  BrainOutput forward(const std::vector<Tensor>& system_inputs, ForwardContext& ctx);

  std::size_t size() const { return blocks_.size(); }
  const Block& block(std::size_t i) const { return *blocks_.at(i); }
  Block& block(std::size_t i) { return *blocks_.at(i); }
  const Block& block(const std::string& name) const;
  const std::vector<InputRef>& inputs_of(std::size_t i) const { return refs_.at(i); }
  std::size_t index_of(const std::string& name) const;
  bool has_loss() const { return loss_index_.has_value(); }

  std::vector<Parameter> params() const;
  Variable param(const std::string& full_name) const;
  std::vector<StateTensor> states() const;
  Mode mode() const { return mode_; }

  // Output `idx` of block `name` from the most recent forward pass (or setup).
  const Tensor& data(const std::string& name, std::size_t idx) const;

  // Inference clone sharing every parameter and running statistic.
  std::unique_ptr<Brain> get_val_copy() const;
  // Train-mode clone with its own storage (a data-parallel tower).
  std::unique_ptr<Brain> clone_replica() const;

  // {"name": ..., "blocks": [block config + optional "inputs"]}
  Json config() const;
  static std::unique_ptr<Brain> from_config(const Json& config, const std::string& path = "brain");

 private:
  struct Source {
    std::size_t block;  // index into blocks_, or npos for system_in
    std::size_t idx;
    bool delayed;
  };
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  std::vector<Variable> gather(std::size_t i, const std::vector<Variable>& system, std::size_t batch) const;
  std::unique_ptr<Brain> clone_with(bool validation) const;

  std::string name_;
  std::vector<std::unique_ptr<Block>> blocks_;
  std::vector<std::vector<InputRef>> refs_;
  std::vector<bool> explicit_refs_;
  std::vector<std::vector<Source>> sources_;
  std::map<std::string, std::size_t, std::less<>> index_;
  std::optional<std::size_t> loss_index_;
  std::vector<std::vector<Variable>> outputs_;
  // Per delayed source, the producer value from the previous pass.
  std::map<std::pair<std::size_t, std::size_t>, Tensor> delayed_;
  std::map<std::pair<std::size_t, std::size_t>, Shape> delayed_shape_;
  std::size_t system_arity_ = 0;
  Mode mode_ = Mode::train;
  bool setup_done_ = false;
};

}  // namespace akid

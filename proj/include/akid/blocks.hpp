#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "akid/autodiff.hpp"
#include "akid/config.hpp"
#include "akid/kernels.hpp"
#include "akid/rng.hpp"

namespace akid {

enum class Mode { train, inference };

struct Parameter {
  std::string name;  // "<brain>/<block>/<var>"
  Variable variable;
  bool is_weight = false;  // subject to weight decay
};

// Non-trainable tensor owned by a block (batch-norm running statistics).
// Validation clones share the storage with the block they came from.
struct StateTensor {
  std::string name;
  std::shared_ptr<Tensor> value;
};

struct InitPara {
  std::string name = "uniform";
  double range = 0.01;
};

struct WeightDecay {
  std::string type = "l2";
  double scale = 0.0;
};

struct ForwardContext {
  Rng* rng = nullptr;        // dropout draws; required in train mode
  bool update_state = true;  // batch-norm running statistics
  bool dry_run = false;      // setup pass: no RNG, no state updates
};

class Block {
 public:
  explicit Block(std::string name);
  virtual ~Block() = default;
  Block& operator=(const Block&) = delete;

  const std::string& name() const { return name_; }
  virtual std::string kind() const = 0;

  const std::string& scope() const { return scope_; }
  virtual void set_scope(std::string scope);
  std::string full_name() const;
  std::string variable_name(std::string_view var) const;

  // Allocates parameters from the input shapes and runs one dry pass to fix
  // the output shapes. Allowed once.
  std::vector<Variable> setup(const std::vector<Variable>& inputs, std::uint64_t seed);
  std::vector<Variable> forward(const std::vector<Variable>& inputs, ForwardContext& ctx);
  bool is_setup() const { return setup_done_; }
  const std::vector<Shape>& input_shapes() const { return input_shapes_; }
  const std::vector<Shape>& output_shapes() const { return output_shapes_; }

  virtual std::vector<Parameter> variables() const { return params_; }
  virtual std::vector<StateTensor> states() const { return states_; }
  // Sum of the block's weight-decay terms; a zero scalar when there are none.
  virtual Variable weight_decay_loss() const;
  virtual bool is_loss() const { return false; }

  Mode mode() const { return mode_; }
  virtual void set_mode(Mode mode) { mode_ = mode; }

  // Same parameters and state storage, inference mode.
  std::unique_ptr<Block> clone_for_validation() const;
  // Independent copies of parameters and state (a data-parallel tower).
  std::unique_ptr<Block> clone_replica() const;

  // Normalized configuration including defaults; make_block accepts it back.
  virtual Json config() const = 0;

 protected:
  friend class SequentialBlock;
  Block(const Block&) = default;

  virtual std::pair<std::size_t, std::size_t> arity() const { return {1, 1}; }
  virtual std::vector<Variable> setup_impl(const std::vector<Variable>& inputs, std::uint64_t seed);
  virtual void allocate(const std::vector<Shape>& input_shapes, std::uint64_t seed);
  virtual std::vector<Variable> compute(const std::vector<Variable>& inputs, ForwardContext& ctx) = 0;
  virtual std::unique_ptr<Block> copy() const = 0;
  virtual void detach_storage();

  const Variable& add_parameter(std::string_view local, Tensor init, bool is_weight);
  std::shared_ptr<Tensor> add_state(std::string_view local, Tensor init);
  Tensor init_tensor(const Shape& shape, const InitPara& init, std::string_view local, std::uint64_t seed) const;
  Json base_config() const;

  std::vector<Parameter> params_;
  std::vector<StateTensor> states_;
  WeightDecay wd_;

 private:
  void check_inputs(const std::vector<Variable>& inputs) const;

  std::string name_;
  std::string scope_;
  Mode mode_ = Mode::train;
  bool setup_done_ = false;
  std::vector<Shape> input_shapes_;
  std::vector<Shape> output_shapes_;
};

template <class Derived>
class BlockBase : public Block {
 public:
  using Block::Block;

 protected:
  std::unique_ptr<Block> copy() const override { return std::unique_ptr<Block>(new Derived(static_cast<const Derived&>(*this))); }
};

// --- layers ---

struct ConvolutionConfig {
  std::size_t kh = 5, kw = 5;
  std::size_t sh = 1, sw = 1;
  kernels::Padding padding = kernels::Padding::same;
  std::size_t out_channel_num = 0;
  InitPara init_para;
  WeightDecay wd;
};

class ConvolutionLayer : public BlockBase<ConvolutionLayer> {
 public:
  ConvolutionLayer(std::string name, ConvolutionConfig config);
  std::string kind() const override { return "convolution"; }
  Json config() const override;
  const ConvolutionConfig& settings() const { return config_; }
  const Variable& weights() const { return params_.at(0).variable; }
  const Variable& biases() const { return params_.at(1).variable; }

 protected:
  void allocate(const std::vector<Shape>& input_shapes, std::uint64_t seed) override;
  std::vector<Variable> compute(const std::vector<Variable>& inputs, ForwardContext& ctx) override;

 private:
  ConvolutionConfig config_;
};

struct PoolingConfig {
  kernels::Window2d window{2, 2, 2, 2, kernels::Padding::same};
};

class PoolingLayer : public BlockBase<PoolingLayer> {
 public:
  PoolingLayer(std::string name, PoolingConfig config);
  std::string kind() const override { return "pooling"; }
  Json config() const override;

 protected:
  std::vector<Variable> compute(const std::vector<Variable>& inputs, ForwardContext& ctx) override;

 private:
  PoolingConfig config_;
};

class ReLULayer : public BlockBase<ReLULayer> {
 public:
  explicit ReLULayer(std::string name) : BlockBase(std::move(name)) {}
  std::string kind() const override { return "relu"; }
  Json config() const override { return base_config(); }

 protected:
  std::vector<Variable> compute(const std::vector<Variable>& inputs, ForwardContext& ctx) override;
};

class MaxoutLayer : public BlockBase<MaxoutLayer> {
 public:
  MaxoutLayer(std::string name, std::size_t group_size);
  std::string kind() const override { return "maxout"; }
  Json config() const override;

 protected:
  std::vector<Variable> compute(const std::vector<Variable>& inputs, ForwardContext& ctx) override;

 private:
  std::size_t group_size_;
};

struct InnerProductConfig {
  std::size_t out_channel_num = 0;
  InitPara init_para;
  WeightDecay wd;
};

class InnerProductLayer : public BlockBase<InnerProductLayer> {
 public:
  InnerProductLayer(std::string name, InnerProductConfig config);
  std::string kind() const override { return "inner_product"; }
  Json config() const override;
  const Variable& weights() const { return params_.at(0).variable; }
  const Variable& biases() const { return params_.at(1).variable; }

 protected:
  void allocate(const std::vector<Shape>& input_shapes, std::uint64_t seed) override;
  std::vector<Variable> compute(const std::vector<Variable>& inputs, ForwardContext& ctx) override;

 private:
  InnerProductConfig config_;
};

struct BatchNormConfig {
  double momentum = 0.99;
  double epsilon = 1e-5;
};

// gamma starts at 1, beta at 0. Train mode normalizes with batch statistics
// and folds them into the running statistics; inference mode uses the latter.
class BatchNormalizationLayer : public BlockBase<BatchNormalizationLayer> {
 public:
  BatchNormalizationLayer(std::string name, BatchNormConfig config);
  std::string kind() const override { return "batch_normalization"; }
  Json config() const override;
  const Tensor& running_mean() const { return *states_.at(0).value; }
  const Tensor& running_var() const { return *states_.at(1).value; }

 protected:
  void allocate(const std::vector<Shape>& input_shapes, std::uint64_t seed) override;
  std::vector<Variable> compute(const std::vector<Variable>& inputs, ForwardContext& ctx) override;

 private:
  BatchNormConfig config_;
};

class DropoutLayer : public BlockBase<DropoutLayer> {
 public:
  DropoutLayer(std::string name, double keep_prob);
  std::string kind() const override { return "dropout"; }
  Json config() const override;

 protected:
  std::vector<Variable> compute(const std::vector<Variable>& inputs, ForwardContext& ctx) override;

 private:
  double keep_prob_;
};

// Inputs: logits [N,K] and labels [N]. Outputs: mean loss (scalar),
// probabilities [N,K] and accuracy (scalar).
class SoftmaxWithLossLayer : public BlockBase<SoftmaxWithLossLayer> {
 public:
  SoftmaxWithLossLayer(std::string name, std::size_t class_num);
  std::string kind() const override { return "softmax_with_loss"; }
  Json config() const override;
  bool is_loss() const override { return true; }

 protected:
  std::pair<std::size_t, std::size_t> arity() const override { return {2, 2}; }
  std::vector<Variable> compute(const std::vector<Variable>& inputs, ForwardContext& ctx) override;

 private:
  std::size_t class_num_;
};

// Elementwise sum of two or more same-shaped inputs (residual joins).
class AddLayer : public BlockBase<AddLayer> {
 public:
  explicit AddLayer(std::string name) : BlockBase(std::move(name)) {}
  std::string kind() const override { return "add"; }
  Json config() const override { return base_config(); }

 protected:
  std::pair<std::size_t, std::size_t> arity() const override { return {2, 64}; }
  std::vector<Variable> compute(const std::vector<Variable>& inputs, ForwardContext& ctx) override;
};

// A chain of sub-blocks run as one block; kind() is the config's "type". Sub-block variables are named
// "<scope>/<block>/<sub-block>/<var>".
class SequentialBlock : public Block {
 public:
  SequentialBlock(std::string name, std::vector<std::unique_ptr<Block>> children, Json config);
  std::string kind() const override { return kind_; }
  Json config() const override { return config_; }

  void set_scope(std::string scope) override;
  void set_mode(Mode mode) override;
  std::vector<Parameter> variables() const override;
  std::vector<StateTensor> states() const override;
  Variable weight_decay_loss() const override;

  std::size_t size() const { return children_.size(); }
  const Block& child(std::size_t i) const { return *children_.at(i); }

 protected:
  SequentialBlock(const SequentialBlock& other);
  std::vector<Variable> setup_impl(const std::vector<Variable>& inputs, std::uint64_t seed) override;
  std::vector<Variable> compute(const std::vector<Variable>& inputs, ForwardContext& ctx) override;
  std::unique_ptr<Block> copy() const override;
  void detach_storage() override;

 private:
  std::vector<std::unique_ptr<Block>> children_;
  Json config_;
  std::string kind_ = "sequential";
};

// conv -> batch norm (if "bn") -> relu | maxout -> max pool -> dropout (if
// "keep_prob" < 1). Keys: name, ksize, strides, padding, out_channel_num,
// init_para, wd, activation, pool_size, pool_stride, keep_prob, bn.
std::unique_ptr<Block> cnn_block(const Json& config);

// Builds any block from its JSON config. "type" selects the kind; "name" is
// required. Reads from `reader` without calling finish(), so the caller can
// consume extra keys (a brain's "inputs") first.
std::unique_ptr<Block> make_block(ObjectReader& reader);
std::unique_ptr<Block> make_block(const Json& config, const std::string& path = "block");

// ksize/strides accept [h, w] or the NHWC form [1, h, w, 1].
std::pair<std::size_t, std::size_t> parse_window_pair(const Json& value, const std::string& path);

}  // namespace akid

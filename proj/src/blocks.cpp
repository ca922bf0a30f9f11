#include "akid/blocks.hpp"

#include "akid/ops.hpp"

namespace akid {

namespace {

std::string shapes_to_string(const std::vector<Shape>& shapes) {
  std::string out;
  for (std::size_t i = 0; i < shapes.size(); ++i) out += (i ? ", " : "") + shapes[i].to_string();
  return out;
}

Json init_to_json(const InitPara& init) { return Json{{"name", init.name}, {"range", init.range}}; }
Json wd_to_json(const WeightDecay& wd) { return Json{{"type", wd.type}, {"scale", wd.scale}}; }

InitPara read_init(ObjectReader& reader) {
  InitPara init;
  const Json* value = reader.optional("init_para");
  if (value == nullptr) return init;
  ObjectReader r(*value, reader.path("init_para"));
  init.name = r.get<std::string>("name", init.name);
  init.range = r.get<double>("range", init.range);
  r.finish();
  if (init.name != "uniform") throw ConfigError(r.path("name") + ": unknown initializer \"" + init.name + "\"");
  if (init.range < 0.0) throw ConfigError(r.path("range") + ": must be >= 0");
  return init;
}

WeightDecay read_wd(ObjectReader& reader) {
  WeightDecay wd;
  const Json* value = reader.optional("wd");
  if (value == nullptr) return wd;
  ObjectReader r(*value, reader.path("wd"));
  wd.type = r.get<std::string>("type", wd.type);
  wd.scale = r.get<double>("scale", wd.scale);
  r.finish();
  if (wd.type != "l2") throw ConfigError(r.path("type") + ": unknown weight decay \"" + wd.type + "\"");
  if (wd.scale < 0.0) throw ConfigError(r.path("scale") + ": must be >= 0");
  return wd;
}

kernels::Padding read_padding(ObjectReader& reader, kernels::Padding fallback) {
  const Json* value = reader.optional("padding");
  if (value == nullptr) return fallback;
  try {
    return kernels::parse_padding(ObjectReader::convert<std::string>(*value, reader.path("padding")));
  } catch (const ConfigError& e) {
    throw ConfigError(reader.path("padding") + ": " + e.what());
  }
}

std::pair<std::size_t, std::size_t> read_pair(ObjectReader& reader, std::string_view key,
                                              std::pair<std::size_t, std::size_t> fallback) {
  const Json* value = reader.optional(key);
  return value == nullptr ? fallback : parse_window_pair(*value, reader.path(key));
}

double read_keep_prob(ObjectReader& reader, double fallback) {
  const double keep = reader.get<double>("keep_prob", fallback);
  if (!(keep > 0.0 && keep <= 1.0)) throw ConfigError(reader.path("keep_prob") + ": must be in (0, 1]");
  return keep;
}

std::size_t require_positive(std::size_t value, const std::string& what) {
  if (value == 0) throw ConfigError(what + " must be >= 1");
  return value;
}

Json pair_json(std::size_t a, std::size_t b) { return Json::array({a, b}); }

}  // namespace

std::pair<std::size_t, std::size_t> parse_window_pair(const Json& value, const std::string& path) {
  const auto extents = ObjectReader::convert<std::vector<std::size_t>>(value, path);
  if (extents.size() == 2) return {extents[0], extents[1]};
  if (extents.size() == 4) {
    if (extents[0] != 1 || extents[3] != 1) throw ConfigError(path + ": batch and channel entries must be 1");
    return {extents[1], extents[2]};
  }
  throw ConfigError(path + ": expected [h, w] or [1, h, w, 1]");
}

// ------------------------------------------------------------------ Block

Block::Block(std::string name) : name_(std::move(name)) {
  if (name_.empty()) throw ConfigError("block name must be non-empty");
  if (name_.find('/') != std::string::npos) throw ConfigError("block name \"" + name_ + "\" must not contain '/'");
}

void Block::set_scope(std::string scope) {
  scope_ = std::move(scope);
  for (auto& p : params_) p.name = variable_name(p.name.substr(p.name.rfind('/') + 1));
  for (auto& s : states_) s.name = variable_name(s.name.substr(s.name.rfind('/') + 1));
}

std::string Block::full_name() const { return scope_.empty() ? name_ : scope_ + "/" + name_; }

std::string Block::variable_name(std::string_view var) const { return full_name() + "/" + std::string(var); }

std::vector<Variable> Block::setup(const std::vector<Variable>& inputs, std::uint64_t seed) {
  if (setup_done_) throw StateError(full_name() + ": setup may only be called once");
  const auto [lo, hi] = arity();
  if (inputs.size() < lo || inputs.size() > hi) {
    throw ConfigError(full_name() + ": expected " + std::to_string(lo) + (lo == hi ? "" : "-" + std::to_string(hi)) +
                      " inputs, got " + std::to_string(inputs.size()));
  }
  std::vector<Shape> shapes;
  for (const auto& v : inputs) shapes.push_back(v.shape());
  std::vector<Variable> outputs;
  try {
    outputs = setup_impl(inputs, seed);
  } catch (const ShapeError& e) {
    throw ShapeError(full_name() + " (inputs " + shapes_to_string(shapes) + "): " + e.what());
  }
  input_shapes_ = std::move(shapes);
  output_shapes_.clear();
  for (const auto& v : outputs) output_shapes_.push_back(v.shape());
  setup_done_ = true;
  return outputs;
}

std::vector<Variable> Block::setup_impl(const std::vector<Variable>& inputs, std::uint64_t seed) {
  std::vector<Shape> shapes;
  for (const auto& v : inputs) shapes.push_back(v.shape());
  allocate(shapes, seed);
  ForwardContext ctx;
  ctx.update_state = false;
  ctx.dry_run = true;
  return compute(inputs, ctx);
}

void Block::allocate(const std::vector<Shape>&, std::uint64_t) {}

void Block::check_inputs(const std::vector<Variable>& inputs) const {
  if (inputs.size() != input_shapes_.size()) {
    throw ShapeError(full_name() + ": expected " + std::to_string(input_shapes_.size()) + " inputs, got " +
                     std::to_string(inputs.size()));
  }
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const Shape& got = inputs[i].shape();
    const Shape& want = input_shapes_[i];
    const bool ok = got.rank() == want.rank() && (want.rank() == 0 || want.with_leading(got[0]) == got);
    if (!ok) {
      throw ShapeError(full_name() + ": input " + std::to_string(i) + " has shape " + got.to_string() +
                       ", set up with " + want.to_string() + " (batch axis may differ)");
    }
  }
}

std::vector<Variable> Block::forward(const std::vector<Variable>& inputs, ForwardContext& ctx) {
  if (!setup_done_) throw StateError(full_name() + ": forward before setup");
  check_inputs(inputs);
  return compute(inputs, ctx);
}

Variable Block::weight_decay_loss() const {
  Variable total;
  if (wd_.scale > 0.0) {
    for (const auto& p : params_) {
      if (!p.is_weight) continue;
      Variable term = ops::l2_loss(p.variable, wd_.scale);
      total = total ? ops::add(total, term) : term;
    }
  }
  if (!total) {
    const DType dtype = params_.empty() ? default_dtype() : params_.front().variable.value().dtype();
    total = Variable::constant(Tensor::scalar(0.0, dtype));
  }
  return total;
}

std::unique_ptr<Block> Block::clone_for_validation() const {
  auto clone = copy();
  clone->set_mode(Mode::inference);
  return clone;
}

std::unique_ptr<Block> Block::clone_replica() const {
  auto clone = copy();
  clone->detach_storage();
  return clone;
}

void Block::detach_storage() {
  for (auto& p : params_) p.variable = p.variable.deep_copy();
  for (auto& s : states_) s.value = std::make_shared<Tensor>(*s.value);
}

const Variable& Block::add_parameter(std::string_view local, Tensor init, bool is_weight) {
  params_.push_back({variable_name(local), Variable::parameter(std::move(init)), is_weight});
  return params_.back().variable;
}

std::shared_ptr<Tensor> Block::add_state(std::string_view local, Tensor init) {
  states_.push_back({variable_name(local), std::make_shared<Tensor>(std::move(init))});
  return states_.back().value;
}

Tensor Block::init_tensor(const Shape& shape, const InitPara& init, std::string_view local, std::uint64_t seed) const {
  Tensor t = Tensor::zeros(shape);
  if (init.range == 0.0) return t;
  Rng rng(mix_seed(seed, hash_name(variable_name(local))), hash_name(local));
  for (std::size_t i = 0; i < t.numel(); ++i) t.set(i, rng.uniform(-init.range, init.range));
  return t;
}

Json Block::base_config() const { return Json{{"type", kind()}, {"name", name_}}; }

// ------------------------------------------------------------------ layers

ConvolutionLayer::ConvolutionLayer(std::string name, ConvolutionConfig config)
    : BlockBase(std::move(name)), config_(std::move(config)) {
  require_positive(config_.out_channel_num, full_name() + ": out_channel_num");
  require_positive(config_.kh * config_.kw, full_name() + ": ksize");
  require_positive(config_.sh * config_.sw, full_name() + ": strides");
  wd_ = config_.wd;
}

Json ConvolutionLayer::config() const {
  Json j = base_config();
  j["ksize"] = pair_json(config_.kh, config_.kw);
  j["strides"] = pair_json(config_.sh, config_.sw);
  j["padding"] = kernels::to_string(config_.padding);
  j["out_channel_num"] = config_.out_channel_num;
  j["init_para"] = init_to_json(config_.init_para);
  j["wd"] = wd_to_json(config_.wd);
  return j;
}

void ConvolutionLayer::allocate(const std::vector<Shape>& input_shapes, std::uint64_t seed) {
  const Shape& x = input_shapes[0];
  if (x.rank() != 4) throw ShapeError("convolution expects [N,H,W,C] input");
  add_parameter("weights", init_tensor(Shape{config_.kh, config_.kw, x[3], config_.out_channel_num}, config_.init_para, "weights", seed), true);
  add_parameter("biases", Tensor::zeros(Shape{config_.out_channel_num}), false);
}

std::vector<Variable> ConvolutionLayer::compute(const std::vector<Variable>& inputs, ForwardContext&) {
  return {ops::conv2d(inputs[0], weights(), biases(), config_.sh, config_.sw, config_.padding)};
}

PoolingLayer::PoolingLayer(std::string name, PoolingConfig config) : BlockBase(std::move(name)), config_(config) {
  const auto& w = config_.window;
  require_positive(w.kh * w.kw, full_name() + ": ksize");
  require_positive(w.sh * w.sw, full_name() + ": strides");
}

Json PoolingLayer::config() const {
  Json j = base_config();
  const auto& w = config_.window;
  j["ksize"] = pair_json(w.kh, w.kw);
  j["strides"] = pair_json(w.sh, w.sw);
  j["padding"] = kernels::to_string(w.padding);
  return j;
}

std::vector<Variable> PoolingLayer::compute(const std::vector<Variable>& inputs, ForwardContext&) {
  return {ops::maxpool2d(inputs[0], config_.window)};
}

std::vector<Variable> ReLULayer::compute(const std::vector<Variable>& inputs, ForwardContext&) {
  return {ops::relu(inputs[0])};
}

MaxoutLayer::MaxoutLayer(std::string name, std::size_t group_size) : BlockBase(std::move(name)), group_size_(group_size) {
  require_positive(group_size_, full_name() + ": group_size");
}

Json MaxoutLayer::config() const {
  Json j = base_config();
  j["group_size"] = group_size_;
  return j;
}

std::vector<Variable> MaxoutLayer::compute(const std::vector<Variable>& inputs, ForwardContext&) {
  return {ops::maxout(inputs[0], group_size_)};
}

InnerProductLayer::InnerProductLayer(std::string name, InnerProductConfig config)
    : BlockBase(std::move(name)), config_(std::move(config)) {
  require_positive(config_.out_channel_num, full_name() + ": out_channel_num");
  wd_ = config_.wd;
}

Json InnerProductLayer::config() const {
  Json j = base_config();
  j["out_channel_num"] = config_.out_channel_num;
  j["init_para"] = init_to_json(config_.init_para);
  j["wd"] = wd_to_json(config_.wd);
  return j;
}

void InnerProductLayer::allocate(const std::vector<Shape>& input_shapes, std::uint64_t seed) {
  const Shape& x = input_shapes[0];
  if (x.rank() < 2) throw ShapeError("inner product expects a batched input of rank >= 2");
  const std::size_t d = x.numel() / x[0];
  add_parameter("weights", init_tensor(Shape{d, config_.out_channel_num}, config_.init_para, "weights", seed), true);
  add_parameter("biases", Tensor::zeros(Shape{config_.out_channel_num}), false);
}

std::vector<Variable> InnerProductLayer::compute(const std::vector<Variable>& inputs, ForwardContext&) {
  return {ops::inner_product(inputs[0], weights(), biases())};
}

BatchNormalizationLayer::BatchNormalizationLayer(std::string name, BatchNormConfig config)
    : BlockBase(std::move(name)), config_(config) {
  if (!(config_.momentum >= 0.0 && config_.momentum < 1.0)) throw ConfigError(full_name() + ": momentum must be in [0, 1)");
  if (!(config_.epsilon > 0.0)) throw ConfigError(full_name() + ": epsilon must be > 0");
}

Json BatchNormalizationLayer::config() const {
  Json j = base_config();
  j["momentum"] = config_.momentum;
  j["epsilon"] = config_.epsilon;
  return j;
}

void BatchNormalizationLayer::allocate(const std::vector<Shape>& input_shapes, std::uint64_t) {
  const Shape& x = input_shapes[0];
  if (x.rank() < 2) throw ShapeError("batch normalization expects a batched input of rank >= 2");
  const Shape c{x[x.rank() - 1]};
  add_parameter("gamma", Tensor::full(c, 1.0), false);
  add_parameter("beta", Tensor::zeros(c), false);
  add_state("moving_mean", Tensor::zeros(c));
  add_state("moving_var", Tensor::full(c, 1.0));
}

std::vector<Variable> BatchNormalizationLayer::compute(const std::vector<Variable>& inputs, ForwardContext& ctx) {
  const Variable& gamma = params_[0].variable;
  const Variable& beta = params_[1].variable;
  Tensor& running_mean = *states_[0].value;
  Tensor& running_var = *states_[1].value;
  if (mode() == Mode::inference) {
    return {ops::batch_norm_inference(inputs[0], gamma, beta, running_mean, running_var, config_.epsilon)};
  }
  ops::BatchStatistics stats;
  Variable out = ops::batch_norm_train(inputs[0], gamma, beta, config_.epsilon, &stats);
  if (ctx.update_state && !ctx.dry_run) {
    running_mean = kernels::moving_average(running_mean, stats.mean, config_.momentum);
    running_var = kernels::moving_average(running_var, stats.var, config_.momentum);
  }
  return {out};
}

DropoutLayer::DropoutLayer(std::string name, double keep_prob) : BlockBase(std::move(name)), keep_prob_(keep_prob) {
  if (!(keep_prob_ > 0.0 && keep_prob_ <= 1.0)) throw ConfigError(full_name() + ": keep_prob must be in (0, 1]");
}

Json DropoutLayer::config() const {
  Json j = base_config();
  j["keep_prob"] = keep_prob_;
  return j;
}

std::vector<Variable> DropoutLayer::compute(const std::vector<Variable>& inputs, ForwardContext& ctx) {
  if (mode() == Mode::inference || ctx.dry_run || keep_prob_ == 1.0) return {inputs[0]};
  if (ctx.rng == nullptr) throw StateError(full_name() + ": train-mode dropout needs an rng");
  return {ops::dropout(inputs[0], keep_prob_, *ctx.rng)};
}

SoftmaxWithLossLayer::SoftmaxWithLossLayer(std::string name, std::size_t class_num)
    : BlockBase(std::move(name)), class_num_(class_num) {
  if (class_num_ < 2) throw ConfigError(full_name() + ": class_num must be >= 2");
}

Json SoftmaxWithLossLayer::config() const {
  Json j = base_config();
  j["class_num"] = class_num_;
  return j;
}

std::vector<Variable> SoftmaxWithLossLayer::compute(const std::vector<Variable>& inputs, ForwardContext&) {
  const Shape& logits = inputs[0].shape();
  if (logits.rank() != 2 || logits[1] != class_num_) {
    throw ShapeError("logits must be [N," + std::to_string(class_num_) + "], got " + logits.to_string());
  }
  const Shape& labels = inputs[1].shape();
  if (labels.rank() != 1 || labels[0] != logits[0]) {
    throw ShapeError("labels must be [" + std::to_string(logits[0]) + "], got " + labels.to_string());
  }
  auto result = ops::softmax_cross_entropy(inputs[0], kernels::labels_from_tensor(inputs[1].value()));
  const DType dtype = inputs[0].value().dtype();
  return {result.loss, Variable::constant(std::move(result.probabilities)),
          Variable::constant(Tensor::scalar(result.accuracy, dtype))};
}

std::vector<Variable> AddLayer::compute(const std::vector<Variable>& inputs, ForwardContext&) {
  Variable out = inputs[0];
  for (std::size_t i = 1; i < inputs.size(); ++i) out = ops::add(out, inputs[i]);
  return {out};
}

// ------------------------------------------------------------------ sequential

SequentialBlock::SequentialBlock(std::string name, std::vector<std::unique_ptr<Block>> children, Json config)
    : Block(std::move(name)), children_(std::move(children)), config_(std::move(config)) {
  if (children_.empty()) throw ConfigError(full_name() + ": a sequential block needs at least one sub-block");
  if (config_.contains("type") && config_["type"].is_string()) kind_ = config_["type"].get<std::string>();
  for (auto& c : children_) c->set_scope(full_name());
}

SequentialBlock::SequentialBlock(const SequentialBlock& other)
    : Block(other), config_(other.config_), kind_(other.kind_) {
  for (const auto& c : other.children_) children_.push_back(c->copy());
}

std::unique_ptr<Block> SequentialBlock::copy() const { return std::unique_ptr<Block>(new SequentialBlock(*this)); }

void SequentialBlock::detach_storage() {
  for (auto& c : children_) c->detach_storage();
}

void SequentialBlock::set_scope(std::string scope) {
  Block::set_scope(std::move(scope));
  for (auto& c : children_) c->set_scope(full_name());
}

void SequentialBlock::set_mode(Mode mode) {
  Block::set_mode(mode);
  for (auto& c : children_) c->set_mode(mode);
}

std::vector<Parameter> SequentialBlock::variables() const {
  std::vector<Parameter> out;
  for (const auto& c : children_) {
    auto vars = c->variables();
    out.insert(out.end(), vars.begin(), vars.end());
  }
  return out;
}

std::vector<StateTensor> SequentialBlock::states() const {
  std::vector<StateTensor> out;
  for (const auto& c : children_) {
    auto s = c->states();
    out.insert(out.end(), s.begin(), s.end());
  }
  return out;
}

Variable SequentialBlock::weight_decay_loss() const {
  Variable total;
  for (const auto& c : children_) {
    Variable term = c->weight_decay_loss();
    total = total ? ops::add(total, term) : term;
  }
  return total;
}

std::vector<Variable> SequentialBlock::setup_impl(const std::vector<Variable>& inputs, std::uint64_t seed) {
  std::vector<Variable> x = inputs;
  for (auto& c : children_) x = c->setup(x, seed);
  return x;
}

std::vector<Variable> SequentialBlock::compute(const std::vector<Variable>& inputs, ForwardContext& ctx) {
  std::vector<Variable> x = inputs;
  for (auto& c : children_) x = c->forward(x, ctx);
  return x;
}

// ------------------------------------------------------------------ factories

namespace {

std::unique_ptr<Block> cnn_block_from(ObjectReader& r, const std::string& name) {
  ConvolutionConfig conv;
  std::tie(conv.kh, conv.kw) = read_pair(r, "ksize", {conv.kh, conv.kw});
  std::tie(conv.sh, conv.sw) = read_pair(r, "strides", {conv.sh, conv.sw});
  conv.padding = read_padding(r, conv.padding);
  conv.out_channel_num = r.get<std::size_t>("out_channel_num");
  conv.init_para = read_init(r);
  conv.wd = read_wd(r);

  std::string activation = "relu";
  std::size_t group_size = 1;
  if (const Json* a = r.optional("activation")) {
    ObjectReader ar(*a, r.path("activation"));
    activation = ar.get<std::string>("type");
    if (activation == "maxout") {
      group_size = ar.get<std::size_t>("group_size");
    } else if (activation != "relu") {
      throw ConfigError(ar.path("type") + ": unknown activation \"" + activation + "\" (expected relu or maxout)");
    }
    ar.finish();
  }
  PoolingConfig pool;
  std::tie(pool.window.kh, pool.window.kw) = read_pair(r, "pool_size", {2, 2});
  std::tie(pool.window.sh, pool.window.sw) =
      read_pair(r, "pool_stride", {pool.window.kh, pool.window.kw});
  const double keep_prob = read_keep_prob(r, 1.0);
  const bool bn = r.get<bool>("bn", false);

  std::vector<std::unique_ptr<Block>> children;
  children.push_back(std::make_unique<ConvolutionLayer>("conv", conv));
  if (bn) children.push_back(std::make_unique<BatchNormalizationLayer>("bn", BatchNormConfig{}));
  if (activation == "maxout") {
    children.push_back(std::make_unique<MaxoutLayer>("maxout", group_size));
  } else {
    children.push_back(std::make_unique<ReLULayer>("relu"));
  }
  children.push_back(std::make_unique<PoolingLayer>("pool", pool));
  if (keep_prob < 1.0) children.push_back(std::make_unique<DropoutLayer>("dropout", keep_prob));

  Json normalized{{"type", "cnn_block"},
                  {"name", name},
                  {"ksize", pair_json(conv.kh, conv.kw)},
                  {"strides", pair_json(conv.sh, conv.sw)},
                  {"padding", kernels::to_string(conv.padding)},
                  {"out_channel_num", conv.out_channel_num},
                  {"init_para", init_to_json(conv.init_para)},
                  {"wd", wd_to_json(conv.wd)},
                  {"activation", activation == "maxout" ? Json{{"type", "maxout"}, {"group_size", group_size}}
                                                        : Json{{"type", "relu"}}},
                  {"pool_size", pair_json(pool.window.kh, pool.window.kw)},
                  {"pool_stride", pair_json(pool.window.sh, pool.window.sw)},
                  {"keep_prob", keep_prob},
                  {"bn", bn}};
  return std::make_unique<SequentialBlock>(name, std::move(children), std::move(normalized));
}

}  // namespace

std::unique_ptr<Block> cnn_block(const Json& config) {
  ObjectReader r(config, "cnn_block");
  const std::string type = r.get<std::string>("type", "cnn_block");
  if (type != "cnn_block") throw ConfigError(r.path("type") + ": expected \"cnn_block\"");
  auto block = cnn_block_from(r, r.get<std::string>("name"));
  r.finish();
  return block;
}

std::unique_ptr<Block> make_block(ObjectReader& r) {
  const std::string type = r.get<std::string>("type");
  const std::string name = r.get<std::string>("name");
  try {
    if (type == "convolution") {
      ConvolutionConfig c;
      std::tie(c.kh, c.kw) = read_pair(r, "ksize", {c.kh, c.kw});
      std::tie(c.sh, c.sw) = read_pair(r, "strides", {c.sh, c.sw});
      c.padding = read_padding(r, c.padding);
      c.out_channel_num = r.get<std::size_t>("out_channel_num");
      c.init_para = read_init(r);
      c.wd = read_wd(r);
      return std::make_unique<ConvolutionLayer>(name, c);
    }
    if (type == "pooling") {
      PoolingConfig c;
      std::tie(c.window.kh, c.window.kw) = read_pair(r, "ksize", {c.window.kh, c.window.kw});
      std::tie(c.window.sh, c.window.sw) = read_pair(r, "strides", {c.window.kh, c.window.kw});
      c.window.padding = read_padding(r, c.window.padding);
      return std::make_unique<PoolingLayer>(name, c);
    }
    if (type == "relu") return std::make_unique<ReLULayer>(name);
    if (type == "maxout") return std::make_unique<MaxoutLayer>(name, r.get<std::size_t>("group_size"));
    if (type == "inner_product") {
      InnerProductConfig c;
      c.out_channel_num = r.get<std::size_t>("out_channel_num");
      c.init_para = read_init(r);
      c.wd = read_wd(r);
      return std::make_unique<InnerProductLayer>(name, c);
    }
    if (type == "batch_normalization") {
      BatchNormConfig c;
      c.momentum = r.get<double>("momentum", c.momentum);
      c.epsilon = r.get<double>("epsilon", c.epsilon);
      return std::make_unique<BatchNormalizationLayer>(name, c);
    }
    if (type == "dropout") return std::make_unique<DropoutLayer>(name, read_keep_prob(r, 0.5));
    if (type == "softmax_with_loss") return std::make_unique<SoftmaxWithLossLayer>(name, r.get<std::size_t>("class_num"));
    if (type == "add") return std::make_unique<AddLayer>(name);
    if (type == "cnn_block") return cnn_block_from(r, name);
  } catch (const ConfigError& e) {
    const std::string what = e.what();
    if (what.starts_with(r.path())) throw;
    throw ConfigError(r.path() + ": " + what);
  }
  throw ConfigError(r.path("type") + ": unknown block type \"" + type + "\"");
}

std::unique_ptr<Block> make_block(const Json& config, const std::string& path) {
  ObjectReader r(config, path);
  auto block = make_block(r);
  r.finish();
  return block;
}

}  // namespace akid

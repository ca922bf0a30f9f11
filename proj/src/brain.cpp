#include "akid/brain.hpp"

#include "akid/ops.hpp"

namespace akid {

namespace {

Json ref_to_json(const InputRef& ref) {
  Json j{{"name", ref.name}, {"idxs", ref.idxs}};
  if (ref.delayed) j["delayed"] = true;
  if (ref.shape) j["shape"] = ref.shape->extents();
  return j;
}

InputRef ref_from_json(const Json& value, const std::string& path) {
  ObjectReader r(value, path);
  InputRef ref;
  ref.name = r.get<std::string>("name");
  ref.idxs = r.get<std::vector<std::size_t>>("idxs", ref.idxs);
  if (ref.idxs.empty()) throw ConfigError(r.path("idxs") + ": must list at least one output index");
  ref.delayed = r.get<bool>("delayed", false);
  if (const Json* shape = r.optional("shape")) {
    try {
      ref.shape = Shape(ObjectReader::convert<std::vector<std::size_t>>(*shape, r.path("shape")));
    } catch (const ShapeError& e) {
      throw ConfigError(r.path("shape") + ": " + e.what());
    }
  }
  r.finish();
  return ref;
}

Shape prepend(std::size_t batch, const Shape& per_example) {
  std::vector<std::size_t> extents{batch};
  extents.insert(extents.end(), per_example.begin(), per_example.end());
  return Shape(std::move(extents));
}

Shape drop_leading(const Shape& shape) {
  return Shape(std::vector<std::size_t>(shape.begin() + 1, shape.end()));
}

}  // namespace

Brain::Brain(std::string name) : name_(std::move(name)) {
  if (name_.empty()) throw ConfigError("brain name must be non-empty");
}

void Brain::attach(std::unique_ptr<Block> block, std::optional<std::vector<InputRef>> inputs) {
  if (setup_done_) throw StateError(name_ + ": attach after setup");
  const std::string& bname = block->name();
  if (bname == kSystemIn) throw ConfigError(name_ + ": \"system_in\" is reserved and cannot name a block");
  if (index_.contains(bname)) throw ConfigError(name_ + ": duplicate block name \"" + bname + "\"");
  if (block->is_loss() && loss_index_) {
    throw ConfigError(name_ + ": block \"" + bname + "\" would be a second loss block (already have \"" +
                      blocks_[*loss_index_]->name() + "\")");
  }
  std::vector<InputRef> refs;
  const bool explicit_refs = inputs.has_value();
  if (explicit_refs) {
    if (inputs->empty()) throw ConfigError(name_ + "/" + bname + ": inputs must not be empty");
    for (const auto& ref : *inputs) {
      if (ref.idxs.empty()) throw ConfigError(name_ + "/" + bname + ": reference to \"" + ref.name + "\" lists no idxs");
      if (ref.delayed || ref.name == kSystemIn) continue;
      if (!index_.contains(ref.name)) {
        throw ConfigError(name_ + "/" + bname + ": dangling reference to \"" + ref.name +
                          "\" (not attached yet; mark it delayed for feedback)");
      }
    }
    refs = std::move(*inputs);
  } else if (blocks_.empty()) {
    refs.push_back({kSystemIn, {0}, false, std::nullopt});
  } else {
    refs.push_back({blocks_.back()->name(), {}, false, std::nullopt});  // empty idxs: every output
  }
  block->set_scope(name_);
  index_.emplace(bname, blocks_.size());
  if (block->is_loss()) loss_index_ = blocks_.size();
  blocks_.push_back(std::move(block));
  refs_.push_back(std::move(refs));
  explicit_refs_.push_back(explicit_refs);
}

std::size_t Brain::index_of(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw LookupError(name_ + ": no block named \"" + name + "\"");
  return it->second;
}

const Block& Brain::block(const std::string& name) const { return *blocks_[index_of(name)]; }

void Brain::setup(const std::vector<Tensor>& system_inputs, std::uint64_t seed) {
  if (setup_done_) throw StateError(name_ + ": setup may only be called once");
  if (system_inputs.empty()) throw ConfigError(name_ + ": setup needs at least one system input");
  if (blocks_.empty()) throw ConfigError(name_ + ": no blocks attached");
  system_arity_ = system_inputs.size();
  std::vector<Variable> system;
  for (const auto& t : system_inputs) system.push_back(Variable::constant(t));
  const std::size_t batch = system_inputs[0].rank() > 0 ? system_inputs[0].shape()[0] : 1;

  sources_.assign(blocks_.size(), {});
  outputs_.assign(blocks_.size(), {});
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const std::string where = name_ + "/" + blocks_[i]->name();
    // Resolve references now that every producer before i has outputs.
    std::vector<Source> sources;
    std::vector<const InputRef*> source_refs;
    auto add = [&](Source src, const InputRef& ref) {
      sources.push_back(src);
      source_refs.push_back(&ref);
    };
    for (const auto& ref : refs_[i]) {
      if (ref.name == kSystemIn) {
        if (ref.delayed) throw ConfigError(where + ": system_in cannot be a delayed input");
        for (auto idx : ref.idxs) {
          if (idx >= system.size()) {
            throw ConfigError(where + ": system_in index " + std::to_string(idx) + " out of range (" +
                              std::to_string(system.size()) + " system inputs)");
          }
          add({npos, idx, false}, ref);
        }
        continue;
      }
      auto it = index_.find(ref.name);
      if (it == index_.end()) throw ConfigError(where + ": dangling reference to \"" + ref.name + "\"");
      const std::size_t j = it->second;
      if (ref.delayed) {
        for (auto idx : ref.idxs) add({j, idx, true}, ref);
        continue;
      }
      if (ref.idxs.empty()) {
        for (std::size_t idx = 0; idx < outputs_[j].size(); ++idx) add({j, idx, false}, ref);
        continue;
      }
      for (auto idx : ref.idxs) {
        if (idx >= outputs_[j].size()) {
          throw ConfigError(where + ": index " + std::to_string(idx) + " of \"" + ref.name + "\" out of range (" +
                            std::to_string(outputs_[j].size()) + " outputs)");
        }
        add({j, idx, false}, ref);
      }
    }
    // Delayed inputs start as zeros shaped by the hint or the first direct input.
    std::optional<Shape> direct_shape;
    for (const auto& s : sources) {
      if (s.delayed) continue;
      direct_shape = drop_leading(s.block == npos ? system[s.idx].shape() : outputs_[s.block][s.idx].shape());
      break;
    }
    for (std::size_t k = 0; k < sources.size(); ++k) {
      const Source& src = sources[k];
      if (!src.delayed) continue;
      const InputRef& ref = *source_refs[k];
      const auto key = std::make_pair(src.block, src.idx);
      std::optional<Shape> shape = ref.shape ? ref.shape : direct_shape;
      if (!shape) throw ConfigError(where + ": delayed input from \"" + ref.name + "\" needs a shape hint");
      auto [pos, inserted] = delayed_shape_.emplace(key, *shape);
      if (!inserted && !(pos->second == *shape)) {
        throw ShapeError(where + ": delayed input from \"" + ref.name + "\" assumed shape " + shape->to_string() +
                         " but another consumer assumed " + pos->second.to_string());
      }
      delayed_[key] = Tensor::zeros(prepend(batch, *shape));
    }
    sources_[i] = std::move(sources);
    outputs_[i] = blocks_[i]->setup(gather(i, system, batch), seed);
  }
  for (const auto& [key, shape] : delayed_shape_) {
    const auto [j, idx] = key;
    if (idx >= outputs_[j].size()) {
      throw ConfigError(name_ + ": delayed index " + std::to_string(idx) + " of \"" + blocks_[j]->name() +
                        "\" out of range");
    }
    const Shape produced = drop_leading(outputs_[j][idx].shape());
    if (!(produced == shape)) {
      throw ShapeError(name_ + ": delayed output " + std::to_string(idx) + " of \"" + blocks_[j]->name() + "\" is " +
                       produced.to_string() + " per example, consumers assumed " + shape.to_string());
    }
  }
  setup_done_ = true;
}

std::vector<Variable> Brain::gather(std::size_t i, const std::vector<Variable>& system, std::size_t batch) const {
  std::vector<Variable> inputs;
  for (const auto& s : sources_[i]) {
    if (s.block == npos) {
      inputs.push_back(system[s.idx]);
    } else if (!s.delayed) {
      inputs.push_back(outputs_[s.block][s.idx]);
    } else {
      const auto key = std::make_pair(s.block, s.idx);
      const Tensor& buffered = delayed_.at(key);
      if (buffered.shape()[0] == batch) {
        inputs.push_back(Variable::constant(buffered));
      } else {
        // A new batch size restarts the feedback from zeros.
        inputs.push_back(Variable::constant(Tensor::zeros(prepend(batch, delayed_shape_.at(key)), buffered.dtype())));
      }
    }
  }
  return inputs;
}

BrainOutput Brain::forward(const std::vector<Tensor>& system_inputs, ForwardContext& ctx) {
  if (!setup_done_) throw StateError(name_ + ": forward before setup");
  if (system_inputs.size() != system_arity_) {
    throw ShapeError(name_ + ": expected " + std::to_string(system_arity_) + " system inputs, got " +
                     std::to_string(system_inputs.size()));
  }
  std::vector<Variable> system;
  for (const auto& t : system_inputs) system.push_back(Variable::constant(t));
  const std::size_t batch = system_inputs[0].rank() > 0 ? system_inputs[0].shape()[0] : 1;
  for (std::size_t i = 0; i < blocks_.size(); ++i) outputs_[i] = blocks_[i]->forward(gather(i, system, batch), ctx);
  for (auto& [key, value] : delayed_) value = outputs_[key.first][key.second].value();

  BrainOutput out;
  if (loss_index_) {
    const auto& loss_outputs = outputs_[*loss_index_];
    out.task_loss = loss_outputs.at(0);
    if (loss_outputs.size() > 2) out.accuracy = loss_outputs[2].value().item();
    out.loss = out.task_loss;
    for (const auto& b : blocks_) {
      if (!b->variables().empty()) out.loss = ops::add(out.loss, b->weight_decay_loss());
    }
  }
  return out;
}

std::vector<Parameter> Brain::params() const {
  std::vector<Parameter> out;
  for (const auto& b : blocks_) {
    auto vars = b->variables();
    out.insert(out.end(), vars.begin(), vars.end());
  }
  return out;
}

Variable Brain::param(const std::string& full_name) const {
  for (const auto& b : blocks_) {
    for (const auto& p : b->variables()) {
      if (p.name == full_name) return p.variable;
    }
  }
  throw LookupError(name_ + ": no parameter named \"" + full_name + "\"");
}

std::vector<StateTensor> Brain::states() const {
  std::vector<StateTensor> out;
  for (const auto& b : blocks_) {
    auto s = b->states();
    out.insert(out.end(), s.begin(), s.end());
  }
  return out;
}

const Tensor& Brain::data(const std::string& name, std::size_t idx) const {
  const std::size_t i = index_of(name);
  if (!setup_done_) throw StateError(name_ + ": no data before setup");
  if (idx >= outputs_[i].size()) {
    throw LookupError(name_ + ": block \"" + name + "\" has " + std::to_string(outputs_[i].size()) +
                      " outputs, asked for " + std::to_string(idx));
  }
  return outputs_[i][idx].value();
}

std::unique_ptr<Brain> Brain::clone_with(bool validation) const {
  auto copy = std::make_unique<Brain>(name_);
  for (const auto& b : blocks_) copy->blocks_.push_back(validation ? b->clone_for_validation() : b->clone_replica());
  copy->refs_ = refs_;
  copy->explicit_refs_ = explicit_refs_;
  copy->sources_ = sources_;
  copy->index_ = index_;
  copy->loss_index_ = loss_index_;
  copy->outputs_ = outputs_;
  copy->delayed_ = delayed_;
  copy->delayed_shape_ = delayed_shape_;
  copy->system_arity_ = system_arity_;
  copy->mode_ = validation ? Mode::inference : mode_;
  copy->setup_done_ = setup_done_;
  return copy;
}

std::unique_ptr<Brain> Brain::get_val_copy() const { return clone_with(true); }

std::unique_ptr<Brain> Brain::clone_replica() const { return clone_with(false); }

Json Brain::config() const {
  Json blocks = Json::array();
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    Json j = blocks_[i]->config();
    if (explicit_refs_[i]) {
      Json refs = Json::array();
      for (const auto& r : refs_[i]) refs.push_back(ref_to_json(r));
      j["inputs"] = std::move(refs);
    }
    blocks.push_back(std::move(j));
  }
  return Json{{"name", name_}, {"blocks", std::move(blocks)}};
}

std::unique_ptr<Brain> Brain::from_config(const Json& config, const std::string& path) {
  ObjectReader r(config, path);
  auto brain = std::make_unique<Brain>(r.get<std::string>("name", "brain"));
  const Json& blocks = r.required("blocks");
  if (!blocks.is_array()) throw ConfigError(r.path("blocks") + ": expected an array");
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const std::string where = r.path("blocks") + "[" + std::to_string(i) + "]";
    ObjectReader br(blocks[i], where);
    auto block = make_block(br);
    std::optional<std::vector<InputRef>> inputs;
    if (const Json* refs = br.optional("inputs")) {
      if (!refs->is_array()) throw ConfigError(br.path("inputs") + ": expected an array");
      inputs.emplace();
      for (std::size_t k = 0; k < refs->size(); ++k) {
        inputs->push_back(ref_from_json((*refs)[k], br.path("inputs") + "[" + std::to_string(k) + "]"));
      }
    }
    br.finish();
    try {
      brain->attach(std::move(block), std::move(inputs));
    } catch (const ConfigError& e) {
      throw ConfigError(where + ": " + e.what());
    }
  }
  r.finish();
  return brain;
}

}  // namespace akid

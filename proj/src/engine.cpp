#include "akid/engine.hpp"

#include <exception>
#include <thread>

#include "akid/autodiff.hpp"

namespace akid {

Json EngineConfig::to_json() const { return Json{{"name", name}, {"num_towers", num_towers}}; }

EngineConfig EngineConfig::from_json(const Json& config, const std::string& path) {
  ObjectReader r(config, path);
  EngineConfig c;
  c.name = r.get<std::string>("name", c.name);
  if (c.name != "single" && c.name != "data_parallel") {
    throw ConfigError(r.path("name") + ": unknown engine \"" + c.name + "\" (expected single or data_parallel)");
  }
  if (r.has("num_towers") && r.has("num_gpu")) throw ConfigError(path + ": give num_towers or num_gpu, not both");
  const std::string key = r.has("num_gpu") ? "num_gpu" : "num_towers";
  c.num_towers = r.get<std::size_t>(key, c.num_towers);
  if (c.num_towers == 0) throw ConfigError(r.path(key) + ": must be >= 1");
  r.finish();
  return c;
}

namespace {

Tensor slice_rows(const Tensor& t, std::size_t begin, std::size_t count) {
  const std::size_t per = t.numel() / t.shape()[0];
  Tensor out(t.shape().with_leading(count), t.dtype());
  dispatch(t.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto src = t.data<T>();
    std::copy(src.begin() + static_cast<std::ptrdiff_t>(begin * per),
              src.begin() + static_cast<std::ptrdiff_t>((begin + count) * per), out.data<T>().begin());
  });
  return out;
}

}  // namespace

std::vector<SubBatch> split_batch(const Tensor& data, const Tensor& labels, std::size_t k) {
  if (k == 0) throw ConfigError("split_batch: need at least one tower");
  if (data.rank() == 0 || labels.rank() == 0 || data.shape()[0] != labels.shape()[0]) {
    throw ShapeError("split_batch: data " + data.shape().to_string() + " and labels " + labels.shape().to_string() +
                     " disagree on the batch size");
  }
  const std::size_t b = data.shape()[0];
  if (b < k) {
    throw ShapeError("split_batch: batch of " + std::to_string(b) + " cannot feed " + std::to_string(k) +
                     " towers without leaving one empty");
  }
  std::vector<SubBatch> out;
  std::size_t offset = 0;
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t n = b / k + (i < b % k ? 1 : 0);
    out.push_back({slice_rows(data, offset, n), slice_rows(labels, offset, n), offset});
    offset += n;
  }
  return out;
}

Engine::Engine(EngineConfig config) : config_(std::move(config)) {
  if (config_.towers() == 0) throw ConfigError("engine needs at least one tower");
}

void Engine::setup(const Brain& master) {
  if (!master.is_setup()) throw StateError("engine setup needs a master brain that is set up");
  if (is_setup()) throw StateError("engine is already set up");
  for (std::size_t i = 0; i < num_towers(); ++i) towers_.push_back(master.clone_replica());
  sync_replicas(master);
}

void Engine::sync_replicas(const Brain& master) {
  const auto params = master.params();
  const auto states = master.states();
  for (auto& tower : towers_) {
    const auto tp = tower->params();
    const auto ts = tower->states();
    for (std::size_t j = 0; j < params.size(); ++j) {
      tp[j].variable.assign(params[j].variable.value());
      ++sync_copies_;
    }
    for (std::size_t j = 0; j < states.size(); ++j) *ts[j].value = *states[j].value;
  }
  synced_generation_ = generation_.load();
}

StepResult Engine::compute(Brain& master, const Tensor& data, const Tensor& labels, std::uint64_t seed,
                           std::uint64_t clock) {
  if (!is_setup()) setup(master);
  if (synced_generation_ != generation_.load()) sync_replicas(master);
  const auto parts = split_batch(data, labels, num_towers());
  const double total = static_cast<double>(data.shape()[0]);

  struct TowerOut {
    BrainOutput out;
    GradientMap grads;
    std::exception_ptr error;
  };
  std::vector<TowerOut> results(parts.size());
  auto run = [&](std::size_t i) {
    try {
      const std::uint64_t seen = generation_.load();
      Brain& tower = *towers_[i];
      Rng rng(mix_seed(seed, clock), i);
      ForwardContext ctx;
      ctx.rng = &rng;
      ctx.update_state = i == 0;
      Tape tape;
      {
        TapeScope scope(tape);
        results[i].out = tower.forward({parts[i].data, parts[i].labels}, ctx);
      }
      results[i].grads = collect_gradients(tower.params(), tape.backward(results[i].out.loss));
      if (generation_.load() != seen || seen != synced_generation_) ++torn_reads_;
    } catch (...) {
      results[i].error = std::current_exception();
    }
  };
  if (parts.size() == 1) {
    run(0);
  } else {
    std::vector<std::jthread> workers;
    for (std::size_t i = 0; i < parts.size(); ++i) workers.emplace_back(run, i);
  }
  for (const auto& r : results) {
    if (r.error) std::rethrow_exception(r.error);
  }

  StepResult result;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const double w = static_cast<double>(parts[i].labels.shape()[0]) / total;
    result.loss += w * results[i].out.loss.value().item();
    result.task_loss += w * results[i].out.task_loss.value().item();
    result.accuracy += w * results[i].out.accuracy;
    for (const auto& [name, g] : results[i].grads) {
      auto [it, inserted] = result.grads.try_emplace(name, Tensor::zeros(g.shape(), g.dtype()));
      dispatch(g.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto acc = it->second.template data<T>();
        auto src = g.template data<T>();
        const T wt = static_cast<T>(w);
        for (std::size_t e = 0; e < acc.size(); ++e) acc[e] += wt * src[e];
      });
    }
  }

  // Running statistics follow tower 0.
  const auto ms = master.states();
  const auto ts = towers_[0]->states();
  for (std::size_t j = 0; j < ms.size(); ++j) *ms[j].value = *ts[j].value;
  return result;
}

StepResult Engine::step(Brain& master, const Tensor& data, const Tensor& labels, KongFu& kongfu, std::uint64_t seed,
                        std::uint64_t clock) {
  StepResult result = compute(master, data, labels, seed, clock);
  kongfu.step(master.params(), result.grads, clock);
  ++generation_;
  return result;
}

}  // namespace akid

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "akid/autodiff.hpp"
#include "akid/engine.hpp"
#include "common/brains.hpp"

using namespace akid;

namespace {

std::unique_ptr<Brain> fresh_brain(std::size_t b) {
  auto brain = Brain::from_config(testing_brains::small_conv_config());
  brain->setup(testing_brains::small_batch(b, 0), 17);
  return brain;
}

// Single pass over the full batch on the brain itself.
double full_batch_step(Brain& brain, const std::vector<Tensor>& batch, KongFu& kongfu, std::uint64_t clock) {
  ForwardContext ctx;
  Tape tape;
  BrainOutput out;
  {
    TapeScope scope(tape);
    out = brain.forward(batch, ctx);
  }
  kongfu.step(brain.params(), collect_gradients(brain.params(), tape.backward(out.loss)), clock);
  return out.loss.value().item();
}

double relative_gap(const Brain& a, const Brain& b) {
  double diff = 0.0, norm = 0.0;
  const auto pa = a.params(), pb = b.params();
  for (std::size_t j = 0; j < pa.size(); ++j) {
    for (std::size_t i = 0; i < pa[j].variable.value().numel(); ++i) {
      const double x = pa[j].variable.value().at(i), y = pb[j].variable.value().at(i);
      diff += (x - y) * (x - y);
      norm += y * y;
    }
  }
  return std::sqrt(diff) / std::max(std::sqrt(norm), 1e-300);
}

double update_gap(const Brain& before, const Brain& a, const Brain& b) {
  // Compares the updates a - before and b - before.
  double diff = 0.0, norm = 0.0;
  const auto p0 = before.params(), pa = a.params(), pb = b.params();
  for (std::size_t j = 0; j < pa.size(); ++j) {
    for (std::size_t i = 0; i < pa[j].variable.value().numel(); ++i) {
      const double base = p0[j].variable.value().at(i);
      const double ua = pa[j].variable.value().at(i) - base, ub = pb[j].variable.value().at(i) - base;
      diff += (ua - ub) * (ua - ub);
      norm += ub * ub;
    }
  }
  return std::sqrt(diff) / std::max(std::sqrt(norm), 1e-300);
}

}  // namespace

TEST_CASE("split_batch sizes and offsets") {
  auto sizes = [](std::size_t b, std::size_t k) {
    const auto batch = testing_brains::small_batch(b, 1);
    std::vector<std::size_t> out;
    for (const auto& part : split_batch(batch[0], batch[1], k)) out.push_back(part.labels.shape()[0]);
    return out;
  };
  CHECK(sizes(128, 2) == std::vector<std::size_t>{64, 64});
  CHECK(sizes(10, 3) == std::vector<std::size_t>{4, 3, 3});
  CHECK(sizes(11, 4) == std::vector<std::size_t>{3, 3, 3, 2});
  const auto batch = testing_brains::small_batch(2, 1);
  CHECK_THROWS_AS(split_batch(batch[0], batch[1], 3), ShapeError);

  const auto b = testing_brains::small_batch(10, 2);
  const auto parts = split_batch(b[0], b[1], 3);
  const std::size_t per = 6 * 6 * 2;
  for (const auto& part : parts) {
    for (std::size_t r = 0; r < part.labels.numel(); ++r) {
      CHECK(part.labels.at(r) == b[1].at(part.offset + r));
      CHECK(part.data.at(r * per + 5) == b[0].at((part.offset + r) * per + 5));
    }
  }
}

TEST_CASE("one tower is bit-identical to single-tower training") {
  PrecisionScope precision(DType::f64);
  auto direct = fresh_brain(8);
  auto engined = fresh_brain(8);
  KongFu k1(KongFu::Kind::momentum, {LrScheme::Kind::constant, 0.1}, 0.9);
  KongFu k2 = k1;
  Engine engine(EngineConfig{"single", 1});
  for (std::uint64_t clock = 0; clock < 4; ++clock) {
    const auto batch = testing_brains::small_batch(8, clock);
    const double a = full_batch_step(*direct, batch, k1, clock);
    const double b = engine.step(*engined, batch[0], batch[1], k2, 5, clock).loss;
    CHECK(a == b);
  }
  CHECK(relative_gap(*engined, *direct) == 0.0);
}

TEST_CASE("data-parallel updates match the full-batch update (64-bit)") {
  PrecisionScope precision(DType::f64);
  double worst = 0.0;
  for (std::size_t b : {8, 10, 12}) {
    for (std::size_t k : {1, 2, 3}) {
      auto before = fresh_brain(b);
      auto single = fresh_brain(b);
      auto parallel = fresh_brain(b);
      KongFu ks(KongFu::Kind::momentum, {LrScheme::Kind::constant, 0.05}, 0.9);
      KongFu kp = ks;
      Engine engine(EngineConfig{"data_parallel", k});
      const auto batch = testing_brains::small_batch(b, b + k);
      const double ls = full_batch_step(*single, batch, ks, 0);
      const StepResult r = engine.step(*parallel, batch[0], batch[1], kp, 3, 0);
      CHECK(r.loss == doctest::Approx(ls).epsilon(1e-12));
      worst = std::max(worst, update_gap(*before, *parallel, *single));
      // A second step exercises the momentum buffers and the replica resync.
      const auto batch2 = testing_brains::small_batch(b, 99);
      full_batch_step(*single, batch2, ks, 1);
      engine.step(*parallel, batch2[0], batch2[1], kp, 3, 1);
      worst = std::max(worst, relative_gap(*parallel, *single));
      CHECK(engine.torn_reads() == 0);
      CHECK(engine.generation() == 2);
    }
  }
  CHECK(worst <= 1e-6);
}

TEST_CASE("reported loss is the size-weighted mean of tower losses") {
  PrecisionScope precision(DType::f64);
  auto master = fresh_brain(10);
  Engine engine(EngineConfig{"data_parallel", 3});
  const auto batch = testing_brains::small_batch(10, 4);
  const StepResult r = engine.compute(*master, batch[0], batch[1], 0, 0);
  double expected = 0.0;
  for (const auto& part : split_batch(batch[0], batch[1], 3)) {
    ForwardContext ctx;
    auto probe = master->clone_replica();
    expected += probe->forward({part.data, part.labels}, ctx).loss.value().item() * part.labels.numel() / 10.0;
  }
  CHECK(r.loss == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("sync copies every parameter into every tower") {
  PrecisionScope precision(DType::f64);
  auto master = fresh_brain(6);
  const std::size_t p = master->params().size();
  Engine engine(EngineConfig{"data_parallel", 3});
  engine.setup(*master);
  CHECK(engine.sync_copies() == 3 * p);
  for (std::size_t t = 0; t < 3; ++t) {
    const auto tp = engine.tower(t).params();
    for (std::size_t j = 0; j < p; ++j) {
      CHECK(tp[j].name == master->params()[j].name);
      CHECK(tp[j].variable.value().identical(master->params()[j].variable.value()));
      CHECK_FALSE(tp[j].variable == master->params()[j].variable);
    }
  }
  // The master moves; towers keep the synced copy until the next sync.
  const Variable w = master->params()[0].variable;
  Tensor moved = w.value();
  moved.set(0, moved.at(0) + 1.0);
  w.assign(moved);
  CHECK_FALSE(engine.tower(1).params()[0].variable.value().identical(w.value()));
  engine.sync_replicas(*master);
  CHECK(engine.sync_copies() == 6 * p);
  CHECK(engine.tower(1).params()[0].variable.value().identical(w.value()));
}

TEST_CASE("engine config parsing") {
  CHECK(EngineConfig::from_json(Json{{"name", "data_parallel"}, {"num_gpu", 2}}).towers() == 2);
  CHECK(EngineConfig::from_json(Json{{"name", "single"}, {"num_towers", 4}}).towers() == 1);
  CHECK_THROWS_AS(EngineConfig::from_json(Json{{"name", "async"}}), ConfigError);
  CHECK_THROWS_AS(EngineConfig::from_json(Json{{"num_towers", 0}}), ConfigError);
  const EngineConfig c{"data_parallel", 3};
  CHECK(EngineConfig::from_json(c.to_json()).to_json() == c.to_json());
}

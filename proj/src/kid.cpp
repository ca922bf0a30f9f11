#include "akid/kid.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>

namespace akid {

namespace fs = std::filesystem;

// ------------------------------------------------------------------ checkpoint

namespace {

constexpr char kMagic[4] = {'A', 'K', 'C', 'K'};
constexpr const char* kClockEntry = "clock";
constexpr const char* kVelocityPrefix = "velocity/";

template <class T>
void put_le(std::string& out, T v) {
  using U = std::make_unsigned_t<T>;
  U u = static_cast<U>(v);
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((u >> (8 * i)) & 0xff));
}

class Reader {
 public:
  Reader(std::string bytes, std::string path) : bytes_(std::move(bytes)), path_(std::move(path)) {}

  template <class T>
  T le() {
    need(sizeof(T));
    std::make_unsigned_t<T> u = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      u |= static_cast<std::make_unsigned_t<T>>(static_cast<unsigned char>(bytes_[at_ + i])) << (8 * i);
    }
    at_ += sizeof(T);
    return static_cast<T>(u);
  }
  std::string take(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(at_, n);
    at_ += n;
    return s;
  }
  bool done() const { return at_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - at_ < n) throw IoError(path_ + ": truncated checkpoint");
  }
  std::string bytes_;
  std::string path_;
  std::size_t at_ = 0;
};

// The clock is stored as four 16-bit limbs, each exact in a 32-bit float.
Tensor clock_tensor(std::uint64_t clock) {
  Tensor t(Shape{4}, DType::f32);
  for (std::size_t i = 0; i < 4; ++i) t.set(i, static_cast<double>((clock >> (16 * i)) & 0xffff));
  return t;
}

std::uint64_t clock_from(const Tensor& t) {
  if (t.shape() != Shape{4}) throw ShapeError("checkpoint entry clock: expected shape [4], got " + t.shape().to_string());
  std::uint64_t clock = 0;
  for (std::size_t i = 0; i < 4; ++i) clock |= static_cast<std::uint64_t>(t.at(i)) << (16 * i);
  return clock;
}

}  // namespace

void write_checkpoint(const std::string& path, const CheckpointEntries& entries) {
  std::string out(kMagic, 4);
  put_le<std::uint32_t>(out, kCheckpointVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(entries.size()));
  for (const auto& [name, t] : entries) {
    if (name.size() > 0xffff) throw IoError("checkpoint entry name too long: " + name.substr(0, 64) + "...");
    if (t.rank() > 0xff) throw IoError("checkpoint entry " + name + ": rank too large");
    put_le<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
    out += name;
    out.push_back(static_cast<char>(t.rank()));
    for (auto e : t.shape()) put_le<std::uint32_t>(out, static_cast<std::uint32_t>(e));
    const Tensor f = t.cast(DType::f32);
    for (float v : f.data<float>()) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
  }
  if (const fs::path parent = fs::path(path).parent_path(); !parent.empty()) fs::create_directories(parent);
  const std::string tmp = path + ".part";
  {
    std::ofstream file(tmp, std::ios::binary | std::ios::trunc);
    if (!file) throw IoError("cannot write " + tmp);
    file.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!file) throw IoError("short write to " + tmp);
  }
  fs::rename(tmp, path);
}

CheckpointEntries read_checkpoint(const std::string& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw IoError("cannot open checkpoint " + path);
  Reader r(std::string(std::istreambuf_iterator<char>(file), {}), path);
  if (r.take(4) != std::string(kMagic, 4)) throw IoError(path + ": not a checkpoint (bad magic)");
  const auto version = r.le<std::uint32_t>();
  if (version != kCheckpointVersion) throw IoError(path + ": unsupported checkpoint version " + std::to_string(version));
  const auto count = r.le<std::uint32_t>();
  CheckpointEntries entries;
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.take(r.le<std::uint16_t>());
    const auto rank = r.le<std::uint8_t>();
    std::vector<std::size_t> extents(rank);
    for (auto& e : extents) e = r.le<std::uint32_t>();
    Tensor t(Shape(extents), DType::f32);
    for (float& v : t.data<float>()) v = std::bit_cast<float>(r.le<std::uint32_t>());
    entries.emplace_back(std::move(name), std::move(t));
  }
  if (!r.done()) throw IoError(path + ": trailing bytes after " + std::to_string(count) + " entries");
  return entries;
}

void load_brain_tensors(Brain& brain, const CheckpointEntries& entries) {
  std::map<std::string, const Tensor*> by_name;
  for (const auto& [name, t] : entries) by_name[name] = &t;
  auto lookup = [&](const std::string& name, const Shape& shape) -> const Tensor& {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw LookupError("checkpoint has no tensor " + name);
    if (it->second->shape() != shape) {
      throw ShapeError("checkpoint tensor " + name + " has shape " + it->second->shape().to_string() + ", model expects " +
                       shape.to_string());
    }
    return *it->second;
  };
  // Validate everything before touching the brain.
  for (const auto& p : brain.params()) lookup(p.name, p.variable.shape());
  for (const auto& s : brain.states()) lookup(s.name, s.value->shape());
  for (const auto& p : brain.params()) p.variable.assign(lookup(p.name, p.variable.shape()).cast(p.variable.value().dtype()));
  for (const auto& s : brain.states()) *s.value = lookup(s.name, s.value->shape()).cast(s.value->dtype());
}

// ------------------------------------------------------------------ config

Json KidConfig::to_json() const {
  Json j;
  if (max_steps) j["max_steps"] = *max_steps;
  if (max_epoch) j["max_epoch"] = *max_epoch;
  j["val_interval"] = val_interval;
  j["log_dir"] = log_dir;
  j["distributions"] = distributions;
  return j;
}

KidConfig KidConfig::from_json(const Json& config, const std::string& path) {
  ObjectReader r(config, path);
  KidConfig c;
  if (r.optional("max_steps")) c.max_steps = r.get<std::uint64_t>("max_steps");
  if (r.optional("max_epoch")) c.max_epoch = r.get<std::uint64_t>("max_epoch");
  if (c.max_steps.has_value() == c.max_epoch.has_value()) {
    throw ConfigError(path + ": give exactly one of max_steps and max_epoch");
  }
  c.val_interval = r.get<std::uint64_t>("val_interval", c.val_interval);
  if (c.val_interval == 0) throw ConfigError(r.path("val_interval") + ": must be >= 1");
  c.log_dir = r.get<std::string>("log_dir", c.log_dir);
  c.distributions = r.get<bool>("distributions", c.distributions);
  r.finish();
  return c;
}

// ------------------------------------------------------------------ driver

Kid::Kid(std::shared_ptr<Source> source, SensorConfig sensor, std::unique_ptr<Brain> brain, KongFu kongfu,
         EngineConfig engine, KidConfig config, std::uint64_t seed)
    : source_(std::move(source)),
      sensor_config_(std::move(sensor)),
      brain_(std::move(brain)),
      kongfu_(std::move(kongfu)),
      engine_(std::move(engine)),
      config_(std::move(config)),
      seed_(seed) {
  if (!source_) throw ConfigError("kid: no source given");
  if (!brain_) throw ConfigError("kid: no brain given");
  if (!brain_->has_loss()) throw ConfigError("kid: brain " + brain_->name() + " has no loss block");
  if (config_.max_steps.has_value() == config_.max_epoch.has_value()) {
    throw ConfigError("kid: give exactly one of max_steps and max_epoch");
  }
  if (config_.val_interval == 0) throw ConfigError("kid: val_interval must be >= 1");
}

void Kid::setup(const Fetcher& fetcher) {
  if (setup_done_) throw StateError("kid: setup may only be called once");
  if (!source_->is_setup()) source_->setup(fetcher);
  sensor_ = std::make_unique<FeedSensor>(source_, sensor_config_);
  brain_->setup(sensor_->example_inputs(), seed_);
  val_brain_ = brain_->get_val_copy();
  engine_.setup(*brain_);
  sink_ = config_.log_dir.empty() ? std::make_unique<SummarySink>() : std::make_unique<SummarySink>(config_.log_dir);
  setup_done_ = true;
}

void Kid::require_setup() const {
  if (!setup_done_) throw StateError("kid: call setup first");
}

std::uint64_t Kid::total_steps() const {
  if (config_.max_steps) return *config_.max_steps;
  require_setup();
  return *config_.max_epoch * sensor_->batches_per_epoch();
}

ValResult Kid::validate() const {
  require_setup();
  const std::size_t batches = sensor_->val_batches();
  if (batches == 0) throw StateError("kid: validation split is empty");
  double loss = 0.0, correct = 0.0, seen = 0.0;
  for (std::size_t i = 0; i < batches; ++i) {
    const Batch b = sensor_->val_batch(i);
    ForwardContext ctx;
    ctx.update_state = false;
    const BrainOutput out = val_brain_->forward({b.data, b.labels}, ctx);
    const double n = static_cast<double>(b.indices.size());
    loss += out.task_loss.value().item() * n;
    correct += out.accuracy * n;
    seen += n;
  }
  return {loss / seen, correct / seen};
}

void Kid::record_validation() {
  if (sensor_->val_batches() == 0) return;
  const ValResult v = validate();
  sink_->record_scalar(clock_, "val/loss", v.loss);
  sink_->record_scalar(clock_, "val/accuracy", v.accuracy);
  if (config_.distributions) {
    for (const auto& p : brain_->params()) sink_->record_distribution(clock_, p.name, p.variable.value());
  }
  last_val_clock_ = clock_;
}

Metrics Kid::practice(std::optional<std::uint64_t> until) {
  require_setup();
  const std::uint64_t target = until.value_or(total_steps());
  Metrics m;
  while (clock_ < target) {
    const Batch batch = sensor_->train_batch(clock_);
    const double lr = kongfu_.learning_rate(clock_);
    const StepResult r = engine_.step(*brain_, batch.data, batch.labels, kongfu_, seed_, clock_);
    ++clock_;
    m.train_loss = r.loss;
    m.train_accuracy = r.accuracy;
    sink_->record_scalar(clock_, "train/loss", r.loss);
    sink_->record_scalar(clock_, "train/accuracy", r.accuracy);
    sink_->record_scalar(clock_, "train/lr", lr);
    if (clock_ % config_.val_interval == 0) record_validation();
  }
  if (last_val_clock_ != clock_) record_validation();
  if (last_val_clock_ == clock_) {
    const auto loss = sink_->scalars("val/loss");
    const auto acc = sink_->scalars("val/accuracy");
    m.val = ValResult{loss.back().value, acc.back().value};
  }
  m.clock = clock_;
  sink_->flush();
  if (!config_.log_dir.empty()) save_checkpoint((fs::path(config_.log_dir) / "checkpoint.akck").string());
  return m;
}

void Kid::save_checkpoint(const std::string& path) const {
  require_setup();
  CheckpointEntries entries;
  for (const auto& p : brain_->params()) entries.emplace_back(p.name, p.variable.value());
  for (const auto& s : brain_->states()) entries.emplace_back(s.name, *s.value);
  for (const auto& [name, v] : kongfu_.velocities()) entries.emplace_back(kVelocityPrefix + name, v);
  entries.emplace_back(kClockEntry, clock_tensor(clock_));
  write_checkpoint(path, entries);
}

void Kid::load_checkpoint(const std::string& path) {
  require_setup();
  const CheckpointEntries entries = read_checkpoint(path);
  std::map<std::string, const Tensor*> by_name;
  for (const auto& [name, t] : entries) by_name[name] = &t;
  auto clock = by_name.find(kClockEntry);
  if (clock == by_name.end()) throw LookupError(path + ": checkpoint has no clock");
  const std::uint64_t restored_clock = clock_from(*clock->second);
  std::map<std::string, Tensor> velocities;
  const auto params = brain_->params();
  for (const auto& [name, t] : entries) {
    if (name.rfind(kVelocityPrefix, 0) != 0) continue;
    const std::string pname = name.substr(std::strlen(kVelocityPrefix));
    auto it = std::find_if(params.begin(), params.end(), [&](const Parameter& p) { return p.name == pname; });
    if (it == params.end()) throw LookupError(path + ": velocity for unknown parameter " + pname);
    if (t.shape() != it->variable.shape()) {
      throw ShapeError("checkpoint tensor " + name + " has shape " + t.shape().to_string() + ", model expects " +
                       it->variable.shape().to_string());
    }
    velocities[pname] = t.cast(it->variable.value().dtype());
  }
  load_brain_tensors(*brain_, entries);
  kongfu_.reset();
  for (auto& [name, v] : velocities) kongfu_.set_velocity(name, std::move(v));
  clock_ = restored_clock;
  last_val_clock_.reset();
  engine_.sync_replicas(*brain_);
}

}  // namespace akid

#include "akid/sensor.hpp"

#include <curl/curl.h>
#include <openssl/evp.h>
#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numeric>

namespace akid {

namespace fs = std::filesystem;

// ------------------------------------------------------------------ IDX

namespace {

std::vector<std::uint8_t> read_all(const std::string& path) {
  gzFile file = gzopen(path.c_str(), "rb");
  if (file == nullptr) throw IoError("cannot open " + path);
  std::vector<std::uint8_t> bytes;
  std::uint8_t chunk[1 << 16];
  int n = 0;
  while ((n = gzread(file, chunk, sizeof(chunk))) > 0) bytes.insert(bytes.end(), chunk, chunk + n);
  int err = 0;
  const char* message = gzerror(file, &err);
  const bool failed = n < 0 || (err != Z_OK && err != Z_STREAM_END);
  const std::string detail = failed ? std::string(message) : std::string();
  gzclose(file);
  if (failed) throw IoError(path + ": " + detail);
  return bytes;
}

std::uint32_t read_be32(const std::vector<std::uint8_t>& b, std::size_t at) {
  return (std::uint32_t{b[at]} << 24) | (std::uint32_t{b[at + 1]} << 16) | (std::uint32_t{b[at + 2]} << 8) |
         std::uint32_t{b[at + 3]};
}

void put_be32(std::string& out, std::uint32_t v) {
  for (int shift = 24; shift >= 0; shift -= 8) out.push_back(static_cast<char>((v >> shift) & 0xff));
}

std::string hex_magic(std::uint32_t magic) {
  char buf[11];
  std::snprintf(buf, sizeof(buf), "0x%08x", magic);
  return buf;
}

}  // namespace

IdxData load_idx(const std::string& path) {
  const auto bytes = read_all(path);
  if (bytes.size() < 4) throw IoError(path + ": truncated header");
  IdxData out;
  out.magic = read_be32(bytes, 0);
  std::size_t rank = 0;
  if (out.magic == kIdxImagesMagic) {
    rank = 3;
  } else if (out.magic == kIdxLabelsMagic) {
    rank = 1;
  } else {
    throw IoError(path + ": bad magic " + hex_magic(out.magic) + " (expected 0x00000803 images or 0x00000801 labels)");
  }
  const std::size_t header = 4 + 4 * rank;
  if (bytes.size() < header) throw IoError(path + ": truncated header");
  std::size_t count = 1;
  for (std::size_t i = 0; i < rank; ++i) {
    out.dims.push_back(read_be32(bytes, 4 + 4 * i));
    count *= out.dims.back();
  }
  const std::size_t payload = bytes.size() - header;
  if (payload != count) {
    throw IoError(path + ": " + (payload < count ? "truncated payload" : "trailing bytes") + ": header declares " +
                  std::to_string(count) + " bytes, file has " + std::to_string(payload));
  }
  if (rank == 1) {
    out.labels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(header), bytes.end());
  } else {
    if (count == 0) throw IoError(path + ": empty image file");
    out.images = Tensor(Shape{out.dims[0], out.dims[1], out.dims[2]}, DType::f32);
    auto data = out.images.data<float>();
    for (std::size_t i = 0; i < count; ++i) data[i] = static_cast<float>(bytes[header + i]);
  }
  return out;
}

void write_idx(const std::string& path, const IdxData& data) {
  std::string out;
  put_be32(out, data.magic);
  if (data.magic == kIdxLabelsMagic) {
    put_be32(out, static_cast<std::uint32_t>(data.labels.size()));
    for (auto l : data.labels) {
      if (l < 0 || l > 255) throw IoError(path + ": label " + std::to_string(l) + " does not fit a byte");
      out.push_back(static_cast<char>(l));
    }
  } else if (data.magic == kIdxImagesMagic) {
    const Shape& s = data.images.shape();
    if (s.rank() != 3) throw ShapeError("IDX images must be [N,H,W], got " + s.to_string());
    for (auto d : s) put_be32(out, static_cast<std::uint32_t>(d));
    for (std::size_t i = 0; i < data.images.numel(); ++i) {
      const double v = data.images.at(i);
      if (v < 0.0 || v > 255.0 || v != std::floor(v)) throw IoError(path + ": pixel value " + std::to_string(v) + " is not a byte");
      out.push_back(static_cast<char>(static_cast<std::uint8_t>(v)));
    }
  } else {
    throw IoError(path + ": cannot write magic " + hex_magic(data.magic));
  }
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw IoError("cannot write " + path);
  file.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!file) throw IoError("short write to " + path);
}

// ------------------------------------------------------------------ cache

std::string data_root() {
  const char* env = std::getenv("AKID_DATA_PATH");
  return (env != nullptr && *env != '\0') ? std::string(env) : std::string("data");
}

std::string sha256_hex(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof(buf));
    if (in.gcount() > 0) EVP_DigestUpdate(ctx, buf, static_cast<std::size_t>(in.gcount()));
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, digest, &len);
  EVP_MD_CTX_free(ctx);
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xf]);
  }
  return out;
}

namespace {

std::size_t append_body(char* data, std::size_t size, std::size_t count, void* user) {
  static_cast<std::string*>(user)->append(data, size * count);
  return size * count;
}

}  // namespace

Fetcher curl_fetcher() {
  static const bool initialized = [] { return curl_global_init(CURL_GLOBAL_DEFAULT) == CURLE_OK; }();
  return [](const std::string& url) {
    if (!initialized) throw IoError("libcurl failed to initialize");
    CURL* curl = curl_easy_init();
    if (curl == nullptr) throw IoError("libcurl: cannot create a handle");
    std::string body;
    curl_easy_setopt(curl, CURLOPT_URL, url.c_str());
    curl_easy_setopt(curl, CURLOPT_FOLLOWLOCATION, 1L);
    curl_easy_setopt(curl, CURLOPT_FAILONERROR, 1L);
    curl_easy_setopt(curl, CURLOPT_WRITEFUNCTION, append_body);
    curl_easy_setopt(curl, CURLOPT_WRITEDATA, &body);
    const CURLcode rc = curl_easy_perform(curl);
    curl_easy_cleanup(curl);
    if (rc != CURLE_OK) throw IoError("download of " + url + " failed: " + curl_easy_strerror(rc));
    return body;
  };
}

void fetch_remote(const std::string& work_dir, const std::string& url, const std::vector<RemoteFile>& files,
                  bool offline, const Fetcher& fetcher) {
  for (const auto& f : files) {
    const fs::path plain = fs::path(work_dir) / f.name;
    const fs::path gz = fs::path(work_dir) / (f.name + ".gz");
    const fs::path* cached = fs::exists(plain) ? &plain : fs::exists(gz) ? &gz : nullptr;
    if (cached != nullptr) {
      if (f.sha256 && sha256_hex(cached->string()) != *f.sha256) {
        throw IoError("integrity check failed for " + cached->string() + ": sha256 does not match");
      }
      continue;
    }
    if (offline) {
      throw IoError("dataset missing: " + plain.string() + " (offline mode; populate the cache under " + work_dir +
                    " or set AKID_DATA_PATH)");
    }
    if (!fetcher) throw IoError("dataset missing: " + plain.string() + " and no fetcher available");
    const std::string body = fetcher(url + f.name + ".gz");
    fs::create_directories(work_dir);
    const fs::path tmp = fs::path(work_dir) / (f.name + ".gz.part");
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      out.write(body.data(), static_cast<std::streamsize>(body.size()));
      if (!out) throw IoError("cannot write " + tmp.string());
    }
    if (f.sha256 && sha256_hex(tmp.string()) != *f.sha256) {
      fs::remove(tmp);
      throw IoError("integrity check failed for " + url + f.name + ".gz: sha256 does not match");
    }
    fs::rename(tmp, gz);
  }
}

// ------------------------------------------------------------------ sources

Json SourceConfig::to_json() const {
  return Json{{"kind", kind},           {"name", name},   {"work_dir", work_dir}, {"url", url},
              {"num_train", num_train}, {"num_val", num_val}, {"center", center},   {"scale", scale},
              {"seed", seed},           {"offline", offline}};
}

SourceConfig SourceConfig::from_json(const Json& config, const std::string& path) {
  ObjectReader r(config, path);
  SourceConfig c;
  c.kind = r.get<std::string>("kind", c.kind);
  if (c.kind != "mnist" && c.kind != "synthetic") {
    throw ConfigError(r.path("kind") + ": unknown source \"" + c.kind + "\" (expected mnist or synthetic)");
  }
  c.name = r.get<std::string>("name", c.name);
  c.work_dir = r.get<std::string>("work_dir", c.work_dir);
  c.url = r.get<std::string>("url", c.url);
  c.num_train = r.get<std::size_t>("num_train", c.num_train);
  c.num_val = r.get<std::size_t>("num_val", c.num_val);
  c.center = r.get<bool>("center", c.center);
  c.scale = r.get<bool>("scale", c.scale);
  c.seed = r.get<std::uint64_t>("seed", c.seed);
  c.offline = r.get<bool>("offline", c.offline);
  if (c.num_train == 0) throw ConfigError(r.path("num_train") + ": must be >= 1");
  r.finish();
  return c;
}

Source::Source(SourceConfig config) : config_(std::move(config)) {
  if (config_.num_train == 0) throw ConfigError(config_.name + ": num_train must be >= 1");
}

const Split& Source::train() const {
  if (!setup_done_) throw StateError(config_.name + ": source is not set up");
  return train_;
}

const Split& Source::val() const {
  if (!setup_done_) throw StateError(config_.name + ": source is not set up");
  return val_;
}

void Source::load_mnist(const Fetcher& fetcher, Tensor& images, std::vector<std::int64_t>& labels) const {
  const std::string dir = config_.work_dir.empty() ? data_root() + "/mnist" : config_.work_dir;
  const std::vector<RemoteFile> files{{"train-images-idx3-ubyte", std::nullopt}, {"train-labels-idx1-ubyte", std::nullopt}};
  fetch_remote(dir, config_.url, files, config_.offline, fetcher ? fetcher : curl_fetcher());
  auto open = [&](const std::string& name) {
    const fs::path plain = fs::path(dir) / name;
    return load_idx(fs::exists(plain) ? plain.string() : plain.string() + ".gz");
  };
  IdxData img = open(files[0].name);
  IdxData lab = open(files[1].name);
  if (img.magic != kIdxImagesMagic) throw IoError(files[0].name + " is not an image file");
  if (lab.magic != kIdxLabelsMagic) throw IoError(files[1].name + " is not a label file");
  const Shape& s = img.images.shape();
  if (lab.labels.size() != s[0]) {
    throw IoError("MNIST cache: " + std::to_string(s[0]) + " images but " + std::to_string(lab.labels.size()) + " labels");
  }
  images = img.images.reshaped(Shape{s[0], s[1], s[2], 1});
  labels = std::move(lab.labels);
}

Tensor Source::preprocess(const Tensor& raw, bool scale, const Tensor* mean) {
  Tensor out = raw;
  if (scale) {
    dispatch(out.dtype(), [&](auto tag) {
      using T = decltype(tag);
      for (auto& v : out.data<T>()) v /= static_cast<T>(255);
    });
  }
  if (mean != nullptr) {
    const std::size_t per = mean->numel();
    dispatch(out.dtype(), [&](auto tag) {
      using T = decltype(tag);
      auto d = out.data<T>();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] -= static_cast<T>(mean->at(i % per));
    });
  }
  return out;
}

void Source::setup(const Fetcher& fetcher) {
  if (setup_done_) throw StateError(config_.name + ": setup may only be called once");
  Tensor images;
  std::vector<std::int64_t> labels;
  const std::size_t wanted = config_.num_train + config_.num_val;
  if (config_.kind == "synthetic") {
    synthetic_examples(wanted, config_.seed, images, labels);
  } else {
    load_mnist(fetcher, images, labels);
  }
  if (wanted > labels.size()) {
    throw ConfigError(config_.name + ": num_train + num_val = " + std::to_string(wanted) + " exceeds the " +
                      std::to_string(labels.size()) + " available examples");
  }
  images = images.cast(default_dtype());
  const Shape& s = images.shape();
  const std::size_t per = s.numel() / s[0];
  auto slice = [&](std::size_t begin, std::size_t count) {
    Split split;
    if (count == 0) return split;
    split.images = Tensor(s.with_leading(count), images.dtype());
    dispatch(images.dtype(), [&](auto tag) {
      using T = decltype(tag);
      auto src = images.data<T>();
      std::copy(src.begin() + static_cast<std::ptrdiff_t>(begin * per),
                src.begin() + static_cast<std::ptrdiff_t>((begin + count) * per), split.images.data<T>().begin());
    });
    split.labels.assign(labels.begin() + static_cast<std::ptrdiff_t>(begin),
                        labels.begin() + static_cast<std::ptrdiff_t>(begin + count));
    return split;
  };
  train_ = slice(0, config_.num_train);
  val_ = slice(config_.num_train, config_.num_val);

  if (config_.scale) train_.images = preprocess(train_.images, true, nullptr);
  mean_ = Tensor::zeros(s.with_leading(1), images.dtype());
  if (config_.center) {
    std::vector<double> acc(per, 0.0);
    for (std::size_t i = 0; i < train_.images.numel(); ++i) acc[i % per] += train_.images.at(i);
    for (std::size_t j = 0; j < per; ++j) mean_.set(j, acc[j] / static_cast<double>(train_.size()));
    train_.images = preprocess(train_.images, false, &mean_);
  }
  if (val_.size() > 0) val_.images = preprocess(val_.images, config_.scale, config_.center ? &mean_ : nullptr);
  std::int64_t max_label = 0;
  for (auto l : labels) max_label = std::max(max_label, l);
  class_num_ = static_cast<std::size_t>(max_label) + 1;
  setup_done_ = true;
}

void synthetic_examples(std::size_t count, std::uint64_t seed, Tensor& images, std::vector<std::int64_t>& labels) {
  constexpr std::size_t side = 8, classes = 10;
  // Prototype bump centers are fixed; the seed drives the per-example jitter and noise.
  Rng proto(0x5eed, hash_name("synthetic-prototypes"));
  double centers[classes][2][2];
  for (auto& c : centers) {
    for (auto& bump : c) {
      bump[0] = proto.uniform(1.0, 6.0);
      bump[1] = proto.uniform(1.0, 6.0);
    }
  }
  Rng rng(seed, hash_name("synthetic-examples"));
  images = Tensor(Shape{count, side, side, 1}, DType::f32);
  labels.resize(count);
  auto data = images.data<float>();
  for (std::size_t n = 0; n < count; ++n) {
    const std::size_t c = n % classes;
    labels[n] = static_cast<std::int64_t>(c);
    double jitter[2][2];
    for (auto& j : jitter) {
      j[0] = 0.4 * rng.normal();
      j[1] = 0.4 * rng.normal();
    }
    for (std::size_t y = 0; y < side; ++y) {
      for (std::size_t x = 0; x < side; ++x) {
        double v = 0.0;
        for (std::size_t b = 0; b < 2; ++b) {
          const double dy = static_cast<double>(y) - centers[c][b][0] - jitter[b][0];
          const double dx = static_cast<double>(x) - centers[c][b][1] - jitter[b][1];
          v += std::exp(-(dy * dy + dx * dx) / 2.0);
        }
        v += 0.1 * rng.normal();
        data[(n * side + y) * side + x] = static_cast<float>(255.0 * std::clamp(v, 0.0, 1.0));
      }
    }
  }
}

// ------------------------------------------------------------------ jokers

namespace {

Tensor crop(const Tensor& batch, std::size_t h, std::size_t w, const std::vector<std::pair<std::size_t, std::size_t>>& at) {
  const Shape& s = batch.shape();
  const std::size_t n = s[0], H = s[1], W = s[2], C = s[3];
  Tensor out(Shape{n, h, w, C}, batch.dtype());
  dispatch(batch.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto src = batch.data<T>();
    auto dst = out.data<T>();
    for (std::size_t b = 0; b < n; ++b) {
      const auto [oy, ox] = at[b];
      for (std::size_t y = 0; y < h; ++y) {
        const T* row = src.data() + ((b * H + oy + y) * W + ox) * C;
        std::copy(row, row + w * C, dst.data() + ((b * h + y) * w) * C);
      }
    }
  });
  return out;
}

void flip_example(Tensor& batch, std::size_t b) {
  const Shape& s = batch.shape();
  const std::size_t H = s[1], W = s[2], C = s[3];
  dispatch(batch.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto d = batch.data<T>();
    for (std::size_t y = 0; y < H; ++y) {
      for (std::size_t x = 0; x < W / 2; ++x) {
        for (std::size_t c = 0; c < C; ++c) {
          std::swap(d[((b * H + y) * W + x) * C + c], d[((b * H + y) * W + (W - 1 - x)) * C + c]);
        }
      }
    }
  });
}

void check_crop(const Shape& s, const JokerStep& step) {
  if (step.height > s[1] || step.width > s[2]) {
    throw ShapeError("crop " + std::to_string(step.height) + "x" + std::to_string(step.width) + " exceeds image " +
                     std::to_string(s[1]) + "x" + std::to_string(s[2]));
  }
}

}  // namespace

Tensor Joker::apply(const Tensor& batch, Rng& rng) const {
  Tensor x = batch;
  for (const auto& step : steps_) {
    const Shape s = x.shape();
    if (s.rank() != 4) throw ShapeError("jokers expect [N,H,W,C] batches, got " + s.to_string());
    if (step.kind == JokerStep::Kind::crop) {
      check_crop(s, step);
      std::vector<std::pair<std::size_t, std::size_t>> at(s[0]);
      for (auto& p : at) {
        p.first = rng.below(static_cast<std::uint32_t>(s[1] - step.height + 1));
        p.second = rng.below(static_cast<std::uint32_t>(s[2] - step.width + 1));
      }
      x = crop(x, step.height, step.width, at);
    } else {
      for (std::size_t b = 0; b < s[0]; ++b) {
        if (rng.bernoulli(step.probability)) flip_example(x, b);
      }
    }
  }
  return x;
}

Tensor Joker::apply_eval(const Tensor& batch) const {
  Tensor x = batch;
  for (const auto& step : steps_) {
    if (step.kind != JokerStep::Kind::crop) continue;
    const Shape s = x.shape();
    check_crop(s, step);
    std::vector<std::pair<std::size_t, std::size_t>> at(s[0], {(s[1] - step.height) / 2, (s[2] - step.width) / 2});
    x = crop(x, step.height, step.width, at);
  }
  return x;
}

Shape Joker::output_shape(const Shape& batch_shape) const {
  std::vector<std::size_t> e = batch_shape.extents();
  for (const auto& step : steps_) {
    if (step.kind != JokerStep::Kind::crop) continue;
    check_crop(Shape(e), step);
    e[1] = step.height;
    e[2] = step.width;
  }
  return Shape(e);
}

Json Joker::to_json() const {
  Json out = Json::array();
  for (const auto& s : steps_) {
    if (s.kind == JokerStep::Kind::crop) {
      out.push_back(Json{{"type", "crop"}, {"height", s.height}, {"width", s.width}});
    } else {
      out.push_back(Json{{"type", "flip"}, {"probability", s.probability}});
    }
  }
  return out;
}

Joker Joker::from_json(const Json& config, const std::string& path) {
  if (!config.is_array()) throw ConfigError(path + ": expected an array of joker steps");
  std::vector<JokerStep> steps;
  for (std::size_t i = 0; i < config.size(); ++i) {
    ObjectReader r(config[i], path + "[" + std::to_string(i) + "]");
    const std::string type = r.get<std::string>("type");
    JokerStep step;
    if (type == "crop") {
      step.kind = JokerStep::Kind::crop;
      step.height = r.get<std::size_t>("height");
      step.width = r.get<std::size_t>("width");
      if (step.height == 0 || step.width == 0) throw ConfigError(r.path("height") + ": crop extents must be >= 1");
    } else if (type == "flip") {
      step.kind = JokerStep::Kind::flip;
      step.probability = r.get<double>("probability", 0.5);
      if (!(step.probability >= 0.0 && step.probability <= 1.0)) throw ConfigError(r.path("probability") + ": must be in [0, 1]");
    } else {
      throw ConfigError(r.path("type") + ": unknown joker \"" + type + "\" (expected crop or flip)");
    }
    r.finish();
    steps.push_back(step);
  }
  return Joker(std::move(steps));
}

// ------------------------------------------------------------------ sensor

Json SensorConfig::to_json() const { return Json{{"batch_size", batch_size}, {"seed", seed}, {"jokers", jokers.to_json()}}; }

SensorConfig SensorConfig::from_json(const Json& config, const std::string& path) {
  ObjectReader r(config, path);
  SensorConfig c;
  c.batch_size = r.get<std::size_t>("batch_size", c.batch_size);
  if (c.batch_size == 0) throw ConfigError(r.path("batch_size") + ": must be >= 1");
  c.seed = r.get<std::uint64_t>("seed", c.seed);
  if (const Json* j = r.optional("jokers")) c.jokers = Joker::from_json(*j, r.path("jokers"));
  r.finish();
  return c;
}

FeedSensor::FeedSensor(std::shared_ptr<const Source> source, SensorConfig config)
    : source_(std::move(source)), config_(std::move(config)) {
  if (!source_ || !source_->is_setup()) throw StateError("sensor needs a source that is set up");
  if (config_.batch_size == 0) throw ConfigError("batch_size must be >= 1");
  config_.jokers.output_shape(source_->train().images.shape());
}

std::size_t FeedSensor::batches_per_epoch() const {
  const std::size_t n = source_->train().size();
  return (n + config_.batch_size - 1) / config_.batch_size;
}

std::size_t FeedSensor::val_batches() const {
  const std::size_t n = source_->val().size();
  return (n + config_.batch_size - 1) / config_.batch_size;
}

std::vector<std::size_t> FeedSensor::epoch_order(std::uint64_t epoch) const {
  std::vector<std::size_t> order(source_->train().size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(mix_seed(config_.seed, epoch), hash_name("epoch-order"));
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(static_cast<std::uint32_t>(i))]);
  return order;
}

Batch FeedSensor::gather(const Split& split, const std::vector<std::size_t>& idx) const {
  const Shape& s = split.images.shape();
  const std::size_t per = s.numel() / s[0];
  Batch batch;
  batch.indices = idx;
  batch.data = Tensor(s.with_leading(idx.size()), split.images.dtype());
  batch.labels = Tensor(Shape{idx.size()}, split.images.dtype());
  dispatch(split.images.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto src = split.images.data<T>();
    auto dst = batch.data.data<T>();
    for (std::size_t k = 0; k < idx.size(); ++k) {
      std::copy(src.begin() + static_cast<std::ptrdiff_t>(idx[k] * per),
                src.begin() + static_cast<std::ptrdiff_t>((idx[k] + 1) * per), dst.begin() + static_cast<std::ptrdiff_t>(k * per));
      batch.labels.set(k, static_cast<double>(split.labels[idx[k]]));
    }
  });
  return batch;
}

Batch FeedSensor::train_batch(std::uint64_t clock) const {
  const std::size_t bpe = batches_per_epoch();
  const std::uint64_t epoch = clock / bpe;
  const std::size_t k = static_cast<std::size_t>(clock % bpe);
  const auto order = epoch_order(epoch);
  const std::size_t begin = k * config_.batch_size;
  const std::size_t end = std::min(begin + config_.batch_size, order.size());
  Batch batch = gather(source_->train(), std::vector<std::size_t>(order.begin() + static_cast<std::ptrdiff_t>(begin),
                                                                  order.begin() + static_cast<std::ptrdiff_t>(end)));
  if (!config_.jokers.empty()) {
    Rng rng(mix_seed(config_.seed, clock), hash_name("jokers"));
    batch.data = config_.jokers.apply(batch.data, rng);
  }
  return batch;
}

Batch FeedSensor::val_batch(std::size_t i) const {
  const std::size_t n = source_->val().size();
  if (n == 0) throw StateError("validation split is empty");
  const std::size_t begin = i * config_.batch_size;
  if (begin >= n) throw LookupError("validation batch " + std::to_string(i) + " out of range");
  std::vector<std::size_t> idx(std::min(config_.batch_size, n - begin));
  std::iota(idx.begin(), idx.end(), begin);
  Batch batch = gather(source_->val(), idx);
  batch.data = config_.jokers.apply_eval(batch.data);
  return batch;
}

Batch FeedSensor::next_batch(bool train) {
  if (train) return train_batch(cursor_++);
  Batch batch = val_batch(val_cursor_);
  val_cursor_ = (val_cursor_ + 1) % val_batches();
  return batch;
}

std::vector<Tensor> FeedSensor::example_inputs() const {
  const Split& train = source_->train();
  const std::size_t b = std::min(config_.batch_size, train.size());
  const Shape data = config_.jokers.output_shape(train.images.shape().with_leading(b));
  return {Tensor::zeros(data, train.images.dtype()), Tensor::zeros(Shape{b}, train.images.dtype())};
}

}  // namespace akid

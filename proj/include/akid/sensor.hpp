#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "akid/config.hpp"
#include "akid/rng.hpp"
#include "akid/tensor.hpp"

namespace akid {

// --- IDX files (big-endian header; unsigned-byte payloads) ---

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;  // 2051
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;  // 2049

struct IdxData {
  std::uint32_t magic = 0;
  std::vector<std::uint32_t> dims;
  Tensor images;                     // [N,H,W], values 0..255, when magic is 2051
  std::vector<std::int64_t> labels;  // when magic is 2049
};

// Reads plain or gzip-compressed IDX files.
IdxData load_idx(const std::string& path);
// Writes the uncompressed form; load_idx of the output reproduces `data`.
void write_idx(const std::string& path, const IdxData& data);

// --- dataset cache ---

// $AKID_DATA_PATH, or "data" when unset.
std::string data_root();

std::string sha256_hex(const std::string& path);

// Returns the body of `url`; throws IoError on failure.
using Fetcher = std::function<std::string(const std::string& url)>;
Fetcher curl_fetcher();

struct RemoteFile {
  std::string name;                   // cache file name, also appended to the url
  std::optional<std::string> sha256;  // of the cached bytes
};

// Makes every file present in `work_dir`. A file counts as cached under its
// name or its name plus ".gz"; only missing files are downloaded (as
// <url><name>.gz). Offline mode never downloads.
void fetch_remote(const std::string& work_dir, const std::string& url, const std::vector<RemoteFile>& files,
                  bool offline, const Fetcher& fetcher);

// --- sources ---

struct SourceConfig {
  std::string kind = "mnist";  // mnist | synthetic
  std::string name = "source";
  std::string work_dir;        // default: data_root() + "/mnist"
  std::string url = "http://yann.lecun.com/exdb/mnist/";
  std::size_t num_train = 50000;
  std::size_t num_val = 10000;
  bool center = true;
  bool scale = true;
  std::uint64_t seed = 0;  // synthetic generation
  bool offline = false;

  Json to_json() const;
  static SourceConfig from_json(const Json& config, const std::string& path = "source");
};

struct Split {
  Tensor images;  // [N,H,W,C]
  std::vector<std::int64_t> labels;
  std::size_t size() const { return labels.size(); }
};

// Loads examples, takes the first num_train as training and the next num_val
// as validation, then preprocesses: scale divides by 255, center subtracts the
// training mean image from both splits (scale first).
class Source {
 public:
  explicit Source(SourceConfig config);

  void setup(const Fetcher& fetcher = {});
  bool is_setup() const { return setup_done_; }

  const SourceConfig& config() const { return config_; }
  const Split& train() const;
  const Split& val() const;
  // Per-pixel training mean (after scaling); zeros when center is off.
  const Tensor& mean_image() const { return mean_; }
  std::size_t class_num() const { return class_num_; }

  // Applies the preprocessing to raw [N,H,W,C] images in place.
  static Tensor preprocess(const Tensor& raw, bool scale, const Tensor* mean);

 private:
  void load_mnist(const Fetcher& fetcher, Tensor& images, std::vector<std::int64_t>& labels) const;

  SourceConfig config_;
  Split train_;
  Split val_;
  Tensor mean_;
  std::size_t class_num_ = 10;
  bool setup_done_ = false;
};

// 8x8 single-channel images in 0..255; each class is a pair of Gaussian bumps
// at class-specific positions plus pixel noise. Labels cycle through classes.
void synthetic_examples(std::size_t count, std::uint64_t seed, Tensor& images, std::vector<std::int64_t>& labels);

// --- augmentation ---

struct JokerStep {
  enum class Kind { crop, flip };
  Kind kind = Kind::flip;
  std::size_t height = 0;  // crop
  std::size_t width = 0;   // crop
  double probability = 0.5;  // flip
};

class Joker {
 public:
  Joker() = default;
  explicit Joker(std::vector<JokerStep> steps) : steps_(std::move(steps)) {}

  const std::vector<JokerStep>& steps() const { return steps_; }
  bool empty() const { return steps_.empty(); }

  // Training augmentation: each crop takes a uniformly placed window per
  // example; each flip mirrors the width axis with its probability.
  Tensor apply(const Tensor& batch, Rng& rng) const;
  // Evaluation path: crops take the centered window, flips are skipped, so
  // validation shapes match training shapes without randomness.
  Tensor apply_eval(const Tensor& batch) const;
  // Per-example shape after the steps.
  Shape output_shape(const Shape& batch_shape) const;

  Json to_json() const;
  static Joker from_json(const Json& config, const std::string& path = "jokers");

 private:
  std::vector<JokerStep> steps_;
};

// --- batching ---

struct Batch {
  Tensor data;    // [B,H,W,C]
  Tensor labels;  // [B], integer-valued
  std::vector<std::size_t> indices;
};

struct SensorConfig {
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;
  Joker jokers;

  Json to_json() const;
  static SensorConfig from_json(const Json& config, const std::string& path = "sensor");
};

// Training batches are a pure function of (seed, clock): epoch e = clock /
// batches_per_epoch is a seeded permutation of the training split, sliced in
// order with the last partial batch kept. Validation batches are sequential
// and unaugmented.
class FeedSensor {
 public:
  FeedSensor(std::shared_ptr<const Source> source, SensorConfig config);

  const Source& source() const { return *source_; }
  const SensorConfig& config() const { return config_; }

  std::size_t batches_per_epoch() const;
  std::size_t val_batches() const;
  Batch train_batch(std::uint64_t clock) const;
  Batch val_batch(std::size_t i) const;
  std::vector<std::size_t> epoch_order(std::uint64_t epoch) const;

  // Cursor-style access: the train cursor advances one clock per call, the
  // validation cursor wraps around the split.
  Batch next_batch(bool train);
  std::uint64_t cursor() const { return cursor_; }
  void set_cursor(std::uint64_t clock) { cursor_ = clock; }

  // Example tensors shaped like one training batch: [data, labels].
  std::vector<Tensor> example_inputs() const;

 private:
  Batch gather(const Split& split, const std::vector<std::size_t>& idx) const;

  std::shared_ptr<const Source> source_;
  SensorConfig config_;
  std::uint64_t cursor_ = 0;
  std::size_t val_cursor_ = 0;
};

}  // namespace akid

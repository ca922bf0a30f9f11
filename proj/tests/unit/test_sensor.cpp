#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <set>

#include "akid/sensor.hpp"

using namespace akid;
namespace fs = std::filesystem;

namespace {

std::string fixture(const std::string& name) {
  const char* dir = std::getenv("AKID_FIXTURES");
  REQUIRE(dir != nullptr);
  return std::string(dir) + "/" + name;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

fs::path scratch_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / ("akid_test_sensor_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// Raw examples whose pixel values encode the example index, so batches can be
// traced back to the split.
std::shared_ptr<Source> indexed_source(std::size_t num_train, std::size_t num_val) {
  SourceConfig c;
  c.kind = "synthetic";
  c.num_train = num_train;
  c.num_val = num_val;
  c.center = false;
  c.scale = false;
  auto source = std::make_shared<Source>(c);
  source->setup();
  return source;
}

Tensor ramp_batch(std::size_t n, std::size_t h, std::size_t w, std::size_t c) {
  Tensor t(Shape{n, h, w, c}, DType::f64);
  for (std::size_t i = 0; i < t.numel(); ++i) t.set(i, static_cast<double>(i));
  return t;
}

}  // namespace

TEST_CASE("IDX images fixture decodes to the hand-built bytes") {
  const IdxData d = load_idx(fixture("tiny-images-idx3-ubyte"));
  CHECK(d.magic == 2051);
  CHECK(d.images.shape() == Shape{1, 2, 2});
  CHECK(d.images.to_vector() == std::vector<double>{0, 128, 255, 64});
}

TEST_CASE("IDX labels fixture decodes, plain and gzip") {
  for (const char* name : {"tiny-labels-idx1-ubyte", "tiny-labels-idx1-ubyte.gz"}) {
    const IdxData d = load_idx(fixture(name));
    CHECK(d.magic == 2049);
    CHECK(d.labels == std::vector<std::int64_t>{7, 0, 9});
  }
}

TEST_CASE("IDX errors: bad magic and truncated payload") {
  CHECK_THROWS_WITH_AS(load_idx(fixture("bad-magic-idx")), doctest::Contains("bad magic 0x000004d2"), IoError);
  CHECK_THROWS_WITH_AS(load_idx(fixture("truncated-images-idx3-ubyte")), doctest::Contains("truncated payload"), IoError);
  CHECK_THROWS_AS(load_idx(fixture("does-not-exist")), IoError);
}

TEST_CASE("IDX round trip is byte-identical") {
  const fs::path dir = scratch_dir("roundtrip");
  for (const char* name : {"tiny-images-idx3-ubyte", "tiny-labels-idx1-ubyte"}) {
    const std::string out = (dir / name).string();
    write_idx(out, load_idx(fixture(name)));
    CHECK(slurp(out) == slurp(fixture(name)));
  }
  // The gzip fixture rewrites to its decompressed form.
  const std::string out = (dir / "from-gz").string();
  write_idx(out, load_idx(fixture("tiny-labels-idx1-ubyte.gz")));
  CHECK(slurp(out) == slurp(fixture("tiny-labels-idx1-ubyte")));
}

TEST_CASE("IDX round trip on random files") {
  const fs::path dir = scratch_dir("random");
  Rng rng(11);
  for (int trial = 0; trial < 5; ++trial) {
    IdxData d;
    d.magic = kIdxImagesMagic;
    const std::size_t n = 1 + rng.below(4), h = 1 + rng.below(6), w = 1 + rng.below(6);
    d.images = Tensor(Shape{n, h, w}, DType::f32);
    for (std::size_t i = 0; i < d.images.numel(); ++i) d.images.set(i, rng.below(256));
    const std::string a = (dir / "a").string(), b = (dir / "b").string();
    write_idx(a, d);
    write_idx(b, load_idx(a));
    CHECK(slurp(a) == slurp(b));
    CHECK(load_idx(a).images.identical(d.images));
  }
}

TEST_CASE("preprocess: scale, center and identity") {
  const Tensor raw = Tensor::from(Shape{1, 1, 2, 1}, {255, 51}, DType::f64);
  CHECK(Source::preprocess(raw, true, nullptr).to_vector() == std::vector<double>{1.0, 0.2});
  CHECK(Source::preprocess(raw, false, nullptr).identical(raw));

  SourceConfig c;
  c.kind = "synthetic";
  c.num_train = 40;
  c.num_val = 10;
  Source s(c);
  s.setup();
  const Tensor& x = s.train().images;
  const std::size_t per = x.numel() / s.train().size();
  double worst = 0.0;
  for (std::size_t j = 0; j < per; ++j) {
    double sum = 0.0;
    for (std::size_t n = 0; n < s.train().size(); ++n) sum += x.at(n * per + j);
    worst = std::max(worst, std::abs(sum / static_cast<double>(s.train().size())));
  }
  CHECK(worst < 1e-6);
  // Validation images get the same mean: raw / 255 - mean.
  auto raw_source = indexed_source(40, 10);
  for (std::size_t i = 0; i < s.val().images.numel(); i += 7) {
    const double expected = raw_source->val().images.at(i) / 255.0 - s.mean_image().at(i % per);
    CHECK(s.val().images.at(i) == doctest::Approx(expected).epsilon(1e-6));
  }
}

TEST_CASE("source splits are disjoint and ordered") {
  auto all = indexed_source(30, 0);
  auto split = indexed_source(20, 10);
  const std::size_t per = all->train().images.numel() / 30;
  for (std::size_t i = 0; i < 20 * per; ++i) CHECK(split->train().images.at(i) == all->train().images.at(i));
  for (std::size_t i = 0; i < 10 * per; ++i) CHECK(split->val().images.at(i) == all->train().images.at(20 * per + i));
  CHECK(std::equal(split->val().labels.begin(), split->val().labels.end(), all->train().labels.begin() + 20));
  SourceConfig c;
  c.kind = "synthetic";
  c.num_train = 0;
  CHECK_THROWS_AS(Source{c}, ConfigError);
}

TEST_CASE("one epoch visits every training example once") {
  auto source = indexed_source(4, 0);
  FeedSensor sensor(source, SensorConfig{2, 5, {}});
  CHECK(sensor.batches_per_epoch() == 2);
  std::multiset<std::size_t> seen;
  for (std::uint64_t clock = 0; clock < 2; ++clock) {
    const Batch b = sensor.train_batch(clock);
    CHECK(b.data.shape()[0] == 2);
    seen.insert(b.indices.begin(), b.indices.end());
  }
  CHECK(seen == std::multiset<std::size_t>{0, 1, 2, 3});
}

TEST_CASE("epochs with a partial last batch keep every example") {
  auto source = indexed_source(7, 0);
  FeedSensor sensor(source, SensorConfig{3, 1, {}});
  CHECK(sensor.batches_per_epoch() == 3);
  std::multiset<std::size_t> seen;
  for (std::uint64_t clock = 3; clock < 6; ++clock) {
    const Batch b = sensor.train_batch(clock);
    seen.insert(b.indices.begin(), b.indices.end());
    if (clock == 5) CHECK(b.indices.size() == 1);
  }
  CHECK(seen.size() == 7);
  CHECK(std::set<std::size_t>(seen.begin(), seen.end()).size() == 7);
}

TEST_CASE("batch larger than the split gives one batch of the split") {
  auto source = indexed_source(5, 0);
  FeedSensor sensor(source, SensorConfig{64, 0, {}});
  CHECK(sensor.batches_per_epoch() == 1);
  CHECK(sensor.train_batch(0).data.shape()[0] == 5);
  CHECK(sensor.example_inputs()[0].shape() == Shape{5, 8, 8, 1});
}

TEST_CASE("epoch order depends only on the seed") {
  auto source = indexed_source(50, 0);
  FeedSensor a(source, SensorConfig{8, 3, {}});
  FeedSensor b(source, SensorConfig{8, 3, {}});
  FeedSensor c(source, SensorConfig{8, 4, {}});
  CHECK(a.epoch_order(0) == b.epoch_order(0));
  CHECK(a.epoch_order(1) == b.epoch_order(1));
  CHECK(a.epoch_order(0) != a.epoch_order(1));
  CHECK(a.epoch_order(0) != c.epoch_order(0));
  for (std::uint64_t clock = 0; clock < 10; ++clock) CHECK(a.next_batch(true).data.identical(b.train_batch(clock).data));
}

TEST_CASE("batches keep data and labels aligned") {
  auto source = indexed_source(30, 0);
  FeedSensor sensor(source, SensorConfig{7, 2, Joker({{JokerStep::Kind::flip, 0, 0, 0.5}})});
  const Split& train = source->train();
  const std::size_t per = train.images.numel() / train.size();
  for (std::uint64_t clock = 0; clock < 8; ++clock) {
    const Batch b = sensor.train_batch(clock);
    for (std::size_t k = 0; k < b.indices.size(); ++k) {
      CHECK(b.labels.at(k) == static_cast<double>(train.labels[b.indices[k]]));
      // Flip leaves the per-example pixel sum unchanged.
      double got = 0.0, want = 0.0;
      for (std::size_t j = 0; j < per; ++j) {
        got += b.data.at(k * per + j);
        want += train.images.at(b.indices[k] * per + j);
      }
      CHECK(got == doctest::Approx(want));
    }
  }
}

TEST_CASE("validation batches are sequential and bypass jokers") {
  auto source = indexed_source(10, 5);
  Joker jokers({{JokerStep::Kind::flip, 0, 0, 1.0}});
  FeedSensor sensor(source, SensorConfig{2, 0, jokers});
  CHECK(sensor.val_batches() == 3);
  const Batch b0 = sensor.next_batch(false);
  CHECK(b0.indices == std::vector<std::size_t>{0, 1});
  const std::size_t per = source->val().images.numel() / 5;
  for (std::size_t i = 0; i < 2 * per; ++i) CHECK(b0.data.at(i) == source->val().images.at(i));
  sensor.next_batch(false);
  CHECK(sensor.next_batch(false).indices == std::vector<std::size_t>{4});
  CHECK(sensor.next_batch(false).indices == std::vector<std::size_t>{0, 1});
}

TEST_CASE("jokers: flip identities and crop shape") {
  const Tensor x = ramp_batch(3, 4, 5, 2);
  Rng rng(1);
  CHECK(Joker({{JokerStep::Kind::flip, 0, 0, 0.0}}).apply(x, rng).identical(x));
  Joker forced({{JokerStep::Kind::flip, 0, 0, 1.0}});
  const Tensor once = forced.apply(x, rng);
  CHECK_FALSE(once.identical(x));
  CHECK(once.at(0) == x.at(4 * 2));  // (0,0,0,c0) came from (0,0,4,c0)
  CHECK(forced.apply(once, rng).identical(x));

  Joker crop({{JokerStep::Kind::crop, 24, 24, 0.5}});
  const Tensor big = ramp_batch(2, 28, 28, 1);
  CHECK(crop.apply(big, rng).shape() == Shape{2, 24, 24, 1});
  CHECK(crop.output_shape(Shape{2, 28, 28, 3}) == Shape{2, 24, 24, 3});
  CHECK_THROWS_AS(crop.apply(ramp_batch(1, 20, 28, 1), rng), ShapeError);
}

TEST_CASE("crop windows are contiguous sub-images at uniform offsets") {
  const Tensor x = ramp_batch(1, 6, 6, 1);
  Joker crop({{JokerStep::Kind::crop, 4, 4, 0.5}});
  Rng rng(9);
  std::set<std::pair<int, int>> offsets;
  for (int t = 0; t < 400; ++t) {
    const Tensor y = crop.apply(x, rng);
    const int oy = static_cast<int>(y.at(0)) / 6, ox = static_cast<int>(y.at(0)) % 6;
    offsets.insert({oy, ox});
    for (std::size_t r = 0; r < 4; ++r) {
      for (std::size_t c = 0; c < 4; ++c) CHECK(y.at(r * 4 + c) == static_cast<double>((oy + r) * 6 + ox + c));
    }
  }
  CHECK(offsets.size() == 9);
  // Evaluation takes the centered window.
  CHECK(crop.apply_eval(x).at(0) == 7.0);
}

TEST_CASE("fetch_remote: cache hit, offline miss, integrity") {
  const fs::path dir = scratch_dir("fetch");
  fs::copy_file(fixture("tiny-labels-idx1-ubyte.gz"), dir / "labels.gz");
  int calls = 0;
  Fetcher counting = [&](const std::string&) {
    ++calls;
    return slurp(fixture("tiny-images-idx3-ubyte"));
  };
  const std::string gz_sha = "3fefd86db9c441844d370f51ea9690053524d1d0ba35c44a2c6482d124133701";
  CHECK(sha256_hex(fixture("tiny-labels-idx1-ubyte.gz")) == gz_sha);

  fetch_remote(dir.string(), "http://example.invalid/", {{"labels", gz_sha}}, false, counting);
  CHECK(calls == 0);

  CHECK_THROWS_WITH_AS(fetch_remote(dir.string(), "http://example.invalid/", {{"images", std::nullopt}}, true, counting),
                       doctest::Contains("dataset missing"), IoError);
  CHECK(calls == 0);

  CHECK_THROWS_WITH_AS(fetch_remote(dir.string(), "", {{"labels", std::string(64, '0')}}, false, counting),
                       doctest::Contains("integrity"), IoError);

  std::string requested;
  Fetcher recording = [&](const std::string& url) {
    requested = url;
    return slurp(fixture("tiny-images-idx3-ubyte"));
  };
  fetch_remote(dir.string(), "http://example.invalid/", {{"images", sha256_hex(fixture("tiny-images-idx3-ubyte"))}}, false,
               recording);
  CHECK(requested == "http://example.invalid/images.gz");
  CHECK(fs::exists(dir / "images.gz"));

  CHECK_THROWS_WITH_AS(
      fetch_remote(dir.string(), "http://example.invalid/", {{"other", std::string(64, 'f')}}, false, recording),
      doctest::Contains("integrity"), IoError);
  CHECK_FALSE(fs::exists(dir / "other.gz"));
}

TEST_CASE("mnist source reads an IDX cache without the network") {
  const fs::path dir = scratch_dir("mnist");
  IdxData img{kIdxImagesMagic, {}, Tensor(Shape{6, 3, 3}, DType::f32), {}};
  for (std::size_t i = 0; i < img.images.numel(); ++i) img.images.set(i, static_cast<double>(i % 256));
  IdxData lab{kIdxLabelsMagic, {}, {}, {1, 2, 3, 4, 5, 6}};
  write_idx((dir / "train-images-idx3-ubyte").string(), img);
  write_idx((dir / "train-labels-idx1-ubyte").string(), lab);
  SourceConfig c;
  c.work_dir = dir.string();
  c.num_train = 4;
  c.num_val = 2;
  c.center = false;
  c.offline = true;
  Source s(c);
  s.setup();
  CHECK(s.train().images.shape() == Shape{4, 3, 3, 1});
  CHECK(s.val().labels == std::vector<std::int64_t>{5, 6});
  CHECK(s.val().images.at(0) == doctest::Approx(36.0 / 255.0));

  c.num_train = 6;
  Source too_many(c);
  CHECK_THROWS_AS(too_many.setup(), ConfigError);
  c.work_dir = (dir / "empty").string();
  Source missing(c);
  CHECK_THROWS_WITH_AS(missing.setup(), doctest::Contains("dataset missing"), IoError);
}

TEST_CASE("config round trips and errors") {
  SensorConfig s{32, 7, Joker({{JokerStep::Kind::crop, 24, 24, 0.5}, {JokerStep::Kind::flip, 0, 0, 0.25}})};
  CHECK(SensorConfig::from_json(s.to_json()).to_json() == s.to_json());
  SourceConfig c;
  c.kind = "synthetic";
  CHECK(SourceConfig::from_json(c.to_json()).to_json() == c.to_json());
  CHECK_THROWS_WITH_AS(SensorConfig::from_json(Json{{"jokers", Json::array({Json{{"type", "rotate"}}})}}),
                       doctest::Contains("sensor.jokers[0].type"), ConfigError);
  CHECK_THROWS_WITH_AS(SourceConfig::from_json(Json{{"kind", "mnist"}, {"bogus", 1}}), doctest::Contains("source.bogus"),
                       ConfigError);
  CHECK_THROWS_AS(SensorConfig::from_json(Json{{"batch_size", 0}}), ConfigError);
}

TEST_CASE("synthetic source is seeded and class-separable") {
  Tensor a, b, c;
  std::vector<std::int64_t> la, lb, lc;
  synthetic_examples(20, 1, a, la);
  synthetic_examples(20, 1, b, lb);
  synthetic_examples(20, 2, c, lc);
  CHECK(a.identical(b));
  CHECK_FALSE(a.identical(c));
  CHECK(la[13] == 3);
  // Nearest class mean classifies most held-out examples.
  Tensor train, test;
  std::vector<std::int64_t> ltrain, ltest;
  synthetic_examples(500, 3, train, ltrain);
  synthetic_examples(200, 4, test, ltest);
  std::vector<std::vector<double>> mean(10, std::vector<double>(64, 0.0));
  for (std::size_t n = 0; n < 500; ++n) {
    for (std::size_t j = 0; j < 64; ++j) mean[ltrain[n]][j] += train.at(n * 64 + j) / 50.0;
  }
  int correct = 0;
  for (std::size_t n = 0; n < 200; ++n) {
    std::size_t best = 0;
    double best_d = 1e300;
    for (std::size_t k = 0; k < 10; ++k) {
      double d = 0.0;
      for (std::size_t j = 0; j < 64; ++j) d += std::pow(test.at(n * 64 + j) - mean[k][j], 2);
      if (d < best_d) best_d = d, best = k;
    }
    correct += best == static_cast<std::size_t>(ltest[n]);
  }
  CHECK(correct >= 180);
}

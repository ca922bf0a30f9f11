#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "akid/config.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
  int status = -1;
  std::string output;
};

std::string env(const char* name) {
  const char* v = std::getenv(name);
  REQUIRE_MESSAGE(v != nullptr, name << " is not set; run through ctest");
  return v;
}

Result run_akid(const std::string& args) {
  const std::string cmd = env("AKID_EXE") + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  Result r;
  std::array<char, 4096> buf{};
  while (std::fgets(buf.data(), buf.size(), pipe) != nullptr) r.output += buf.data();
  const int status = pclose(pipe);
  r.status = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string config(const char* name) { return (fs::path(env("AKID_CONFIGS")) / name).string(); }

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "akid_test_cli" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("train writes summaries, checkpoint and metrics") {
  const fs::path dir = scratch("train");
  const Result r = run_akid("train --config " + config("one_layer_brain.json") + " --log-dir " + dir.string() +
                        " --kid.max_steps=20");
  CHECK(r.status == 0);
  CHECK(r.output.find("val accuracy") != std::string::npos);
  for (const char* f : {"scalars.csv", "distributions.csv", "checkpoint.akck", "metrics.json", "config.json"}) {
    CHECK_MESSAGE(fs::exists(dir / f), f);
  }
  CHECK(akid::parse_json_file((dir / "metrics.json").string())["clock"] == 20);
}

TEST_CASE("bad config exits nonzero with a path-precise message") {
  const Result unknown = run_akid("train --config " + config("one_layer_brain.json") + " --kid.bogus=1");
  CHECK(unknown.status != 0);
  CHECK(unknown.output.find("kid.bogus") != std::string::npos);
  const Result missing = run_akid("train --config /nonexistent/config.json");
  CHECK(missing.status != 0);
  const Result malformed = run_akid("train --config " + config("one_layer_brain.json") + " --sensor.batch_size=-3");
  CHECK(malformed.status != 0);
  CHECK(malformed.output.find("sensor.batch_size") != std::string::npos);
}

TEST_CASE("--engine.num_towers=2 override is honored") {
  const fs::path dir = scratch("override");
  const Result r = run_akid("train --config " + config("one_layer_brain.json") + " --log-dir " + dir.string() +
                        " --kid.max_steps=4 --engine.name=data_parallel --engine.num_towers=2");
  REQUIRE(r.status == 0);
  const akid::Json saved = akid::parse_json_file((dir / "config.json").string());
  CHECK(saved["engine"]["name"] == "data_parallel");
  CHECK(saved["engine"]["num_towers"] == 2);
}

TEST_CASE("two seeded runs give identical checkpoints") {
  const fs::path a = scratch("seed_a");
  const fs::path b = scratch("seed_b");
  const fs::path c = scratch("seed_c");
  const std::string base = "train --config " + config("one_layer_brain.json") + " --kid.max_steps=30 --log-dir ";
  REQUIRE(run_akid(base + a.string() + " --seed 7").status == 0);
  REQUIRE(run_akid(base + b.string() + " --seed 7").status == 0);
  REQUIRE(run_akid(base + c.string() + " --seed 8").status == 0);
  CHECK(slurp(a / "checkpoint.akck") == slurp(b / "checkpoint.akck"));
  CHECK(slurp(a / "scalars.csv") == slurp(b / "scalars.csv"));
  CHECK(slurp(a / "checkpoint.akck") != slurp(c / "checkpoint.akck"));
}

TEST_CASE("tune runs the 2 x 2 example and prints four rows") {
  const fs::path dir = scratch("tune");
  const Result r = run_akid("tune " + config("tune_example.json") + " --results " + dir.string() + " --run-id t");
  CHECK(r.status == 0);
  for (const char* id : {"net0_opt0", "net0_opt1", "net1_opt0", "net1_opt1"}) {
    CHECK_MESSAGE(r.output.find(id) != std::string::npos, id);
    CHECK(fs::exists(dir / "t" / id / "metrics.json"));
  }
  const akid::Json report = akid::parse_json_file((dir / "t" / "report.json").string());
  CHECK(report["jobs"].size() == 4);
}

TEST_CASE("tune exit status reflects a failed job") {
  const fs::path dir = scratch("tune_fail");
  std::ofstream(dir / "template.json") << R"({"seed": 1, "source": {"kind": "synthetic", "num_train": 40, "num_val": 8},
    "brain": {"name": "b", "blocks": [
      {"type": "inner_product", "name": "ip1", "out_channel_num": {{ net_paras["n"] }}},
      {"type": "softmax_with_loss", "name": "loss", "class_num": 10,
       "inputs": [{"name": "ip1", "idxs": [0]}, {"name": "system_in", "idxs": [1]}]}]},
    "kid": {"max_steps": 2}})";
  std::ofstream(dir / "spec.json") << R"({"template": "template.json", "net_paras_list": [{"n": 10}, {"n": "ten"}],
    "opt_paras_list": [{}], "num_slots": 1})";
  const Result r = run_akid("tune " + (dir / "spec.json").string() + " --results " + dir.string() + " --run-id f");
  CHECK(r.status != 0);
  CHECK(r.output.find("net0_opt0") != std::string::npos);
  CHECK(r.output.find("failed") != std::string::npos);
  CHECK(r.output.find("brain.blocks[0].out_channel_num") != std::string::npos);
}

TEST_CASE("visualize writes filters per conv layer and the graph") {
  const fs::path run = scratch("vis_run");
  const fs::path out = scratch("vis_out");
  REQUIRE(run_akid("train --config " + config("lenet_synthetic.json") + " --kid.max_steps=2 --log-dir " + run.string())
              .status == 0);
  const std::string ckpt = (run / "checkpoint.akck").string();
  const Result filters = run_akid("visualize --config " + config("lenet_synthetic.json") + " --checkpoint " + ckpt +
                              " --what filters --out " + out.string());
  CHECK(filters.status == 0);
  CHECK(fs::exists(out / "conv1_filters_2.ppm"));
  CHECK(fs::exists(out / "conv2_filters_2.ppm"));
  const Result graph = run_akid("export-graph --config " + config("lenet_synthetic.json") + " --out " + out.string());
  CHECK(graph.status == 0);
  CHECK(slurp(out / "Brain.dot").rfind("digraph \"Brain\" {", 0) == 0);
  const Result missing = run_akid("visualize --config " + config("lenet_synthetic.json") +
                              " --checkpoint /nonexistent.akck --what filters --out " + out.string());
  CHECK(missing.status != 0);
  CHECK(missing.output.find("checkpoint not found") != std::string::npos);
}

#include "akid/tuner.hpp"

#include <spawn.h>
#include <fcntl.h>
#include <sys/wait.h>

#include <algorithm>
#include <cstring>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include "akid/experiment.hpp"

extern char** environ;

namespace akid {

namespace fs = std::filesystem;

// ------------------------------------------------------------------ render

namespace {

struct Subscript {
  bool is_index = false;
  std::string key;
  std::size_t index = 0;
};

struct Placeholder {
  std::string root;  // net_paras | opt_paras
  std::vector<Subscript> path;
  std::string text;
};

Placeholder parse_placeholder(const std::string& body) {
  Placeholder p;
  p.text = body;
  std::size_t i = 0;
  auto fail = [&](const std::string& why) -> Placeholder {
    throw ConfigError("parse error in {{" + body + "}}: " + why);
  };
  auto skip_ws = [&] {
    while (i < body.size() && std::isspace(static_cast<unsigned char>(body[i]))) ++i;
  };
  skip_ws();
  const std::size_t start = i;
  while (i < body.size() && (std::isalnum(static_cast<unsigned char>(body[i])) || body[i] == '_')) ++i;
  p.root = body.substr(start, i - start);
  if (p.root != "net_paras" && p.root != "opt_paras") return fail("expected net_paras or opt_paras");
  while (true) {
    skip_ws();
    if (i == body.size()) break;
    if (body[i] != '[') return fail("expected '[' at offset " + std::to_string(i));
    ++i;
    skip_ws();
    Subscript s;
    if (i < body.size() && (body[i] == '"' || body[i] == '\'')) {
      const char quote = body[i++];
      const std::size_t end = body.find(quote, i);
      if (end == std::string::npos) return fail("unterminated key");
      s.key = body.substr(i, end - i);
      i = end + 1;
    } else if (i < body.size() && std::isdigit(static_cast<unsigned char>(body[i]))) {
      s.is_index = true;
      while (i < body.size() && std::isdigit(static_cast<unsigned char>(body[i]))) s.index = s.index * 10 + (body[i++] - '0');
    } else {
      return fail("subscript must be a quoted key or an integer");
    }
    skip_ws();
    if (i == body.size() || body[i] != ']') return fail("expected ']'");
    ++i;
    p.path.push_back(s);
  }
  if (p.path.empty()) return fail("needs at least one subscript");
  return p;
}

std::string describe(const Placeholder& p, std::size_t upto) {
  std::string out = p.root;
  for (std::size_t k = 0; k < upto; ++k) {
    out += p.path[k].is_index ? "[" + std::to_string(p.path[k].index) + "]" : "[\"" + p.path[k].key + "\"]";
  }
  return out;
}

}  // namespace

std::string render(const std::string& tmpl, const Json& net_paras, const Json& opt_paras) {
  std::string out;
  std::size_t at = 0;
  while (true) {
    const std::size_t open = tmpl.find("{{", at);
    if (open == std::string::npos) {
      out.append(tmpl, at, std::string::npos);
      return out;
    }
    const std::size_t close = tmpl.find("}}", open + 2);
    if (close == std::string::npos) throw ConfigError("parse error: unterminated {{ at offset " + std::to_string(open));
    out.append(tmpl, at, open - at);
    const Placeholder p = parse_placeholder(tmpl.substr(open + 2, close - open - 2));
    const Json* node = p.root == "net_paras" ? &net_paras : &opt_paras;
    for (std::size_t k = 0; k < p.path.size(); ++k) {
      const Subscript& s = p.path[k];
      const Json* next = nullptr;
      if (s.is_index && node->is_array() && s.index < node->size()) next = &(*node)[s.index];
      if (!s.is_index && node->is_object() && node->contains(s.key)) next = &(*node)[s.key];
      if (next == nullptr) throw ConfigError("render error: " + describe(p, k + 1) + " is not defined");
      node = next;
    }
    out += node->dump();
    at = close + 2;
  }
}

TuneSpec TuneSpec::from_json(const Json& config, const std::string& base_dir) {
  ObjectReader r(config, "tune");
  TuneSpec spec;
  const std::string tmpl = r.get<std::string>("template");
  const fs::path candidate = fs::path(tmpl).is_absolute() ? fs::path(tmpl) : fs::path(base_dir) / tmpl;
  if (tmpl.find('\n') == std::string::npos && tmpl.find("{{") == std::string::npos && fs::is_regular_file(candidate)) {
    std::ifstream in(candidate);
    std::stringstream ss;
    ss << in.rdbuf();
    spec.tmpl = ss.str();
  } else {
    spec.tmpl = tmpl;
  }
  auto list = [&](const char* key) {
    const Json& v = r.required(key);
    if (!v.is_array() || v.empty()) throw ConfigError(r.path(key) + ": expected a non-empty array of records");
    return std::vector<Json>(v.begin(), v.end());
  };
  spec.net_paras_list = list("net_paras_list");
  spec.opt_paras_list = list("opt_paras_list");
  spec.num_slots = r.get<std::size_t>("num_slots", spec.num_slots);
  if (spec.num_slots == 0 || spec.num_slots > 64) throw ConfigError(r.path("num_slots") + ": must be in [1, 64]");
  spec.results_dir = r.get<std::string>("results_dir", spec.results_dir);
  r.finish();
  return spec;
}

TuneSpec TuneSpec::from_file(const std::string& path) {
  return from_json(parse_json_file(path), fs::path(path).parent_path().string());
}

std::vector<TuneJob> expand(const TuneSpec& spec) {
  std::vector<TuneJob> jobs;
  for (std::size_t i = 0; i < spec.net_paras_list.size(); ++i) {
    for (std::size_t j = 0; j < spec.opt_paras_list.size(); ++j) {
      TuneJob job;
      job.id = "net" + std::to_string(i) + "_opt" + std::to_string(j);
      job.net_index = i;
      job.opt_index = j;
      try {
        job.config_text = render(spec.tmpl, spec.net_paras_list[i], spec.opt_paras_list[j]);
      } catch (const ConfigError& e) {
        job.render_error = e.what();
      }
      jobs.push_back(std::move(job));
    }
  }
  return jobs;
}

// ------------------------------------------------------------------ slots

void TraceLog::add(const std::string& job, const std::string& kind, long slot, std::size_t busy,
                   std::size_t outstanding) {
  std::lock_guard lock(mutex_);
  events_.push_back({events_.size(), job, kind, slot, busy, outstanding});
}

std::vector<TraceEvent> TraceLog::events() const {
  std::lock_guard lock(mutex_);
  return events_;
}

SlotPool::SlotPool(std::size_t num_slots, TraceLog* trace)
    : num_slots_(num_slots), permits_(static_cast<std::ptrdiff_t>(num_slots)), trace_(trace) {
  if (num_slots == 0 || num_slots > 64) throw ConfigError("slot pool needs 1 to 64 slots");
}

void SlotPool::log(const std::string& job, const char* kind, long slot) {
  if (trace_ != nullptr) trace_->add(job, kind, slot, busy_, outstanding_);
}

std::size_t SlotPool::acquire(const std::string& job) {
  permits_.acquire();
  std::size_t slot = 0;
  {
    std::lock_guard lock(mask_mutex_);
    ++outstanding_;
    log(job, "acquire", -1);
    log(job, "lock", -1);
    while (slot < num_slots_ && (mask_ >> slot) & 1u) ++slot;
    if (slot == num_slots_) throw StateError("slot pool: permit granted but every slot is busy");
    mask_ |= std::uint64_t{1} << slot;
    ++busy_;
    log(job, "claim", static_cast<long>(slot));
    log(job, "unlock", static_cast<long>(slot));
  }
  return slot;
}

void SlotPool::release(const std::string& job, std::size_t slot) {
  {
    std::lock_guard lock(mask_mutex_);
    log(job, "lock", static_cast<long>(slot));
    mask_ &= ~(std::uint64_t{1} << slot);
    --busy_;
    log(job, "free", static_cast<long>(slot));
    log(job, "unlock", static_cast<long>(slot));
    --outstanding_;
    log(job, "release", static_cast<long>(slot));
  }
  permits_.release();
}

std::uint64_t SlotPool::mask() const {
  std::lock_guard lock(mask_mutex_);
  return mask_;
}

// ------------------------------------------------------------------ run

bool TuneReport::all_ok() const {
  return std::all_of(jobs.begin(), jobs.end(), [](const JobReport& j) { return j.status == "ok"; });
}

Json TuneReport::to_json() const {
  Json j{{"run_id", run_id}, {"num_slots", num_slots}, {"peak_concurrency", peak_concurrency}, {"jobs", Json::array()}};
  for (const auto& job : jobs) {
    Json r{{"id", job.id}, {"slot", job.slot}, {"status", job.status}, {"wall_time", job.wall_time}, {"metrics", job.metrics}};
    if (!job.error.empty()) r["error"] = job.error;
    j["jobs"].push_back(r);
  }
  return j;
}

TuneReport run(const TuneSpec& spec, const JobRunner& runner, const std::string& run_id) {
  const auto jobs = expand(spec);
  TraceLog trace;
  SlotPool pool(spec.num_slots, &trace);
  TuneReport report;
  report.run_id = run_id;
  report.num_slots = spec.num_slots;
  report.jobs.resize(jobs.size());
  std::mutex report_mutex;
  const fs::path run_dir = fs::path(spec.results_dir) / run_id;

  auto work = [&](std::size_t k) {
    const TuneJob& job = jobs[k];
    JobReport r;
    r.id = job.id;
    if (!job.render_error.empty()) {
      r.status = "failed";
      r.error = job.render_error;
    } else {
      const std::size_t slot = pool.acquire(job.id);
      r.slot = static_cast<long>(slot);
      trace.add(job.id, "start", r.slot, 0, 0);
      const auto begin = std::chrono::steady_clock::now();
      JobOutcome outcome;
      try {
        const fs::path job_dir = run_dir / job.id;
        fs::create_directories(job_dir);
        outcome = runner(job, slot, job_dir.string());
      } catch (const std::exception& e) {
        outcome.ok = false;
        outcome.error = e.what();
      }
      r.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - begin).count();
      trace.add(job.id, "end", r.slot, 0, 0);
      pool.release(job.id, slot);
      r.status = outcome.ok ? "ok" : "failed";
      r.metrics = outcome.metrics;
      r.error = outcome.error;
    }
    std::lock_guard lock(report_mutex);
    report.jobs[k] = std::move(r);
  };
  {
    std::vector<std::jthread> workers;
    for (std::size_t k = 0; k < jobs.size(); ++k) workers.emplace_back(work, k);
  }
  report.trace = trace.events();
  std::size_t running = 0;
  for (const auto& e : report.trace) {
    if (e.kind == "start") report.peak_concurrency = std::max(report.peak_concurrency, ++running);
    if (e.kind == "end") --running;
  }
  return report;
}

void write_report(const TuneReport& report, const std::string& dir) {
  fs::create_directories(dir);
  {
    std::ofstream out(fs::path(dir) / "report.json", std::ios::trunc);
    if (!out) throw IoError("cannot write report under " + dir);
    out << report.to_json().dump(2) << '\n';
  }
  std::ofstream csv(fs::path(dir) / "summary.csv", std::ios::trunc);
  if (!csv) throw IoError("cannot write summary under " + dir);
  csv << "id,slot,status,wall_time,train_loss,val_loss,val_accuracy\n";
  auto metric = [](const Json& m, const char* key) { return m.contains(key) ? m[key].dump() : std::string(); };
  for (const auto& j : report.jobs) {
    csv << j.id << ',' << j.slot << ',' << j.status << ',' << j.wall_time << ',' << metric(j.metrics, "train_loss") << ','
        << metric(j.metrics, "val_loss") << ',' << metric(j.metrics, "val_accuracy") << '\n';
  }
}

JobRunner in_process_runner(bool offline) {
  return [offline](const TuneJob& job, std::size_t, const std::string& job_dir) {
    Json doc = Json::parse(job.config_text, nullptr, false);
    if (doc.is_discarded()) return JobOutcome{false, Json::object(), "rendered config is not valid JSON"};
    apply_override(doc, "kid.log_dir", Json(job_dir).dump());
    if (offline) apply_override(doc, "source.offline", "true");
    std::ofstream(fs::path(job_dir) / "config.json") << doc.dump(2) << '\n';
    auto kid = build_kid(ExperimentConfig::from_json(doc));
    kid->setup();
    const Metrics m = kid->practice();
    const Json metrics = metrics_json(m);
    std::ofstream(fs::path(job_dir) / "metrics.json") << metrics.dump(2) << '\n';
    return JobOutcome{true, metrics, ""};
  };
}

JobRunner subprocess_runner(const std::string& exe, bool offline) {
  return [exe, offline](const TuneJob& job, std::size_t slot, const std::string& job_dir) {
    const std::string config_path = (fs::path(job_dir) / "config.json").string();
    std::ofstream(config_path) << job.config_text;
    std::vector<std::string> args{exe, "train", "--config", config_path, "--log-dir", job_dir};
    if (offline) args.push_back("--offline");
    std::vector<char*> argv;
    for (auto& a : args) argv.push_back(a.data());
    argv.push_back(nullptr);
    // The slot index is handed to the child the way a device id would be.
    std::vector<std::string> env_store;
    for (char** e = environ; *e != nullptr; ++e) {
      if (std::string(*e).rfind("AKID_SLOT=", 0) != 0) env_store.emplace_back(*e);
    }
    env_store.push_back("AKID_SLOT=" + std::to_string(slot));
    std::vector<char*> envp;
    for (auto& e : env_store) envp.push_back(e.data());
    envp.push_back(nullptr);

    posix_spawn_file_actions_t actions;
    posix_spawn_file_actions_init(&actions);
    const std::string log_path = (fs::path(job_dir) / "stdout.log").string();
    posix_spawn_file_actions_addopen(&actions, 1, log_path.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
    posix_spawn_file_actions_adddup2(&actions, 1, 2);
    pid_t pid = 0;
    const int rc = posix_spawn(&pid, exe.c_str(), &actions, nullptr, argv.data(), envp.data());
    posix_spawn_file_actions_destroy(&actions);
    if (rc != 0) return JobOutcome{false, Json::object(), "cannot start " + exe + ": " + std::strerror(rc)};
    int status = 0;
    waitpid(pid, &status, 0);
    if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) {
      return JobOutcome{false, Json::object(),
                        "subprocess exited with status " + std::to_string(WIFEXITED(status) ? WEXITSTATUS(status) : -1) +
                            " (see " + log_path + ")"};
    }
    const fs::path metrics_path = fs::path(job_dir) / "metrics.json";
    if (!fs::exists(metrics_path)) return JobOutcome{false, Json::object(), "subprocess wrote no metrics.json"};
    return JobOutcome{true, parse_json_file(metrics_path.string()), ""};
  };
}

}  // namespace akid

#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <mutex>
#include <semaphore>
#include <string>
#include <vector>

#include "akid/config.hpp"

namespace akid {

// --- templates ---

// Substitutes {{ net_paras[...] }} and {{ opt_paras[...] }} placeholders. A
// path is one or more subscripts, each a quoted key or an integer index. Values
// are written as JSON fragments. Malformed placeholders raise ConfigError
// starting "parse error"; paths missing from the records raise ConfigError
// starting "render error".
std::string render(const std::string& tmpl, const Json& net_paras, const Json& opt_paras);

struct TuneSpec {
  std::string tmpl;
  std::vector<Json> net_paras_list;
  std::vector<Json> opt_paras_list;
  std::size_t num_slots = 1;
  std::string results_dir = "results";

  // "template" holds the text itself or the path of a file holding it
  // (relative paths resolve against `base_dir`).
  static TuneSpec from_json(const Json& config, const std::string& base_dir = ".");
  static TuneSpec from_file(const std::string& path);
};

struct TuneJob {
  std::string id;  // net<i>_opt<j>
  std::size_t net_index = 0;
  std::size_t opt_index = 0;
  std::string config_text;
  std::string render_error;  // non-empty when the template did not render
};

// Row-major: net index outer, opt index inner.
std::vector<TuneJob> expand(const TuneSpec& spec);

// --- slots ---

struct TraceEvent {
  std::uint64_t seq = 0;
  std::string job;
  std::string kind;  // acquire, lock, claim, unlock, start, end, free, release
  long slot = -1;
  std::size_t busy = 0;         // slots marked in the mask after the event
  std::size_t outstanding = 0;  // semaphore permits held after the event
};

class TraceLog {
 public:
  void add(const std::string& job, const std::string& kind, long slot, std::size_t busy, std::size_t outstanding);
  std::vector<TraceEvent> events() const;

 private:
  mutable std::mutex mutex_;
  std::vector<TraceEvent> events_;
};

// A counting semaphore with one permit per slot, plus a bit mask of busy
// slots. The mask lock is held only while flipping a bit.
class SlotPool {
 public:
  explicit SlotPool(std::size_t num_slots, TraceLog* trace = nullptr);

  // Waits for a permit, then claims the lowest free slot.
  std::size_t acquire(const std::string& job);
  void release(const std::string& job, std::size_t slot);

  std::size_t num_slots() const { return num_slots_; }
  std::uint64_t mask() const;

 private:
  void log(const std::string& job, const char* kind, long slot);

  std::size_t num_slots_;
  std::counting_semaphore<64> permits_;
  mutable std::mutex mask_mutex_;
  std::uint64_t mask_ = 0;
  std::size_t busy_ = 0;
  std::size_t outstanding_ = 0;
  TraceLog* trace_;
};

// --- running ---

struct JobOutcome {
  bool ok = false;
  Json metrics = Json::object();
  std::string error;
};

// Runs one rendered job on `slot` with its own output directory.
using JobRunner = std::function<JobOutcome(const TuneJob& job, std::size_t slot, const std::string& job_dir)>;

struct JobReport {
  std::string id;
  long slot = -1;
  std::string status;  // ok | failed
  double wall_time = 0.0;
  Json metrics = Json::object();
  std::string error;
};

struct TuneReport {
  std::string run_id;
  std::size_t num_slots = 0;
  std::vector<JobReport> jobs;  // expansion order
  std::vector<TraceEvent> trace;
  std::size_t peak_concurrency = 0;

  bool all_ok() const;
  Json to_json() const;
};

// Every job waits for a slot, runs once, and records its outcome; a failing
// job does not stop the others. Job directories are <results>/<run_id>/<id>.
TuneReport run(const TuneSpec& spec, const JobRunner& runner, const std::string& run_id);

// Writes report.json and summary.csv under <results>/<run_id>.
void write_report(const TuneReport& report, const std::string& dir);

// Trains each job's config in this process; log_dir is the job directory.
JobRunner in_process_runner(bool offline);
// Runs `<exe> train --config <job_dir>/config.json --log-dir <job_dir>` and
// reads <job_dir>/metrics.json.
JobRunner subprocess_runner(const std::string& exe, bool offline);

}  // namespace akid

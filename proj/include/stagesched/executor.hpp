/*
 * This source code is licensed under the Apache 2.0 license found in the
 * LICENSE file in the root directory of this source tree.
 */
#pragma once

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <mutex>
#include <set>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <json.hpp>

#include "stagesched/io.hpp"
#include "stagesched/model.hpp"

namespace stagesched {

// Multiplicative noise applied to nominal durations; kind none means a factor
// of exactly 1.
struct PerturbationModel {
  enum class Kind { none, uniform_factor, lognormal };
  Kind kind = Kind::none;
  double lo = 1.0;
  double hi = 1.0;
  double sigma = 0.0;
  std::uint64_t seed = 0;

  static PerturbationModel none() { return {}; }
  static PerturbationModel uniform_factor(double lo, double hi, std::uint64_t seed) {
    PerturbationModel p;
    p.kind = Kind::uniform_factor;
    p.lo = lo;
    p.hi = hi;
    p.seed = seed;
    return p;
  }
  static PerturbationModel lognormal(double sigma, std::uint64_t seed) {
    PerturbationModel p;
    p.kind = Kind::lognormal;
    p.sigma = sigma;
    p.seed = seed;
    return p;
  }
};

struct TraceRecord {
  std::string machine;
  std::string job;
  int stage = 0;
  Ms start = 0;
  Ms end = 0;
  friend bool operator==(const TraceRecord&, const TraceRecord&) = default;
};

struct ExecutionTrace {
  std::vector<TraceRecord> records;  // sorted by (machine, start, job, stage)
  Ms makespan = 0;
  std::map<std::string, Ms> busy_ms;

  std::map<std::string, double> utilization() const {
    std::map<std::string, double> u;
    for (const auto& [machine, busy] : busy_ms)
      u[machine] = makespan > 0 ? static_cast<double>(busy) / static_cast<double>(makespan) : 0.0;
    return u;
  }
};

namespace detail {

inline double draw_factor(const PerturbationModel& pm, Rng& rng) {
  switch (pm.kind) {
    case PerturbationModel::Kind::none:
      return 1.0;
    case PerturbationModel::Kind::uniform_factor:
      return pm.lo + (pm.hi - pm.lo) * rng.uniform01();
    case PerturbationModel::Kind::lognormal:
      return std::exp(pm.sigma * rng.gaussian());
  }
  return 1.0;
}

inline void validate_perturbation(const PerturbationModel& pm) {
  if (pm.kind == PerturbationModel::Kind::uniform_factor && (pm.lo <= 0.0 || pm.hi < pm.lo))
    throw Error("uniform_factor perturbation needs 0 < lo <= hi");
  if (pm.kind == PerturbationModel::Kind::lognormal && pm.sigma < 0.0)
    throw Error("lognormal perturbation needs sigma >= 0");
}

inline Ms realized_duration(Ms nominal, double factor) {
  const double value = static_cast<double>(nominal) * factor;
  return std::max<Ms>(1, static_cast<Ms>(std::llround(value)));
}

inline void finalize_trace(ExecutionTrace& trace) {
  std::sort(trace.records.begin(), trace.records.end(),
            [](const TraceRecord& a, const TraceRecord& b) {
              return std::tie(a.machine, a.start, a.job, a.stage) <
                     std::tie(b.machine, b.start, b.job, b.stage);
            });
  for (const auto& r : trace.records) {
    trace.busy_ms[r.machine] += r.end - r.start;
    trace.makespan = std::max(trace.makespan, r.end);
  }
}

}  // namespace detail

// Event-driven interpretation of a plan set. Each machine advances through
// its statements; EXEC consumes the realized duration on that machine's
// clock, WAIT blocks until the matching SIGNAL event exists, SIGNAL is
// instantaneous. Dangling waits are rejected statically; a cyclic wait
// pattern is reported as a deadlock with the blocked operands.
inline ExecutionTrace simulate(const std::vector<ExecutionPlan>& plans,
                               const WorkloadInstance& wi, const PerturbationModel& perturb) {
  detail::validate_perturbation(perturb);
  auto report = check_plan_set(plans, wi);
  if (!report.ok())
    throw Error("invalid plans: " + report.violations.front().locus + ": " +
                report.violations.front().message);

  std::vector<const ExecutionPlan*> ordered;
  for (const auto& p : plans) ordered.push_back(&p);
  std::sort(ordered.begin(), ordered.end(),
            [](const ExecutionPlan* a, const ExecutionPlan* b) {
              return a->machine_id < b->machine_id;
            });

  // Realized durations drawn in a fixed order: machines by id, statements in
  // plan order.
  std::map<std::pair<std::string, int>, Ms> realized;
  Rng rng(perturb.seed);
  for (const auto* plan : ordered) {
    for (const auto& s : plan->statements) {
      if (s.kind != StatementKind::exec) continue;
      const Ms nominal = wi.times.at(s.job, s.stage, plan->machine_id);
      realized[{s.job, s.stage}] = detail::realized_duration(nominal, detail::draw_factor(perturb, rng));
    }
  }

  struct MachineState {
    std::size_t pc = 0;
    Ms clock = 0;
    bool done = false;
  };
  std::vector<MachineState> states(ordered.size());
  std::map<std::pair<std::string, int>, Ms> signal_time;
  ExecutionTrace trace;

  bool progress = true;
  while (progress) {
    progress = false;
    for (std::size_t i = 0; i < ordered.size(); ++i) {
      auto& st = states[i];
      const auto& statements = ordered[i]->statements;
      while (!st.done) {
        const PlanStatement& s = statements[st.pc];
        if (s.kind == StatementKind::wait) {
          auto it = signal_time.find({s.job, s.stage});
          if (it == signal_time.end()) break;  // blocked until the signal exists
          st.clock = std::max(st.clock, it->second);
          ++st.pc;
        } else if (s.kind == StatementKind::exec) {
          const Ms duration = realized.at({s.job, s.stage});
          trace.records.push_back(
              {ordered[i]->machine_id, s.job, s.stage, st.clock, st.clock + duration});
          st.clock += duration;
          ++st.pc;
        } else if (s.kind == StatementKind::signal) {
          signal_time[{s.job, s.stage}] = st.clock;
          ++st.pc;
        } else if (s.kind == StatementKind::begin) {
          ++st.pc;
        } else {
          st.done = true;
        }
        progress = true;
      }
    }
  }

  std::string blocked;
  for (std::size_t i = 0; i < ordered.size(); ++i) {
    if (states[i].done) continue;
    const PlanStatement& s = ordered[i]->statements[states[i].pc];
    if (!blocked.empty()) blocked += ", ";
    blocked += ordered[i]->machine_id + " waiting on " + format_operand(s.job, s.stage);
  }
  if (!blocked.empty()) throw Error("deadlock: " + blocked);

  detail::finalize_trace(trace);
  return trace;
}

// Predicted makespan of a plan set: a zero-perturbation simulation. An empty
// plan set predicts 0 ms.
inline Ms predicted_makespan(const WorkloadInstance& wi, const std::vector<ExecutionPlan>& plans) {
  if (plans.empty()) return 0;
  return simulate(plans, wi, PerturbationModel::none()).makespan;
}

// Structural soundness of a realized trace: per-machine exclusivity, per-job
// stage precedence, and busy-time bookkeeping.
inline ValidationReport check_trace(const ExecutionTrace& trace) {
  ValidationReport r;
  std::map<std::string, std::vector<std::pair<Ms, Ms>>> per_machine;
  std::map<std::string, std::map<int, std::pair<Ms, Ms>>> per_job;
  std::map<std::string, Ms> busy;

  for (const auto& rec : trace.records) {
    const std::string locus = rec.machine + ":" + format_operand(rec.job, rec.stage);
    if (rec.start < 0 || rec.end < rec.start) r.add(locus, "bad interval");
    per_machine[rec.machine].push_back({rec.start, rec.end});
    if (!per_job[rec.job].emplace(rec.stage, std::make_pair(rec.start, rec.end)).second)
      r.add(locus, "operation executed twice");
    busy[rec.machine] += rec.end - rec.start;
  }

  for (auto& [machine, intervals] : per_machine) {
    std::sort(intervals.begin(), intervals.end());
    for (std::size_t i = 1; i < intervals.size(); ++i) {
      if (intervals[i].first < intervals[i - 1].second)
        r.add("machine " + machine, "overlapping execution intervals");
    }
  }

  for (const auto& [job, stages] : per_job) {
    for (const auto& [stage, window] : stages) {
      auto prev = stages.find(stage - 1);
      if (prev != stages.end() && window.first < prev->second.second)
        r.add(format_operand(job, stage), "precedence violation");
    }
  }

  for (const auto& [machine, total] : busy) {
    auto it = trace.busy_ms.find(machine);
    if (it == trace.busy_ms.end() || it->second != total)
      r.add("machine " + machine, "busy time does not match summed intervals");
  }

  return r;
}

// Percent deviation of a predicted makespan from the realized one.
inline double relative_error(Ms predicted, Ms actual) {
  if (actual <= 0) throw Error("relative error undefined for non-positive actual makespan");
  return 100.0 * std::abs(static_cast<double>(predicted) - static_cast<double>(actual)) /
         static_cast<double>(actual);
}

inline constexpr const char* kTraceCsvHeader = "machine,job,stage,start_ms,end_ms";

inline std::string serialize_trace_csv(const ExecutionTrace& trace) {
  std::string out = std::string(kTraceCsvHeader) + "\n";
  for (const auto& r : trace.records) {
    out += r.machine + "," + r.job + "," + std::to_string(r.stage) + "," +
           std::to_string(r.start) + "," + std::to_string(r.end) + "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Real backend: one executor process per machine, coordinated exclusively
// through marker files in a shared directory.
//   <root>/<run_id>/<job>.<stage>.done    stage <stage> may start (stage-1 done)
//   <root>/<run_id>/<job>.<K+1>.done      terminal marker, job complete
//   <root>/<run_id>/<job>.<stage>.failed  stage <stage> failed
//   <root>/<run_id>/<machine>.busy        machine executing a job (dynamic)
// ---------------------------------------------------------------------------

struct SyncNamespace {
  std::filesystem::path root;
  std::string run_id;

  std::filesystem::path dir() const { return root / run_id; }
  std::filesystem::path done_file(const std::string& job, int stage) const {
    return dir() / (job + "." + std::to_string(stage) + ".done");
  }
  std::filesystem::path failed_file(const std::string& job, int stage) const {
    return dir() / (job + "." + std::to_string(stage) + ".failed");
  }
  std::filesystem::path busy_file(const std::string& machine) const {
    return dir() / (machine + ".busy");
  }
};

struct RealExecConfig {
  std::string command_template;  // {job}, {stage}, {run_id} placeholders
  Ms wait_poll_ms = 1'000;
  Ms wait_timeout_ms = 86'400'000;
  int stages = 1;  // K; a terminal marker is written after a job's last stage
};

struct RealExecRecord {
  std::string job;
  int stage = 0;
  Ms start_epoch_ms = 0;
  Ms end_epoch_ms = 0;
  int exit_code = 0;
};

struct RealSignalRecord {
  std::string job;
  int stage = 0;
  Ms epoch_ms = 0;
};

struct MachineTrace {
  std::string machine;
  Ms begin_epoch_ms = 0;
  Ms end_epoch_ms = 0;
  std::vector<RealExecRecord> execs;
  std::vector<RealSignalRecord> signals;

  Ms elapsed_ms() const { return end_epoch_ms - begin_epoch_ms; }
};

namespace detail {

inline Ms epoch_ms_now() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

inline std::string substitute_placeholders(std::string text, const std::string& job, int stage,
                                           const std::string& run_id) {
  auto replace_all = [](std::string& s, const std::string& from, const std::string& to) {
    std::size_t pos = 0;
    while ((pos = s.find(from, pos)) != std::string::npos) {
      s.replace(pos, from.size(), to);
      pos += to.size();
    }
  };
  replace_all(text, "{job}", job);
  replace_all(text, "{stage}", std::to_string(stage));
  replace_all(text, "{run_id}", run_id);
  return text;
}

// Create-new marker semantics: false only when the file already exists.
inline bool create_marker(const std::filesystem::path& path) {
  std::FILE* f = std::fopen(path.string().c_str(), "wx");
  if (!f) {
    if (std::filesystem::exists(path)) return false;
    throw Error("cannot create marker file " + path.string());
  }
  std::fclose(f);
  return true;
}

inline int run_shell_command(const std::string& command) {
  const int status = std::system(command.c_str());
  if (status == -1) return -1;
  if (WIFEXITED(status)) return WEXITSTATUS(status);
  return 128;
}

}  // namespace detail

// Interprets one machine's plan against the shared directory. WAIT polls for
// the awaited stage's marker (and fails fast on the upstream failure marker);
// EXEC runs the substituted command template; SIGNAL creates the marker with
// create-new semantics. A terminal marker is written after a job's last
// stage.
inline MachineTrace execute_real(const ExecutionPlan& plan, const SyncNamespace& sync,
                                 const RealExecConfig& cfg) {
  if (cfg.stages < 1) throw Error("stages must be >= 1");
  if (cfg.wait_poll_ms <= 0) throw Error("wait_poll_ms must be positive");
  auto report = check_plan(plan, cfg.stages);
  if (!report.ok())
    throw Error("invalid plan: " + report.violations.front().locus + ": " +
                report.violations.front().message);

  std::filesystem::create_directories(sync.dir());
  MachineTrace trace;
  trace.machine = plan.machine_id;

  for (const auto& s : plan.statements) {
    switch (s.kind) {
      case StatementKind::begin:
        trace.begin_epoch_ms = detail::epoch_ms_now();
        break;
      case StatementKind::wait: {
        const auto deadline = std::chrono::steady_clock::now() +
                              std::chrono::milliseconds(cfg.wait_timeout_ms);
        while (true) {
          if (std::filesystem::exists(sync.done_file(s.job, s.stage))) break;
          if (std::filesystem::exists(sync.failed_file(s.job, s.stage - 1)))
            throw Error("upstream stage failed: " + format_operand(s.job, s.stage - 1));
          if (std::chrono::steady_clock::now() > deadline)
            throw Error("wait timeout on " + format_operand(s.job, s.stage));
          std::this_thread::sleep_for(std::chrono::milliseconds(cfg.wait_poll_ms));
        }
        break;
      }
      case StatementKind::exec: {
        const std::string command =
            detail::substitute_placeholders(cfg.command_template, s.job, s.stage, sync.run_id);
        RealExecRecord rec;
        rec.job = s.job;
        rec.stage = s.stage;
        rec.start_epoch_ms = detail::epoch_ms_now();
        rec.exit_code = detail::run_shell_command(command);
        rec.end_epoch_ms = detail::epoch_ms_now();
        trace.execs.push_back(rec);
        if (rec.exit_code != 0) {
          detail::create_marker(sync.failed_file(s.job, s.stage));
          throw Error("stage command failed for " + format_operand(s.job, s.stage) + " (exit " +
                      std::to_string(rec.exit_code) + ")");
        }
        if (s.stage == cfg.stages) {
          if (!detail::create_marker(sync.done_file(s.job, cfg.stages + 1)))
            throw Error("duplicate signal: " + format_operand(s.job, cfg.stages + 1) +
                        " already marked (run id collision?)");
          trace.signals.push_back({s.job, cfg.stages + 1, detail::epoch_ms_now()});
        }
        break;
      }
      case StatementKind::signal: {
        if (!detail::create_marker(sync.done_file(s.job, s.stage)))
          throw Error("duplicate signal: " + format_operand(s.job, s.stage) +
                      " already marked (run id collision?)");
        trace.signals.push_back({s.job, s.stage, detail::epoch_ms_now()});
        break;
      }
      case StatementKind::end:
        trace.end_epoch_ms = detail::epoch_ms_now();
        break;
    }
  }
  return trace;
}

struct DynamicResult {
  ExecutionTrace trace;
  std::map<std::string, std::string> assignment;  // job -> machine
  std::vector<std::string> failed_jobs;
  bool partial = false;
};

// Master-worker baseline, simulated. The master walks the job list in input
// order, scans machines in input order for a free one, and otherwise advances
// its clock by the poll interval (poll 0 jumps to the next completion). Each
// job runs all its stages consecutively on the chosen machine.
inline DynamicResult dynamic_run_simulated(const WorkloadInstance& wi, Ms poll_interval_ms,
                                           const PerturbationModel& perturb) {
  auto report = validate_instance(wi);
  if (!report.ok())
    throw Error("invalid instance: " + report.violations.front().locus + ": " +
                report.violations.front().message);
  if (poll_interval_ms < 0) throw Error("poll interval must be >= 0");
  detail::validate_perturbation(perturb);

  DynamicResult result;
  if (wi.jobs.empty()) return result;

  Rng rng(perturb.seed);
  std::vector<Ms> free_at(wi.machines.size(), 0);
  Ms master_clock = 0;

  for (const auto& job : wi.jobs) {
    int chosen = -1;
    while (chosen < 0) {
      for (std::size_t m = 0; m < wi.machines.size(); ++m) {
        if (free_at[m] <= master_clock) {
          chosen = static_cast<int>(m);
          break;
        }
      }
      if (chosen >= 0) break;
      if (poll_interval_ms > 0) {
        master_clock += poll_interval_ms;
      } else {
        master_clock = *std::min_element(free_at.begin(), free_at.end());
      }
    }
    const auto& machine = wi.machines[chosen];
    Ms t = master_clock;
    for (int q = 1; q <= job.stages; ++q) {
      const Ms duration = detail::realized_duration(wi.times.at(job.id, q, machine.id),
                                                    detail::draw_factor(perturb, rng));
      result.trace.records.push_back({machine.id, job.id, q, t, t + duration});
      t += duration;
    }
    free_at[chosen] = t;
    result.assignment[job.id] = machine.id;
  }

  detail::finalize_trace(result.trace);
  return result;
}

// Master-worker baseline against the real backend. The master is a single
// process; each assignment spawns a worker that runs the job's stages through
// the command template, maintains the machine's busy marker, and leaves a
// terminal marker (or a failure marker) behind. Free/busy probing goes
// through the marker files only.
inline DynamicResult dynamic_run_real(const WorkloadInstance& wi, Ms poll_interval_ms,
                                      const SyncNamespace& sync, const RealExecConfig& cfg) {
  // Times are not consulted here; only the structural parts of the instance
  // must be sound.
  if (wi.machines.empty()) throw Error("invalid instance: machines: no machines defined");
  std::set<std::string> ids;
  for (const auto& m : wi.machines)
    if (!detail::valid_id(m.id) || !ids.insert(m.id).second)
      throw Error("invalid instance: machine '" + m.id + "': bad or duplicate id");
  ids.clear();
  for (const auto& j : wi.jobs)
    if (!detail::valid_id(j.id) || !ids.insert(j.id).second)
      throw Error("invalid instance: job '" + j.id + "': bad or duplicate id");
  if (poll_interval_ms < 0) throw Error("poll interval must be >= 0");
  if (cfg.stages < 1) throw Error("stages must be >= 1");

  std::filesystem::create_directories(sync.dir());
  const Ms begin_epoch = detail::epoch_ms_now();

  DynamicResult result;
  std::mutex mutex;
  std::vector<std::thread> workers;
  std::vector<std::string> errors;

  for (const auto& job : wi.jobs) {
    std::string machine;
    while (machine.empty()) {
      for (const auto& m : wi.machines) {
        if (!std::filesystem::exists(sync.busy_file(m.id))) {
          machine = m.id;
          break;
        }
      }
      if (machine.empty())
        std::this_thread::sleep_for(std::chrono::milliseconds(std::max<Ms>(1, poll_interval_ms)));
    }
    if (!detail::create_marker(sync.busy_file(machine)))
      throw Error("busy marker collision for machine " + machine);
    {
      std::lock_guard<std::mutex> lock(mutex);
      result.assignment[job.id] = machine;
    }

    workers.emplace_back([&, machine, job_id = job.id]() {
      bool failed = false;
      for (int q = 1; q <= cfg.stages && !failed; ++q) {
        const std::string command =
            detail::substitute_placeholders(cfg.command_template, job_id, q, sync.run_id);
        const Ms start = detail::epoch_ms_now();
        const int exit_code = detail::run_shell_command(command);
        const Ms end = detail::epoch_ms_now();
        {
          std::lock_guard<std::mutex> lock(mutex);
          result.trace.records.push_back(
              {machine, job_id, q, start - begin_epoch, end - begin_epoch});
        }
        if (exit_code != 0) {
          failed = true;
          try {
            detail::create_marker(sync.failed_file(job_id, q));
          } catch (const std::exception& e) {
            std::lock_guard<std::mutex> lock(mutex);
            errors.push_back(e.what());
          }
          std::lock_guard<std::mutex> lock(mutex);
          result.failed_jobs.push_back(job_id);
        }
      }
      if (!failed) {
        if (!detail::create_marker(sync.done_file(job_id, cfg.stages + 1))) {
          std::lock_guard<std::mutex> lock(mutex);
          errors.push_back("duplicate terminal marker for job " + job_id +
                           " (run id collision?)");
        }
      }
      std::error_code ec;
      std::filesystem::remove(sync.busy_file(machine), ec);
    });
  }

  for (auto& w : workers) w.join();
  const Ms end_epoch = detail::epoch_ms_now();

  if (!errors.empty()) throw Error(errors.front());

  std::sort(result.failed_jobs.begin(), result.failed_jobs.end());
  result.partial = !result.failed_jobs.empty();
  detail::finalize_trace(result.trace);
  result.trace.makespan = end_epoch - begin_epoch;  // master waits for all workers
  return result;
}

// ---------------------------------------------------------------------------
// Run summary: machine-readable JSON plus a human-readable text table.
// ---------------------------------------------------------------------------

struct RunSummary {
  std::string run_id;
  std::string strategy;
  std::string backend;
  Ms makespan_ms = 0;
  Ms predicted_makespan_ms = -1;     // < 0 when not available
  double relative_error_pct = -1.0;  // < 0 when not available
  std::map<std::string, Ms> busy_ms;
  std::map<std::string, double> utilization;
  std::map<std::string, std::string> assignment;
  std::vector<std::string> failed_jobs;
  bool partial = false;
};

inline RunSummary summarize_trace(const ExecutionTrace& trace, std::string run_id,
                                  std::string strategy, std::string backend,
                                  Ms predicted_makespan_ms = -1) {
  RunSummary s;
  s.run_id = std::move(run_id);
  s.strategy = std::move(strategy);
  s.backend = std::move(backend);
  s.makespan_ms = trace.makespan;
  s.busy_ms = trace.busy_ms;
  s.utilization = trace.utilization();
  if (predicted_makespan_ms >= 0 && trace.makespan > 0) {
    s.predicted_makespan_ms = predicted_makespan_ms;
    s.relative_error_pct = relative_error(predicted_makespan_ms, trace.makespan);
  }
  return s;
}

inline std::string serialize_summary_json(const RunSummary& s) {
  nlohmann::json doc;
  doc["run_id"] = s.run_id;
  doc["strategy"] = s.strategy;
  doc["backend"] = s.backend;
  doc["makespan_ms"] = s.makespan_ms;
  if (s.predicted_makespan_ms >= 0) {
    doc["predicted_makespan_ms"] = s.predicted_makespan_ms;
    doc["relative_error_pct"] = s.relative_error_pct;
  }
  doc["busy_ms"] = s.busy_ms;
  doc["utilization"] = s.utilization;
  if (!s.assignment.empty()) doc["assignment"] = s.assignment;
  if (!s.failed_jobs.empty()) doc["failed_jobs"] = s.failed_jobs;
  doc["partial"] = s.partial;
  return doc.dump(2) + "\n";
}

inline std::string serialize_summary_text(const RunSummary& s) {
  char line[160];
  std::string out;
  out += "run:       " + s.run_id + "\n";
  out += "strategy:  " + s.strategy + "\n";
  out += "backend:   " + s.backend + "\n";
  out += "makespan:  " + std::to_string(s.makespan_ms) + " ms\n";
  if (s.predicted_makespan_ms >= 0) {
    std::snprintf(line, sizeof(line), "predicted: %lld ms (relative error %.2f%%)\n",
                  static_cast<long long>(s.predicted_makespan_ms), s.relative_error_pct);
    out += line;
  }
  if (s.partial) out += "partial:   yes (" + std::to_string(s.failed_jobs.size()) + " failed)\n";
  out += "machine utilization:\n";
  for (const auto& [machine, util] : s.utilization) {
    std::snprintf(line, sizeof(line), "  %-12s busy %10lld ms   %6.2f%%\n", machine.c_str(),
                  static_cast<long long>(s.busy_ms.at(machine)), 100.0 * util);
    out += line;
  }
  if (!s.assignment.empty()) {
    out += "assignment:\n";
    for (const auto& [job, machine] : s.assignment) out += "  " + job + " -> " + machine + "\n";
  }
  return out;
}

inline std::string serialize_machine_trace_json(const MachineTrace& t) {
  nlohmann::json doc;
  doc["machine"] = t.machine;
  doc["begin_epoch_ms"] = t.begin_epoch_ms;
  doc["end_epoch_ms"] = t.end_epoch_ms;
  doc["elapsed_ms"] = t.elapsed_ms();
  auto execs = nlohmann::json::array();
  for (const auto& e : t.execs) {
    execs.push_back({{"job", e.job},
                     {"stage", e.stage},
                     {"start_epoch_ms", e.start_epoch_ms},
                     {"end_epoch_ms", e.end_epoch_ms},
                     {"exit_code", e.exit_code}});
  }
  doc["execs"] = execs;
  auto signals = nlohmann::json::array();
  for (const auto& sig : t.signals) {
    signals.push_back({{"job", sig.job}, {"stage", sig.stage}, {"epoch_ms", sig.epoch_ms}});
  }
  doc["signals"] = signals;
  return doc.dump(2) + "\n";
}

}  // namespace stagesched

/*
 * This source code is licensed under the Apache 2.0 license found in the
 * LICENSE file in the root directory of this source tree.
 */
#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "stagesched/util.hpp"

namespace stagesched {

using FeatureVector = std::map<std::string, double>;

struct Machine {
  std::string id;
  std::string machine_type;  // selects the predictor model group
  friend bool operator==(const Machine&, const Machine&) = default;
};

struct Job {
  std::string id;
  int stages = 1;          // operations are stages 1..stages, run in order
  FeatureVector features;  // optional; consumed by the time predictor
  friend bool operator==(const Job&, const Job&) = default;
};

// (job id, stage, machine id) -> duration. A valid instance has a complete
// matrix with strictly positive entries.
class TimeMatrix {
 public:
  using Key = std::tuple<std::string, int, std::string>;

  void set(const std::string& job, int stage, const std::string& machine, Ms duration) {
    entries_[Key{job, stage, machine}] = duration;
  }

  bool contains(const std::string& job, int stage, const std::string& machine) const {
    return entries_.count(Key{job, stage, machine}) > 0;
  }

  Ms at(const std::string& job, int stage, const std::string& machine) const {
    auto it = entries_.find(Key{job, stage, machine});
    if (it == entries_.end()) {
      throw Error("no time entry for (" + job + ", stage " + std::to_string(stage) + ", " +
                  machine + ")");
    }
    return it->second;
  }

  bool empty() const { return entries_.empty(); }
  std::size_t size() const { return entries_.size(); }
  const std::map<Key, Ms>& entries() const { return entries_; }

  friend bool operator==(const TimeMatrix&, const TimeMatrix&) = default;

 private:
  std::map<Key, Ms> entries_;
};

struct WorkloadInstance {
  std::vector<Job> jobs;
  std::vector<Machine> machines;
  TimeMatrix times;

  int stage_count() const { return jobs.empty() ? 0 : jobs.front().stages; }

  const Job* find_job(const std::string& id) const {
    for (const auto& j : jobs)
      if (j.id == id) return &j;
    return nullptr;
  }

  const Machine* find_machine(const std::string& id) const {
    for (const auto& m : machines)
      if (m.id == id) return &m;
    return nullptr;
  }

  friend bool operator==(const WorkloadInstance&, const WorkloadInstance&) = default;
};

struct ScheduleEntry {
  std::string job;
  int stage = 0;
  Ms start = 0;
  Ms duration = 0;
  friend bool operator==(const ScheduleEntry&, const ScheduleEntry&) = default;
};

enum class Optimality { optimal, feasible };

struct Schedule {
  // machine id -> entries sorted by start time; machines without work are
  // simply absent
  std::map<std::string, std::vector<ScheduleEntry>> assignments;
  Ms makespan = 0;
  Optimality optimality = Optimality::feasible;
  Ms lower_bound = 0;
  friend bool operator==(const Schedule&, const Schedule&) = default;
};

enum class StatementKind { begin, exec, wait, signal, end };

struct PlanStatement {
  StatementKind kind = StatementKind::begin;
  std::string job;  // empty for BEGIN/END
  int stage = 0;    // 0 for BEGIN/END

  static PlanStatement begin_plan() { return {StatementKind::begin, "", 0}; }
  static PlanStatement end_plan() { return {StatementKind::end, "", 0}; }
  static PlanStatement exec(std::string job, int stage) {
    return {StatementKind::exec, std::move(job), stage};
  }
  static PlanStatement wait(std::string job, int stage) {
    return {StatementKind::wait, std::move(job), stage};
  }
  static PlanStatement signal(std::string job, int stage) {
    return {StatementKind::signal, std::move(job), stage};
  }

  friend bool operator==(const PlanStatement&, const PlanStatement&) = default;
};

inline std::string format_operand(const std::string& job, int stage) {
  return job + "." + std::to_string(stage);
}

struct ExecutionPlan {
  std::string machine_id;
  std::vector<PlanStatement> statements;
  friend bool operator==(const ExecutionPlan&, const ExecutionPlan&) = default;
};

struct Violation {
  std::string locus;
  std::string message;
  friend bool operator==(const Violation&, const Violation&) = default;
};

struct ValidationReport {
  std::vector<Violation> violations;

  bool ok() const { return violations.empty(); }

  void add(std::string locus, std::string message) {
    violations.push_back({std::move(locus), std::move(message)});
  }

  std::string to_string() const {
    if (ok()) return "ok";
    std::string out;
    for (const auto& v : violations) out += v.locus + ": " + v.message + "\n";
    return out;
  }
};

namespace detail {

// Identifiers end up in CSV cells, plan lines, and marker file names.
inline bool valid_id(const std::string& id) {
  if (id.empty()) return false;
  for (char c : id) {
    if (c == ',' || c == '/' || c == '\\') return false;
    if (std::isspace(static_cast<unsigned char>(c))) return false;
  }
  return true;
}

}  // namespace detail

inline ValidationReport validate_instance(const WorkloadInstance& wi) {
  ValidationReport r;
  if (wi.machines.empty()) r.add("machines", "no machines defined");

  std::set<std::string> machine_ids;
  for (const auto& m : wi.machines) {
    if (!detail::valid_id(m.id))
      r.add("machine '" + m.id + "'", "invalid id");
    else if (!machine_ids.insert(m.id).second)
      r.add("machine " + m.id, "duplicate id");
    if (m.machine_type.empty()) r.add("machine " + m.id, "empty machine_type");
  }

  std::set<std::string> job_ids;
  const int k = wi.stage_count();
  for (const auto& j : wi.jobs) {
    if (!detail::valid_id(j.id))
      r.add("job '" + j.id + "'", "invalid id");
    else if (!job_ids.insert(j.id).second)
      r.add("job " + j.id, "duplicate id");
    if (j.stages < 1) r.add("job " + j.id, "stage count must be >= 1");
    if (j.stages != k) r.add("job " + j.id, "stage count differs across jobs");
    for (const auto& [name, value] : j.features) {
      if (!std::isfinite(value)) r.add("job " + j.id, "non-finite feature " + name);
    }
  }

  if (!machine_ids.empty() && !job_ids.empty()) {
    for (const auto& j : wi.jobs) {
      for (int q = 1; q <= j.stages; ++q) {
        for (const auto& m : wi.machines) {
          const std::string locus = "(" + j.id + ", stage " + std::to_string(q) + ", " + m.id + ")";
          if (!wi.times.contains(j.id, q, m.id))
            r.add(locus, "incomplete time matrix");
          else if (wi.times.at(j.id, q, m.id) <= 0)
            r.add(locus, "non-positive duration");
        }
      }
    }
  }

  for (const auto& [key, value] : wi.times.entries()) {
    const auto& [job, stage, machine] = key;
    const Job* j = wi.find_job(job);
    const bool known = j != nullptr && stage >= 1 && stage <= j->stages &&
                       wi.find_machine(machine) != nullptr;
    if (!known) {
      r.add("(" + job + ", stage " + std::to_string(stage) + ", " + machine + ")",
            "unknown time entry");
    }
    (void)value;
  }

  return r;
}

// Pure recomputation from the entries; ignores the stored makespan field.
inline Ms schedule_makespan(const Schedule& s) {
  bool any = false;
  Ms makespan = 0;
  for (const auto& [machine, entries] : s.assignments) {
    (void)machine;
    for (const auto& e : entries) {
      any = true;
      makespan = std::max(makespan, e.start + e.duration);
    }
  }
  if (!any) throw Error("empty schedule");
  return makespan;
}

// Verifies machine exclusivity, job precedence, duration fidelity against the
// time matrix, and exactly-once coverage of every operation.
inline ValidationReport check_schedule(const WorkloadInstance& wi, const Schedule& s) {
  ValidationReport r;
  std::map<std::pair<std::string, int>, std::pair<Ms, Ms>> op_window;
  std::set<std::pair<std::string, int>> seen;

  for (const auto& [machine, entries] : s.assignments) {
    if (!wi.find_machine(machine)) {
      r.add("machine " + machine, "unknown machine");
      continue;
    }
    Ms prev_start = std::numeric_limits<Ms>::min();
    Ms prev_end = 0;
    bool first = true;
    for (const auto& e : entries) {
      const std::string locus = machine + ":" + format_operand(e.job, e.stage);
      const Job* job = wi.find_job(e.job);
      if (!job) {
        r.add(locus, "unknown job");
        continue;
      }
      if (e.stage < 1 || e.stage > job->stages) {
        r.add(locus, "stage out of range");
        continue;
      }
      if (e.start < 0) r.add(locus, "negative start time");
      if (!wi.times.contains(e.job, e.stage, machine)) {
        r.add(locus, "no time entry for this machine");
      } else if (e.duration != wi.times.at(e.job, e.stage, machine)) {
        r.add(locus, "duration mismatch: scheduled " + std::to_string(e.duration) +
                         " ms, matrix has " +
                         std::to_string(wi.times.at(e.job, e.stage, machine)) + " ms");
      }
      if (!first && e.start < prev_start) r.add(locus, "entries not sorted by start");
      if (!first && e.start < prev_end) r.add(locus, "machine overlap");
      prev_start = std::max(prev_start, e.start);
      prev_end = std::max(prev_end, e.start + e.duration);
      first = false;
      if (!seen.insert({e.job, e.stage}).second)
        r.add(locus, "operation scheduled twice");
      else
        op_window[{e.job, e.stage}] = {e.start, e.start + e.duration};
    }
  }

  for (const auto& j : wi.jobs) {
    for (int q = 1; q <= j.stages; ++q) {
      auto it = op_window.find({j.id, q});
      if (it == op_window.end()) {
        if (!seen.count({j.id, q})) r.add(format_operand(j.id, q), "operation unscheduled");
        continue;
      }
      if (q > 1) {
        auto prev = op_window.find({j.id, q - 1});
        if (prev != op_window.end() && it->second.first < prev->second.second) {
          r.add(format_operand(j.id, q),
                "precedence violation: starts at " + std::to_string(it->second.first) +
                    " ms before stage " + std::to_string(q - 1) + " ends at " +
                    std::to_string(prev->second.second) + " ms");
        }
      }
    }
  }

  return r;
}

// Structural legality of a single plan. An EXEC of stage q > 1 needs either an
// immediately preceding WAIT on the same operand or an earlier EXEC of stage
// q - 1 in the same plan (same-machine sequencing carries the precedence).
inline ValidationReport check_plan(const ExecutionPlan& plan, int stage_count) {
  ValidationReport r;
  const std::string locus = "plan " + plan.machine_id;
  const auto& st = plan.statements;
  if (st.empty()) {
    r.add(locus, "empty plan");
    return r;
  }
  if (st.front().kind != StatementKind::begin) r.add(locus, "first statement must be BEGIN");
  if (st.back().kind != StatementKind::end) r.add(locus, "last statement must be END");

  int begins = 0, ends = 0;
  std::set<std::pair<std::string, int>> executed;
  for (std::size_t i = 0; i < st.size(); ++i) {
    const auto& s = st[i];
    const std::string op_locus = locus + " statement " + std::to_string(i + 1);
    switch (s.kind) {
      case StatementKind::begin:
        ++begins;
        if (!s.job.empty() || s.stage != 0) r.add(op_locus, "BEGIN carries no operand");
        break;
      case StatementKind::end:
        ++ends;
        if (!s.job.empty() || s.stage != 0) r.add(op_locus, "END carries no operand");
        break;
      case StatementKind::exec: {
        if (!detail::valid_id(s.job) || s.stage < 1 || s.stage > stage_count) {
          r.add(op_locus, "bad EXEC operand " + format_operand(s.job, s.stage));
          break;
        }
        if (s.stage > 1) {
          // Stage order within a plan carries the precedence; otherwise a
          // WAIT must guard the EXEC.
          const bool waited = i > 0 && st[i - 1].kind == StatementKind::wait &&
                              st[i - 1].job == s.job && st[i - 1].stage == s.stage;
          const bool local_pred = executed.count({s.job, s.stage - 1}) > 0;
          if (!waited && !local_pred)
            r.add(op_locus, "EXEC " + format_operand(s.job, s.stage) +
                                " has neither a preceding WAIT nor a local predecessor");
        }
        executed.insert({s.job, s.stage});
        break;
      }
      case StatementKind::wait: {
        if (!detail::valid_id(s.job) || s.stage < 2 || s.stage > stage_count) {
          r.add(op_locus, "bad WAIT operand " + format_operand(s.job, s.stage));
          break;
        }
        const bool followed = i + 1 < st.size() && st[i + 1].kind == StatementKind::exec &&
                              st[i + 1].job == s.job && st[i + 1].stage == s.stage;
        if (!followed)
          r.add(op_locus,
                "WAIT " + format_operand(s.job, s.stage) + " is not followed by its EXEC");
        break;
      }
      case StatementKind::signal: {
        if (!detail::valid_id(s.job) || s.stage < 2 || s.stage > stage_count) {
          r.add(op_locus, "bad SIGNAL operand " + format_operand(s.job, s.stage));
          break;
        }
        const bool preceded = i > 0 && st[i - 1].kind == StatementKind::exec &&
                              st[i - 1].job == s.job && st[i - 1].stage == s.stage - 1;
        if (!preceded)
          r.add(op_locus, "SIGNAL " + format_operand(s.job, s.stage) +
                              " is not preceded by EXEC " +
                              format_operand(s.job, s.stage - 1));
        break;
      }
    }
  }
  if (begins != 1) r.add(locus, "plan must contain exactly one BEGIN");
  if (ends != 1) r.add(locus, "plan must contain exactly one END");
  return r;
}

// Cross-plan legality: per-plan structure, unique machines, WAIT/SIGNAL
// pairing, and EXEC coverage of exactly the instance's operation set.
inline ValidationReport check_plan_set(const std::vector<ExecutionPlan>& plans,
                                       const WorkloadInstance& wi) {
  ValidationReport r;
  const int k = wi.stage_count();

  std::set<std::string> plan_machines;
  std::map<std::pair<std::string, int>, int> exec_count, wait_count, signal_count;
  for (const auto& p : plans) {
    if (!wi.find_machine(p.machine_id)) r.add("plan " + p.machine_id, "unknown machine");
    if (!plan_machines.insert(p.machine_id).second)
      r.add("plan " + p.machine_id, "duplicate plan for machine");
    auto pr = check_plan(p, k);
    r.violations.insert(r.violations.end(), pr.violations.begin(), pr.violations.end());
    for (const auto& s : p.statements) {
      if (s.kind == StatementKind::exec) ++exec_count[{s.job, s.stage}];
      if (s.kind == StatementKind::wait) ++wait_count[{s.job, s.stage}];
      if (s.kind == StatementKind::signal) ++signal_count[{s.job, s.stage}];
    }
  }

  for (const auto& [op, count] : wait_count) {
    (void)count;
    const int signals = signal_count.count(op) ? signal_count.at(op) : 0;
    if (signals == 0)
      r.add(format_operand(op.first, op.second), "dangling wait: no SIGNAL for this operand");
  }
  for (const auto& [op, count] : signal_count) {
    if (count > 1) r.add(format_operand(op.first, op.second), "operand signaled more than once");
  }

  for (const auto& j : wi.jobs) {
    for (int q = 1; q <= j.stages; ++q) {
      auto it = exec_count.find({j.id, q});
      if (it == exec_count.end())
        r.add(format_operand(j.id, q), "operation missing from plans");
      else if (it->second > 1)
        r.add(format_operand(j.id, q), "operation executed more than once");
    }
  }
  for (const auto& [op, count] : exec_count) {
    (void)count;
    const Job* j = wi.find_job(op.first);
    if (!j || op.second < 1 || op.second > j->stages)
      r.add(format_operand(op.first, op.second), "unknown operation");
  }

  return r;
}

}  // namespace stagesched

/*
 * This source code is licensed under the Apache 2.0 license found in the
 * LICENSE file in the root directory of this source tree.
 */
#pragma once

#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "stagesched/io.hpp"
#include "stagesched/model.hpp"

namespace stagesched {

// Compiles a checked schedule into one plan per machine. Statements follow
// machine order by start time: WAIT precedes every EXEC of stage q > 1, and
// SIGNAL for stage q + 1 follows every EXEC of stage q < K. Machines with no
// assigned work get an empty BEGIN/END frame.
inline std::vector<ExecutionPlan> compile_fjsp_plans(const WorkloadInstance& wi,
                                                     const Schedule& schedule) {
  auto report = check_schedule(wi, schedule);
  if (!report.ok())
    throw Error("invalid schedule: " + report.violations.front().locus + ": " +
                report.violations.front().message);
  const int k = wi.stage_count();

  std::vector<std::string> machine_ids;
  for (const auto& m : wi.machines) machine_ids.push_back(m.id);
  std::sort(machine_ids.begin(), machine_ids.end());

  std::vector<ExecutionPlan> plans;
  plans.reserve(machine_ids.size());
  for (const auto& machine : machine_ids) {
    ExecutionPlan plan{machine, {}};
    plan.statements.push_back(PlanStatement::begin_plan());
    auto it = schedule.assignments.find(machine);
    if (it != schedule.assignments.end()) {
      for (const auto& e : it->second) {
        if (e.stage > 1) plan.statements.push_back(PlanStatement::wait(e.job, e.stage));
        plan.statements.push_back(PlanStatement::exec(e.job, e.stage));
        if (e.stage < k) plan.statements.push_back(PlanStatement::signal(e.job, e.stage + 1));
      }
    }
    plan.statements.push_back(PlanStatement::end_plan());
    plans.push_back(std::move(plan));
  }
  return plans;
}

struct GreedyResult {
  std::vector<ExecutionPlan> plans;                            // one per machine, id-sorted
  std::map<std::string, std::string> assignment;               // job -> machine
  std::map<std::string, std::map<std::string, Ms>> job_costs;  // job -> machine -> total time
  Ms predicted_makespan = 0;
};

// Whole-job assignment baseline. W[job][machine] is the job's total time on
// that machine. Assignment proceeds in rounds: within a round every machine
// is available once; repeatedly the globally cheapest (job, fastest available
// machine) pair is committed until jobs or machines run out, then the round
// restarts with all machines available. Ties break lexicographically. The
// resulting plans are pure EXEC sequences without WAIT/SIGNAL.
inline GreedyResult greedy_plans(const WorkloadInstance& wi) {
  auto report = validate_instance(wi);
  if (!report.ok())
    throw Error("invalid instance: " + report.violations.front().locus + ": " +
                report.violations.front().message);
  const int k = wi.stage_count();

  std::vector<std::string> job_ids, machine_ids;
  for (const auto& j : wi.jobs) job_ids.push_back(j.id);
  for (const auto& m : wi.machines) machine_ids.push_back(m.id);
  std::sort(job_ids.begin(), job_ids.end());
  std::sort(machine_ids.begin(), machine_ids.end());

  GreedyResult result;
  for (const auto& job : job_ids) {
    for (const auto& machine : machine_ids) {
      Ms total = 0;
      for (int q = 1; q <= k; ++q) total += wi.times.at(job, q, machine);
      result.job_costs[job][machine] = total;
    }
  }

  std::vector<std::string> unassigned = job_ids;
  std::map<std::string, std::vector<std::string>> committed;  // machine -> jobs in commit order
  std::map<std::string, Ms> load;

  while (!unassigned.empty()) {
    std::set<std::string> available(machine_ids.begin(), machine_ids.end());
    while (!unassigned.empty() && !available.empty()) {
      Ms best_cost = 0;
      std::string best_job, best_machine;
      bool have = false;
      for (const auto& job : unassigned) {
        for (const auto& machine : available) {
          const Ms cost = result.job_costs[job][machine];
          if (!have || cost < best_cost ||
              (cost == best_cost &&
               (job < best_job || (job == best_job && machine < best_machine)))) {
            have = true;
            best_cost = cost;
            best_job = job;
            best_machine = machine;
          }
        }
      }
      result.assignment[best_job] = best_machine;
      committed[best_machine].push_back(best_job);
      load[best_machine] += best_cost;
      unassigned.erase(std::find(unassigned.begin(), unassigned.end(), best_job));
      available.erase(best_machine);
    }
  }

  for (const auto& [machine, total] : load)
    result.predicted_makespan = std::max(result.predicted_makespan, total);

  for (const auto& machine : machine_ids) {
    ExecutionPlan plan{machine, {}};
    plan.statements.push_back(PlanStatement::begin_plan());
    auto it = committed.find(machine);
    if (it != committed.end()) {
      for (const auto& job : it->second)
        for (int q = 1; q <= k; ++q) plan.statements.push_back(PlanStatement::exec(job, q));
    }
    plan.statements.push_back(PlanStatement::end_plan());
    result.plans.push_back(std::move(plan));
  }
  return result;
}

inline Ms predicted_makespan(const Schedule& schedule) { return schedule_makespan(schedule); }

// ---------------------------------------------------------------------------
// Run manifest: the handoff between plan generation and execution. Plan and
// workload paths are stored relative to the manifest's own directory.
// ---------------------------------------------------------------------------

struct ManifestMachine {
  std::string id;
  std::string machine_type;
  std::string plan_file;
  friend bool operator==(const ManifestMachine&, const ManifestMachine&) = default;
};

struct RunManifest {
  std::string run_id;
  std::string strategy;  // "fjsp" | "greedy"
  int stages = 0;
  std::vector<std::string> stage_names;
  std::vector<ManifestMachine> machines;
  std::string workload_file;  // resolved workload (explicit times); may be empty
  std::string schedule_file;  // fjsp only; empty otherwise
  Ms predicted_makespan_ms = 0;
  std::string solver_status;  // "optimal" | "feasible" | empty for greedy
  Ms lower_bound_ms = 0;
  friend bool operator==(const RunManifest&, const RunManifest&) = default;
};

inline std::string serialize_manifest(const RunManifest& m) {
  nlohmann::json doc;
  doc["run_id"] = m.run_id;
  doc["strategy"] = m.strategy;
  doc["stages"] = m.stages;
  doc["stage_names"] = m.stage_names;
  auto machines = nlohmann::json::array();
  for (const auto& mm : m.machines) {
    machines.push_back(
        {{"id", mm.id}, {"machine_type", mm.machine_type}, {"plan_file", mm.plan_file}});
  }
  doc["machines"] = machines;
  doc["workload_file"] = m.workload_file;
  doc["schedule_file"] = m.schedule_file;
  doc["predicted_makespan_ms"] = m.predicted_makespan_ms;
  doc["solver_status"] = m.solver_status;
  doc["lower_bound_ms"] = m.lower_bound_ms;
  return doc.dump(2) + "\n";
}

inline RunManifest parse_manifest(const std::string& text,
                                  const std::string& origin = "<manifest>") {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(origin + ": " + e.what());
  }
  RunManifest m;
  try {
    m.run_id = doc.at("run_id").get<std::string>();
    m.strategy = doc.at("strategy").get<std::string>();
    m.stages = doc.at("stages").get<int>();
    m.stage_names = doc.at("stage_names").get<std::vector<std::string>>();
    for (const auto& mm : doc.at("machines")) {
      m.machines.push_back({mm.at("id").get<std::string>(),
                            mm.at("machine_type").get<std::string>(),
                            mm.at("plan_file").get<std::string>()});
    }
    m.workload_file = doc.at("workload_file").get<std::string>();
    m.schedule_file = doc.at("schedule_file").get<std::string>();
    m.predicted_makespan_ms = doc.at("predicted_makespan_ms").get<Ms>();
    m.solver_status = doc.at("solver_status").get<std::string>();
    m.lower_bound_ms = doc.at("lower_bound_ms").get<Ms>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(origin + ": " + e.what());
  }
  return m;
}

inline RunManifest load_manifest(const std::filesystem::path& path) {
  return parse_manifest(read_text_file(path), path.string());
}

inline void save_manifest(const std::filesystem::path& path, const RunManifest& m) {
  write_text_file(path, serialize_manifest(m));
}

// Writes `<run_id>.<machine_id>.plan` files under out_dir and returns the
// manifest machine entries referencing them.
inline std::vector<ManifestMachine> write_plan_files(const std::filesystem::path& out_dir,
                                                     const std::string& run_id,
                                                     const WorkloadInstance& wi,
                                                     const std::vector<ExecutionPlan>& plans) {
  std::vector<ManifestMachine> entries;
  for (const auto& plan : plans) {
    const Machine* machine = wi.find_machine(plan.machine_id);
    const std::string file = run_id + "." + plan.machine_id + ".plan";
    save_plan(out_dir / file, plan);
    entries.push_back({plan.machine_id, machine ? machine->machine_type : "", file});
  }
  return entries;
}

}  // namespace stagesched

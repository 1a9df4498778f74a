/*
 * This source code is licensed under the Apache 2.0 license found in the
 * LICENSE file in the root directory of this source tree.
 */
#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "stagesched/model.hpp"

namespace stagesched {

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

inline void write_text_file(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << content;
  if (!out) throw Error("write failed for " + path.string());
}

// ---------------------------------------------------------------------------
// Workload file: JSON document with `machines`, `jobs`, `stages`, and an
// optional `times` section. Times may be omitted and filled later by the
// predictor. Serialization is canonical (sorted keys) and round-trips.
// ---------------------------------------------------------------------------

inline std::string serialize_workload(const WorkloadInstance& wi) {
  nlohmann::json doc;
  doc["stages"] = wi.stage_count();

  auto machines = nlohmann::json::array();
  for (const auto& m : wi.machines) {
    machines.push_back({{"id", m.id}, {"machine_type", m.machine_type}});
  }
  doc["machines"] = machines;

  auto jobs = nlohmann::json::array();
  for (const auto& j : wi.jobs) {
    nlohmann::json entry;
    entry["id"] = j.id;
    if (!j.features.empty()) entry["features"] = j.features;
    jobs.push_back(entry);
  }
  doc["jobs"] = jobs;

  if (!wi.times.empty()) {
    nlohmann::json times = nlohmann::json::object();
    for (const auto& [key, value] : wi.times.entries()) {
      const auto& [job, stage, machine] = key;
      times[job][std::to_string(stage)][machine] = value;
    }
    doc["times"] = times;
  }

  return doc.dump(2) + "\n";
}

inline WorkloadInstance parse_workload(const std::string& text,
                                       const std::string& origin = "<workload>") {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(origin + ": " + e.what());
  }
  if (!doc.is_object()) throw Error(origin + ": top level must be an object");
  for (const char* key : {"machines", "jobs", "stages"}) {
    if (!doc.contains(key)) throw Error(origin + ": missing section '" + key + "'");
  }
  if (!doc["stages"].is_number_integer() || doc["stages"].get<long long>() < 0)
    throw Error(origin + ": 'stages' must be a non-negative integer");
  const int stages = doc["stages"].get<int>();

  WorkloadInstance wi;
  if (!doc["machines"].is_array()) throw Error(origin + ": 'machines' must be an array");
  for (const auto& m : doc["machines"]) {
    if (!m.is_object() || !m.contains("id") || !m["id"].is_string() ||
        !m.contains("machine_type") || !m["machine_type"].is_string())
      throw Error(origin + ": each machine needs string 'id' and 'machine_type'");
    wi.machines.push_back({m["id"].get<std::string>(), m["machine_type"].get<std::string>()});
  }

  if (!doc["jobs"].is_array()) throw Error(origin + ": 'jobs' must be an array");
  for (const auto& j : doc["jobs"]) {
    if (!j.is_object() || !j.contains("id") || !j["id"].is_string())
      throw Error(origin + ": each job needs a string 'id'");
    Job job;
    job.id = j["id"].get<std::string>();
    job.stages = stages;
    if (j.contains("features")) {
      if (!j["features"].is_object())
        throw Error(origin + ": job " + job.id + ": 'features' must be an object");
      for (const auto& [name, value] : j["features"].items()) {
        if (!value.is_number())
          throw Error(origin + ": job " + job.id + ": feature '" + name + "' must be numeric");
        job.features[name] = value.get<double>();
      }
    }
    wi.jobs.push_back(std::move(job));
  }
  if (!wi.jobs.empty() && stages < 1)
    throw Error(origin + ": 'stages' must be >= 1 when jobs are present");

  if (doc.contains("times")) {
    if (!doc["times"].is_object()) throw Error(origin + ": 'times' must be an object");
    for (const auto& [job, per_stage] : doc["times"].items()) {
      if (!per_stage.is_object())
        throw Error(origin + ": times for job " + job + " must be an object keyed by stage");
      for (const auto& [stage_key, per_machine] : per_stage.items()) {
        long long stage = 0;
        if (!detail::parse_int(stage_key, stage) || stage < 1)
          throw Error(origin + ": bad stage key '" + stage_key + "' for job " + job);
        if (!per_machine.is_object())
          throw Error(origin + ": times for " + job + "." + stage_key + " must map machines");
        for (const auto& [machine, ms] : per_machine.items()) {
          if (!ms.is_number_integer())
            throw Error(origin + ": time for (" + job + ", " + stage_key + ", " + machine +
                        ") must be an integer millisecond count");
          wi.times.set(job, static_cast<int>(stage), machine, ms.get<Ms>());
        }
      }
    }
  }

  return wi;
}

inline WorkloadInstance load_workload(const std::filesystem::path& path) {
  return parse_workload(read_text_file(path), path.string());
}

inline void save_workload(const std::filesystem::path& path, const WorkloadInstance& wi) {
  write_text_file(path, serialize_workload(wi));
}

// ---------------------------------------------------------------------------
// Plan file: one statement per line, bit-exact contract between the plan
// compiler and the executor.
//   BEGIN | EXEC <job>.<stage> | WAIT <job>.<stage> | SIGNAL <job>.<stage> | END
// ---------------------------------------------------------------------------

inline std::string serialize_plan(const ExecutionPlan& plan) {
  std::string out;
  for (const auto& s : plan.statements) {
    switch (s.kind) {
      case StatementKind::begin:
        out += "BEGIN\n";
        break;
      case StatementKind::end:
        out += "END\n";
        break;
      case StatementKind::exec:
        out += "EXEC " + format_operand(s.job, s.stage) + "\n";
        break;
      case StatementKind::wait:
        out += "WAIT " + format_operand(s.job, s.stage) + "\n";
        break;
      case StatementKind::signal:
        out += "SIGNAL " + format_operand(s.job, s.stage) + "\n";
        break;
    }
  }
  return out;
}

inline ExecutionPlan parse_plan(std::string machine_id, const std::string& text,
                                const std::string& origin = "<plan>") {
  ExecutionPlan plan{std::move(machine_id), {}};
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string where = origin + ":" + std::to_string(lineno);
    if (line == "BEGIN") {
      plan.statements.push_back(PlanStatement::begin_plan());
      continue;
    }
    if (line == "END") {
      plan.statements.push_back(PlanStatement::end_plan());
      continue;
    }
    const std::size_t space = line.find(' ');
    if (space == std::string::npos) throw Error(where + ": unknown statement '" + line + "'");
    const std::string keyword = line.substr(0, space);
    const std::string operand = line.substr(space + 1);
    const std::size_t dot = operand.rfind('.');
    long long stage = 0;
    if (dot == std::string::npos || dot == 0 ||
        !detail::parse_int(operand.substr(dot + 1), stage) || stage < 1)
      throw Error(where + ": bad operand '" + operand + "', expected <job>.<stage>");
    const std::string job = operand.substr(0, dot);
    if (keyword == "EXEC")
      plan.statements.push_back(PlanStatement::exec(job, static_cast<int>(stage)));
    else if (keyword == "WAIT")
      plan.statements.push_back(PlanStatement::wait(job, static_cast<int>(stage)));
    else if (keyword == "SIGNAL")
      plan.statements.push_back(PlanStatement::signal(job, static_cast<int>(stage)));
    else
      throw Error(where + ": unknown statement '" + keyword + "'");
  }
  if (plan.statements.empty()) throw Error(origin + ": empty plan file");
  return plan;
}

inline ExecutionPlan load_plan(const std::filesystem::path& path, std::string machine_id) {
  return parse_plan(std::move(machine_id), read_text_file(path), path.string());
}

inline void save_plan(const std::filesystem::path& path, const ExecutionPlan& plan) {
  write_text_file(path, serialize_plan(plan));
}

// ---------------------------------------------------------------------------
// Schedule file: CSV with a fixed header. The file carries entries only;
// parsing recomputes the makespan and leaves optimality/lower bound at their
// defaults (those travel in the run manifest).
// ---------------------------------------------------------------------------

inline constexpr const char* kScheduleCsvHeader = "machine,job,stage,start_ms,duration_ms";

inline std::string serialize_schedule_csv(const Schedule& s) {
  std::string out = std::string(kScheduleCsvHeader) + "\n";
  for (const auto& [machine, entries] : s.assignments) {
    for (const auto& e : entries) {
      out += machine + "," + e.job + "," + std::to_string(e.stage) + "," +
             std::to_string(e.start) + "," + std::to_string(e.duration) + "\n";
    }
  }
  return out;
}

inline Schedule parse_schedule_csv(const std::string& text,
                                   const std::string& origin = "<schedule>") {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kScheduleCsvHeader)
    throw Error(origin + ": expected header '" + kScheduleCsvHeader + "'");
  Schedule s;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto fields = detail::split(line, ',');
    if (fields.size() != 5)
      throw Error(origin + ":" + std::to_string(lineno) + ": expected 5 fields");
    long long stage = 0, start = 0, duration = 0;
    if (!detail::parse_int(fields[2], stage) || !detail::parse_int(fields[3], start) ||
        !detail::parse_int(fields[4], duration))
      throw Error(origin + ":" + std::to_string(lineno) + ": bad numeric field");
    s.assignments[fields[0]].push_back(
        {fields[1], static_cast<int>(stage), static_cast<Ms>(start), static_cast<Ms>(duration)});
    s.makespan = std::max(s.makespan, static_cast<Ms>(start + duration));
  }
  return s;
}

inline Schedule load_schedule_csv(const std::filesystem::path& path) {
  return parse_schedule_csv(read_text_file(path), path.string());
}

inline void save_schedule_csv(const std::filesystem::path& path, const Schedule& s) {
  write_text_file(path, serialize_schedule_csv(s));
}

}  // namespace stagesched
